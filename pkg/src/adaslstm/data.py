"""Dataset ingestion, batching, and synthetic corpus generators."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .embedding import PAD_ID, Vocab, encode_chars
from .errors import DataFormatError

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Whitespace plus punctuation splitting; case is preserved."""
    return _TOKEN_RE.findall(text)


@dataclass
class DatasetRecord:
    label: str
    text: str
    tokens: list[str]


@dataclass
class TextDataset:
    """Parsed records plus the sorted label inventory they draw from."""

    records: list[DatasetRecord]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.labels:
            self.labels = sorted({r.label for r in self.records})
        self.label_to_id = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.records)

    def sentences(self) -> list[list[str]]:
        return [r.tokens for r in self.records]


def _record(label: str, text: str, where: str) -> DatasetRecord:
    tokens = tokenize(text)
    if not tokens:
        raise DataFormatError(f"{where}: text is empty after tokenization")
    return DatasetRecord(label=label, text=text, tokens=tokens)


def ingest(path: str, fmt: str) -> TextDataset:
    """Parse a labeled text file.  Malformed rows fail with their line number.

    tsv/csv rows are (label, text); jsonl rows are objects with "label" and
    "text" keys.  Record order follows the file, so two reads of the same
    file produce identical datasets.
    """
    records = []
    if fmt == "tsv":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t", 1)
                if len(parts) != 2:
                    raise DataFormatError(f"{path}:{lineno}: expected label<TAB>text")
                records.append(_record(parts[0], parts[1], f"{path}:{lineno}"))
    elif fmt == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) < 2:
                    raise DataFormatError(f"{path}:{lineno}: expected label,text columns")
                records.append(_record(row[0], row[1], f"{path}:{lineno}"))
    elif fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
                if not isinstance(obj, dict) or "label" not in obj or "text" not in obj:
                    raise DataFormatError(f'{path}:{lineno}: object needs "label" and "text"')
                records.append(_record(str(obj["label"]), str(obj["text"]), f"{path}:{lineno}"))
    else:
        raise DataFormatError(f"unknown data format {fmt!r}; expected tsv, csv, or jsonl")
    if not records:
        raise DataFormatError(f"{path}: no records")
    return TextDataset(records)


def write_tsv(dataset: TextDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in dataset.records:
            fh.write(f"{r.label}\t{r.text}\n")


def split_dataset(dataset: TextDataset, fraction: float, rng: np.random.Generator):
    """Random split into (rest, held-out fraction); label set is shared."""
    n = len(dataset)
    n_held = max(1, int(round(n * fraction)))
    if n_held >= n:
        raise ValueError(f"held-out fraction {fraction} leaves no training data")
    order = rng.permutation(n)
    held = {int(i) for i in order[:n_held]}
    rest = [r for i, r in enumerate(dataset.records) if i not in held]
    out = [r for i, r in enumerate(dataset.records) if i in held]
    return (TextDataset(rest, labels=dataset.labels),
            TextDataset(out, labels=dataset.labels))


def fold_indices(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Disjoint covering folds; sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise ValueError(f"dataset of {n} records cannot fill {k} folds")
    order = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(order, k)]


@dataclass
class TokenBatch:
    """One padded batch.  Padding positions carry PAD ids and zero lengths."""

    word_ids: np.ndarray   # [B, n] int64
    char_ids: np.ndarray   # [B, n, T] int64
    char_lens: np.ndarray  # [B, n] int64
    lengths: np.ndarray    # [B] int64
    labels: np.ndarray | None
    tokens: list[list[str]]

    @property
    def size(self) -> int:
        return self.word_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.word_ids.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.max_len)[None, :] < self.lengths[:, None]


def encode_batch(records: list[DatasetRecord], vocab: Vocab, label_to_id: dict | None,
                 max_word_len: int) -> TokenBatch:
    b = len(records)
    n = max(len(r.tokens) for r in records)
    t = max(3, min(max((len(tok) for r in records for tok in r.tokens), default=3),
                   max_word_len))
    word_ids = np.full((b, n), PAD_ID, dtype=np.int64)
    char_ids = np.zeros((b, n, t), dtype=np.int64)
    char_lens = np.zeros((b, n), dtype=np.int64)
    lengths = np.zeros(b, dtype=np.int64)
    for i, r in enumerate(records):
        ids = vocab.encode(r.tokens)
        word_ids[i, :len(ids)] = ids
        lengths[i] = len(ids)
        for j, tok in enumerate(r.tokens):
            cs = encode_chars(tok, t)
            char_ids[i, j, :len(cs)] = cs
            char_lens[i, j] = len(cs)
    labels = None
    if label_to_id is not None:
        labels = np.array([label_to_id[r.label] for r in records], dtype=np.int64)
    return TokenBatch(word_ids=word_ids, char_ids=char_ids, char_lens=char_lens,
                      lengths=lengths, labels=labels,
                      tokens=[list(r.tokens) for r in records])


def make_batches(dataset: TextDataset, vocab: Vocab, batch_size: int, max_word_len: int,
                 rng: np.random.Generator | None = None,
                 max_len: int = 0) -> list[TokenBatch]:
    """Batch the dataset in order, or shuffled when an rng is given.

    max_len > 0 truncates sentences to that many leading tokens before
    batching; 0 keeps everything.
    """
    records = dataset.records
    if max_len > 0:
        records = [DatasetRecord(r.label, r.text, r.tokens[:max_len]) for r in records]
    order = rng.permutation(len(records)) if rng is not None else np.arange(len(records))
    out = []
    for start in range(0, len(records), batch_size):
        chunk = [records[int(i)] for i in order[start:start + batch_size]]
        out.append(encode_batch(chunk, vocab, dataset.label_to_id, max_word_len))
    return out


# --- synthetic corpora -----------------------------------------------------
#
# The generators below produce the fixtures the test suite trains on: a
# linearly solvable trigger task, a tiny memorization set, and a six-class
# question-style corpus sized like TREC (5,952 train / 500 test).  All are
# deterministic in the seed.

_SYLLABLES = ["ba", "do", "mi", "ra", "ke", "lu", "sa", "ti", "no", "ve",
              "pol", "gar", "nim", "tor", "fes", "hul", "zed", "cra", "wis", "ombre"]


def _word_bank(rng: np.random.Generator, count: int, parts: int) -> list[str]:
    seen: dict[str, None] = {}
    while len(seen) < count:
        w = "".join(rng.choice(_SYLLABLES) for _ in range(parts))
        seen.setdefault(w, None)
    return list(seen)


def make_trigger_corpus(seed: int = 13, n_train: int = 300, n_test: int = 200):
    """Binary task: the label is the presence of one rare token."""
    rng = np.random.default_rng(seed)
    fillers = _word_bank(rng, 40, 2)
    trigger = "quixolvent"

    def sample(n: int) -> TextDataset:
        records = []
        for i in range(n):
            length = int(rng.integers(5, 11))
            words = list(rng.choice(fillers, size=length))
            if i % 2 == 0:
                words[int(rng.integers(0, length))] = trigger
                label = "hit"
            else:
                label = "miss"
            records.append(_record(label, " ".join(words), "synthetic"))
        return TextDataset(records, labels=["hit", "miss"])

    return sample(n_train), sample(n_test)


def make_memorization_corpus(seed: int = 13, n: int = 50) -> TextDataset:
    """Tiny set with random labels; only memorization can fit it."""
    rng = np.random.default_rng(seed)
    bank = _word_bank(rng, 60, 2)
    records = []
    for _ in range(n):
        length = int(rng.integers(6, 11))
        words = rng.choice(bank, size=length)
        label = "a" if rng.random() < 0.5 else "b"
        records.append(_record(label, " ".join(words), "synthetic"))
    return TextDataset(records, labels=["a", "b"])


_QUESTION_CLASSES = ["entity", "person", "place", "number", "reason", "order"]


def make_question_corpus(seed: int = 13, n_train: int = 5952, n_test: int = 500):
    """Six-class question-style corpus sized like the TREC split.

    Five classes are cued by class-specific lead words and content vocabulary.
    A slice of the last two classes is instead distinguished only by the
    relative order of two marker tokens kept far apart, so encoders blind to
    word order cannot fully separate them.
    """
    rng = np.random.default_rng(seed)
    fillers = _word_bank(rng, 60, 2)
    cues = [_word_bank(rng, 3, 3) for _ in _QUESTION_CLASSES]
    content = [_word_bank(rng, 20, 3) for _ in _QUESTION_CLASSES]
    mark_a, mark_b = "krazelund", "vortishal"

    def lexical(cls: int) -> list[str]:
        words = [str(rng.choice(cues[cls]))]
        n_content = int(rng.integers(3, 6))
        n_fill = int(rng.integers(4, 8))
        body = list(rng.choice(content[cls], size=n_content))
        body += list(rng.choice(fillers, size=n_fill))
        rng.shuffle(body)
        return words + body + ["?"]

    def ordered(cls: int) -> list[str]:
        pool = content[4] + content[5]
        first, second = (mark_a, mark_b) if cls == 4 else (mark_b, mark_a)
        prefix = list(rng.choice(pool + fillers, size=int(rng.integers(1, 5))))
        gap = list(rng.choice(pool + fillers, size=int(rng.integers(6, 10))))
        suffix = list(rng.choice(pool + fillers, size=int(rng.integers(1, 5))))
        return prefix + [first] + gap + [second] + suffix + ["?"]

    def sample(n: int) -> TextDataset:
        records = []
        for i in range(n):
            cls = i % len(_QUESTION_CLASSES)
            if cls >= 4 and rng.random() < 0.2:
                words = ordered(cls)
            else:
                words = lexical(cls)
            records.append(_record(_QUESTION_CLASSES[cls], " ".join(words), "synthetic"))
        return TextDataset(records, labels=list(_QUESTION_CLASSES))

    return sample(n_train), sample(n_test)
