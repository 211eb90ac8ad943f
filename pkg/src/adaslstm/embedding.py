"""Token representation: vocabulary, word vectors, char CNN, depth embeddings.

A token is embedded as the concatenation of a word vector and a char-CNN
feature vector.  Before entering the sentence-state stack it is refined by
appending a depth embedding, which is the word's row of the depth
classifier's output matrix (shared storage, transposed view) plus a fixed
sinusoidal component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as ts
from .errors import DataFormatError
from .tensor import Tensor

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

# Printable ASCII, case preserved; anything else maps to the unknown char.
_CHARSET = [chr(c) for c in range(32, 127)]
CHAR_PAD_ID = 0
CHAR_UNK_ID = 1
CHAR_VOCAB_SIZE = len(_CHARSET) + 2
_CHAR_IDS = {ch: i + 2 for i, ch in enumerate(_CHARSET)}


class Vocab:
    """Token-to-id mapping with reserved padding (0) and unknown (1) slots.

    Corpus tokens are ranked by descending frequency, ties broken
    lexicographically, so identical corpora always produce identical ids.
    """

    def __init__(self, tokens: list[str]):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def from_corpus(cls, sentences, min_freq: int = 1) -> "Vocab":
        counts: dict[str, int] = {}
        for sent in sentences:
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
        kept = [t for t, c in counts.items() if c >= min_freq]
        kept.sort(key=lambda t: (-counts[t], t))
        return cls(kept)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)


def encode_chars(word: str, max_word_len: int) -> list[int]:
    """Char ids for one word, truncated to max_word_len, no padding."""
    ids = [_CHAR_IDS.get(ch, CHAR_UNK_ID) for ch in word[:max_word_len]]
    return ids if ids else [CHAR_UNK_ID]


def load_pretrained(path, vocab: Vocab, dim: int, rng: np.random.Generator,
                    dtype=np.float64) -> tuple[np.ndarray, int]:
    """Read whitespace-separated word vectors into a [V, dim] table.

    Rows for vocabulary words found in the file come from the file; missing
    words get uniform(-0.05, 0.05) rows from ``rng``; the padding row is
    zero.  Returns (table, number of vocabulary words found).  Malformed
    lines raise DataFormatError naming the line number.
    """
    table = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(dtype)
    table[PAD_ID] = 0.0
    found = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected a token and {dim} values, got {len(parts)} fields"
                )
            token = parts[0]
            idx = vocab.token_to_id.get(token)
            if idx is None:
                continue
            try:
                table[idx] = np.array([float(v) for v in parts[1:]], dtype=dtype)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric vector component")
            found += 1
    return table, found


@dataclass
class CharCNNParams:
    """Width-3 convolution over char embeddings with max-over-time pooling."""

    emb: Tensor      # [CHAR_VOCAB_SIZE, char_embed_dim]
    w: Tensor        # [3 * char_embed_dim, char_dim]
    b: Tensor        # [char_dim]

    @classmethod
    def init(cls, rng: np.random.Generator, char_embed_dim: int, char_dim: int,
             dtype=np.float64) -> "CharCNNParams":
        emb = ts.uniform_init(rng, (CHAR_VOCAB_SIZE, char_embed_dim), 0.05, dtype)
        emb[CHAR_PAD_ID] = 0.0
        return cls(
            emb=Tensor(emb, requires_grad=True),
            w=Tensor(ts.xavier_uniform(rng, (3 * char_embed_dim, char_dim), dtype), requires_grad=True),
            b=Tensor(np.zeros(char_dim, dtype=dtype), requires_grad=True),
        )

    def named(self, prefix: str = "char_cnn") -> dict:
        return {f"{prefix}.emb": self.emb, f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def char_cnn(char_ids: np.ndarray, char_lens: np.ndarray, params: CharCNNParams) -> Tensor:
    """Char features for a batch of words.

    char_ids: [B, n, T] int with T >= 3 (pad with CHAR_PAD_ID), char_lens:
    [B, n] true char counts.  A window starting at t is pooled over only when
    it touches a true character (t < len), so trailing padding beyond window
    reach cannot change the output.  Returns [B, n, char_dim].
    """
    char_ids = np.asarray(char_ids)
    if char_ids.ndim != 3 or char_ids.shape[-1] < 3:
        raise ts.DimensionError(f"char_ids must be [B, n, T>=3], got {char_ids.shape}")
    t_len = char_ids.shape[-1]
    emb = ts.embedding_lookup(params.emb, char_ids)          # [B, n, T, ce]
    windows = ts.concat(
        [ts.slice_axis(emb, 2, off, t_len - 2 + off) for off in range(3)], axis=-1
    )                                                        # [B, n, T-2, 3ce]
    feat = ts.relu(ts.linear(windows, params.w, params.b))   # [B, n, T-2, cd]
    starts = np.arange(t_len - 2)
    window_mask = starts[None, None, :] < np.maximum(np.asarray(char_lens), 1)[:, :, None]
    return ts.max_pool(feat, axis=2, mask=window_mask)


def char_cnn_single(char_ids, params: CharCNNParams) -> Tensor:
    """Char features for one word's id sequence; pads to length 3 if needed."""
    ids = list(np.asarray(char_ids).reshape(-1))
    n_true = len(ids)
    while len(ids) < 3:
        ids.append(CHAR_PAD_ID)
    batch = np.array(ids, dtype=np.int64)[None, None, :]
    out = char_cnn(batch, np.array([[n_true]]), params)
    return ts.reshape(out, (out.shape[-1],))


def sinusoid_table(count: int, dim: int) -> np.ndarray:
    """Fixed sin/cos table: row p, even column 2j holds sin(p / 10000^(2j/dim)),
    the following odd column holds the matching cos."""
    pos = np.arange(count, dtype=np.float64)[:, None]
    j = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (j // 2 * 2) / dim)
    table = np.empty((count, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


def sinusoidal_depth(depth: int, dim: int, max_depth: int) -> np.ndarray:
    """Sinusoidal component of one depth embedding; depth must be in [0, max_depth]."""
    if not 0 <= depth <= max_depth:
        raise ValueError(f"depth {depth} outside [0, {max_depth}]")
    return sinusoid_table(depth + 1, dim)[depth]


class DepthEmbedding:
    """Trainable depth rows shared with the depth classifier's output matrix.

    The trainable part of depth d's embedding is column d-1 of the classifier
    matrix ``w2`` ([inner, L]), read through a transpose, so gradient from
    the refined tokens flows into the same storage the depth logits use.
    """

    def __init__(self, w2: Tensor, max_layers: int):
        if w2.shape[1] != max_layers:
            raise ts.DimensionError(f"w2 {w2.shape} does not cover {max_layers} depths")
        self.w2 = w2
        self.max_layers = max_layers
        self.sin = sinusoid_table(max_layers + 1, w2.shape[0])

    def rows(self, depths: np.ndarray) -> Tensor:
        """Embeddings for an int array of depths (padding 0 is clamped to 1)."""
        depths = np.asarray(depths)
        clamped = np.clip(depths, 1, self.max_layers)
        trainable = ts.embedding_lookup(ts.transpose2d(self.w2), clamped - 1)
        sin_rows = self.sin[clamped].astype(self.w2.dtype)
        return ts.add(trainable, sin_rows)


def assemble_tokens(word_table: Tensor, word_ids: np.ndarray, char_feats: Tensor) -> Tensor:
    """[word vector ; char features] for a batch, [B, n, word_dim + char_dim]."""
    word_vecs = ts.embedding_lookup(word_table, np.asarray(word_ids))
    return ts.concat([word_vecs, char_feats], axis=-1)


def refine_tokens(tokens: Tensor, depth_rows: Tensor) -> Tensor:
    """[token ; depth embedding], the input to the sentence-state stack."""
    return ts.concat([tokens, depth_rows], axis=-1)
