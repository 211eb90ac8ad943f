"""Optimization: Adam with clipping and decay, epoch loop, CV, checkpoints."""

from __future__ import annotations

import json
import math
import zipfile

import numpy as np

from . import data as dat
from .config import ModelConfig, TrainConfig
from .embedding import Vocab
from .errors import DataFormatError, NumericalError
from .model import AdaptiveClassifier
from .tensor import Tape, Tensor, backward


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float):
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns (grads, norm-before-clipping).  Arrays are shared when no
    scaling is needed and copied otherwise.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.vdot(g, g).real)
    norm = math.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


class Adam:
    """Bias-corrected Adam over named parameters.

    The effective learning rate for step t (0-based) is
    lr * lr_decay ** (t / steps_per_epoch), a smooth per-step exponential
    that reaches lr * lr_decay after one epoch of steps.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float = 5.0, lr_decay: float = 1.0,
                 steps_per_epoch: int = 1):
        self.params = {k: p for k, p in params.items() if p.requires_grad}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.lr_decay = lr_decay
        self.steps_per_epoch = max(1, steps_per_epoch)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    @property
    def current_lr(self) -> float:
        return self.lr * self.lr_decay ** (self.step_count / self.steps_per_epoch)

    def step(self) -> float:
        """Apply one update from the accumulated gradients; returns the
        pre-clip gradient norm.  Gradients are zeroed afterwards."""
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for k, p in self.params.items()}
        grads, norm = clip_global_norm(grads, self.clip_norm)
        lr_t = self.current_lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for k, p in self.params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= (lr_t * update).astype(p.data.dtype, copy=False)
            p.zero_grad()
        return norm


def _diagnostics(model: AdaptiveClassifier, batch_index: int) -> str:
    norms = {k: float(np.linalg.norm(p.data))
             for k, p in model.named_parameters().items()}
    worst = sorted(norms.items(), key=lambda kv: -kv[1])[:5]
    listing = ", ".join(f"{k}={v:.3g}" for k, v in worst)
    return f"non-finite loss at batch {batch_index}; largest parameter norms: {listing}"


def train_epoch(model: AdaptiveClassifier, batches: list[dat.TokenBatch],
                optimizer: Adam, rng: np.random.Generator) -> dict:
    """One pass over the batches: forward with dropout, backward, clip, step."""
    total_loss = 0.0
    correct = 0
    seen = 0
    for bi, batch in enumerate(batches):
        with Tape() as tape:
            result = model.forward(batch, training=True, rng=rng)
            loss_value = result.loss.item()
            if not np.isfinite(loss_value):
                raise NumericalError(_diagnostics(model, bi))
            backward(tape, result.loss)
        optimizer.step()
        total_loss += loss_value * batch.size
        correct += int((result.predictions == batch.labels).sum())
        seen += batch.size
    return {"loss": total_loss / seen, "accuracy": correct / seen}


def evaluate(model: AdaptiveClassifier, batches: list[dat.TokenBatch],
             eval_seed: int = 0) -> dict:
    """Deterministic evaluation pass; no dropout, no tape.

    Sampled depth selection draws from a generator freshly seeded with
    eval_seed, so repeated calls are bitwise stable.
    """
    rng = None
    if model.config.adaptive_depth and model.config.selection == "gumbel":
        rng = np.random.default_rng(eval_seed)
    total_loss = 0.0
    correct = 0
    seen = 0
    words = 0
    depth_total = 0
    transitions = [0, 0]
    for batch in batches:
        result = model.forward(batch, training=False, rng=rng)
        if result.loss is not None:
            total_loss += result.loss.item() * batch.size
        if batch.labels is not None:
            correct += int((result.predictions == batch.labels).sum())
        seen += batch.size
        words += int(batch.lengths.sum())
        if result.assignment is not None:
            depth_total += int(result.assignment.depths.sum())
        transitions[0] += result.word_transitions
        transitions[1] += result.global_transitions
    out = {"accuracy": correct / seen if seen else 0.0,
           "loss": total_loss / seen if seen else 0.0,
           "word_transitions": transitions[0],
           "global_transitions": transitions[1],
           "words": words}
    out["mean_depth"] = (depth_total / words if model.config.adaptive_depth and words
                         else float(model.config.max_layers))
    return out


def _snapshot(model: AdaptiveClassifier) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in model.named_parameters().items()}


def _restore(model: AdaptiveClassifier, snap: dict[str, np.ndarray]) -> None:
    for k, p in model.named_parameters().items():
        p.data = snap[k].copy()


def fit(model: AdaptiveClassifier, train_set: dat.TextDataset, config: TrainConfig,
        dev_set: dat.TextDataset | None = None, log=None) -> dict:
    """Train with shuffled batches, early stopping on dev accuracy.

    Without an explicit dev set, dev_fraction of the training data is held
    out (seeded).  The best-dev parameters are restored before returning.
    Returns the history: per-epoch rows plus the best dev accuracy.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    if dev_set is None and config.dev_fraction > 0 and len(train_set) >= 10:
        train_set, dev_set = dat.split_dataset(train_set, config.dev_fraction, rng)
    steps = max(1, math.ceil(len(train_set) / config.batch_size))
    optimizer = Adam(model.named_parameters(), lr=config.learning_rate,
                     beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps,
                     clip_norm=config.clip_norm, lr_decay=config.lr_decay,
                     steps_per_epoch=steps)
    mc = model.config
    dev_batches = None
    if dev_set is not None and len(dev_set):
        dev_batches = dat.make_batches(dev_set, model.vocab, config.batch_size,
                                       mc.max_word_len, max_len=config.max_len)
    history = []
    best_acc = -1.0
    best_snap = None
    stale = 0
    for epoch in range(1, config.epochs + 1):
        batches = dat.make_batches(train_set, model.vocab, config.batch_size,
                                   mc.max_word_len, rng=rng, max_len=config.max_len)
        stats = train_epoch(model, batches, optimizer, rng)
        row = {"epoch": epoch, "train_loss": stats["loss"],
               "train_accuracy": stats["accuracy"],
               "learning_rate": optimizer.current_lr}
        if dev_batches is not None:
            dev = evaluate(model, dev_batches, eval_seed=config.seed)
            row["dev_accuracy"] = dev["accuracy"]
            if dev["accuracy"] > best_acc:
                best_acc = dev["accuracy"]
                best_snap = _snapshot(model)
                stale = 0
            else:
                stale += 1
        history.append(row)
        if log is not None:
            log(row)
        if dev_batches is not None and config.patience > 0 and stale >= config.patience:
            break
    if best_snap is not None:
        _restore(model, best_snap)
    return {"epochs": history, "best_dev_accuracy": best_acc if best_acc >= 0 else None}


def cross_validate(dataset: dat.TextDataset, model_config: ModelConfig,
                   train_config: TrainConfig, k: int, log=None) -> dict:
    """Seeded k-fold CV; each fold trains a fresh model on the remainder."""
    rng = np.random.default_rng(train_config.seed)
    folds = dat.fold_indices(len(dataset), k, rng)
    accuracies = []
    for fi, fold in enumerate(folds):
        held = set(int(i) for i in fold)
        train_recs = [r for i, r in enumerate(dataset.records) if i not in held]
        test_recs = [dataset.records[int(i)] for i in fold]
        train_ds = dat.TextDataset(train_recs, labels=dataset.labels)
        test_ds = dat.TextDataset(test_recs, labels=dataset.labels)
        vocab = Vocab.from_corpus(train_ds.sentences(), min_freq=train_config.min_freq)
        model = AdaptiveClassifier(model_config, vocab, dataset.labels,
                                   seed=train_config.seed + fi)
        fit(model, train_ds, train_config, log=log)
        test_batches = dat.make_batches(test_ds, vocab, train_config.batch_size,
                                        model_config.max_word_len,
                                        max_len=train_config.max_len)
        accuracies.append(evaluate(model, test_batches,
                                   eval_seed=train_config.seed)["accuracy"])
    return {"fold_accuracies": accuracies,
            "mean_accuracy": float(np.mean(accuracies))}


def save_checkpoint(model: AdaptiveClassifier, path: str) -> None:
    """One-file archive: every parameter tensor plus config, vocab, labels."""
    meta = {
        "config": {f: getattr(model.config, f) for f in model.config.__dataclass_fields__},
        "vocab": model.vocab.id_to_token[2:],
        "labels": model.labels,
        "seed": model.seed,
        "frozen": [k for k, p in model.named_parameters().items()
                   if not p.requires_grad],
    }
    arrays = {f"param/{k}": p.data for k, p in model.named_parameters().items()}
    np.savez_compressed(path, meta=np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> AdaptiveClassifier:
    try:
        with np.load(path) as archive:
            meta = json.loads(archive["meta"].tobytes().decode("utf-8"))
            saved = {k[len("param/"):]: archive[k] for k in archive.files
                     if k.startswith("param/")}
    except (OSError, zipfile.BadZipFile, KeyError, ValueError,
            json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    config = ModelConfig(**meta["config"])
    model = AdaptiveClassifier(config, Vocab(meta["vocab"]), meta["labels"],
                               seed=meta["seed"])
    params = model.named_parameters()
    if set(params) != set(saved):
        missing = set(params) ^ set(saved)
        raise ValueError(f"checkpoint parameter mismatch: {sorted(missing)}")
    for k, p in params.items():
        if saved[k].shape != p.data.shape:
            raise ValueError(f"checkpoint shape mismatch for {k}")
        p.data = saved[k].astype(p.data.dtype, copy=True)
        if k in meta["frozen"]:
            p.requires_grad = False
    return model
