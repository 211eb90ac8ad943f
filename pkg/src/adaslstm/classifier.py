"""Classification head: pooled sentence feature, prediction, cross entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as ts
from .errors import DimensionError
from .slstm import SLSTMState
from .tensor import Tensor

PROB_FLOOR = 1e-12


@dataclass
class HeadParams:
    w: Tensor  # [3 * hidden, n_labels]
    b: Tensor  # [n_labels]

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, n_labels: int, dtype) -> "HeadParams":
        return cls(
            w=Tensor(ts.xavier_uniform(rng, (3 * hidden, n_labels), dtype), requires_grad=True),
            b=Tensor(np.zeros(n_labels, dtype=dtype), requires_grad=True),
        )

    def named(self, prefix: str = "head") -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def pool_head(state: SLSTMState) -> Tensor:
    """Sentence feature: ReLU([max-pool ; mean-pool ; g]) over true words.

    Pools run over true word positions only, so padding can never leak into
    the feature.  Returns [B, 3 * hidden].
    """
    h_words = state.words_h()
    mx = ts.max_pool(h_words, axis=1, mask=state.word_mask)
    mn = ts.mean_pool(h_words, axis=1, mask=state.word_mask)
    return ts.relu(ts.concat([mx, mn, state.g], axis=-1))


def predict(feature: Tensor, params: HeadParams):
    """Label distribution and argmax labels; ties take the smallest index."""
    probs = ts.softmax(ts.linear(feature, params.w, params.b), axis=-1)
    labels = np.argmax(probs.data, axis=-1)
    return probs, labels


def cross_entropy(distribution: Tensor, gold, smoothing: float = 0.0) -> Tensor:
    """Mean negative log likelihood of the gold labels.

    ``distribution`` is [B, K] (or [K] for a single sample) of probabilities;
    ``gold`` is the int label (array).  With label smoothing e the target puts
    1 - e on the gold label and e/K everywhere else.  Computed in log space
    with a probability floor of 1e-12; for anything the floor leaves alone,
    the gradient w.r.t. the logits behind a softmax is exactly
    (distribution - target) / B.
    """
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    single = distribution.ndim == 1
    if single:
        distribution = ts.reshape(distribution, (1, -1))
    if distribution.ndim != 2:
        raise DimensionError(f"distribution must be [B, K], got {distribution.shape}")
    b, k = distribution.shape
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if gold.shape != (b,):
        raise DimensionError(f"gold labels must have shape ({b},), got {gold.shape}")
    if gold.size and (gold.min() < 0 or gold.max() >= k):
        raise ValueError(f"gold label outside [0, {k})")
    target = np.full((b, k), smoothing / k, dtype=np.float64)
    target[np.arange(b), gold] += 1.0 - smoothing
    logp = ts.log_clipped(distribution, PROB_FLOOR)
    return ts.scale(ts.sum_(ts.mul(logp, -target)), 1.0 / b)
