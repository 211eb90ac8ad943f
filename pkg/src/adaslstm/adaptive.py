"""Per-word recurrent depth: classifier, selection strategies, adaptive stack.

A two-layer classifier over the sequence-module states produces a depth
distribution per word.  A word selected to halt at depth d keeps its layer-d
state unchanged through the remaining layers (copy-through), while the
sentence node keeps running for as many layers as the deepest word needs.

Selection is discrete and carries no gradient; the classifier still learns
through two differentiable paths: its hidden layer initializes the layer-0
word states, and its output matrix doubles as the trainable part of the
depth embedding appended to each token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as ts
from .errors import DimensionError
from .slstm import (SLSTMParams, SLSTMState, _global_layer, _initial_state,
                    _precompute_token_terms, _word_layer, _word_layer_compact)
from .tensor import Tensor

# Fraction of true words that must still be active for the masked path;
# below this the layer gathers active rows and scatters results back.
COMPACT_THRESHOLD = 0.5


@dataclass
class DepthClassifierParams:
    """ReLU hidden layer, depth projection, and the layer-0 state map.

    ``w2`` is shared storage with the depth embedding: column d-1 is the
    trainable embedding of depth d.  It is initialized near zero so an
    untrained model spreads probability almost uniformly over depths.
    """

    w1: Tensor       # [hidden, inner]
    b1: Tensor       # [inner]
    w2: Tensor       # [inner, max_layers]
    b2: Tensor       # [max_layers]
    h0_proj: Tensor  # [inner, hidden], no bias

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, inner: int, max_layers: int,
             dtype) -> "DepthClassifierParams":
        return cls(
            w1=Tensor(ts.xavier_uniform(rng, (hidden, inner), dtype), requires_grad=True),
            b1=Tensor(np.zeros(inner, dtype=dtype), requires_grad=True),
            w2=Tensor(ts.uniform_init(rng, (inner, max_layers), 0.01, dtype), requires_grad=True),
            b2=Tensor(np.zeros(max_layers, dtype=dtype), requires_grad=True),
            h0_proj=Tensor(ts.xavier_uniform(rng, (inner, hidden), dtype), requires_grad=True),
        )

    @property
    def max_layers(self) -> int:
        return self.w2.shape[1]

    def named(self, prefix: str = "depth") -> dict:
        return {f"{prefix}.{k}": getattr(self, k) for k in ("w1", "b1", "w2", "b2", "h0_proj")}


@dataclass
class DepthAssignment:
    """Selected depths for one batch, in normalized form.

    depths: [B, n] ints in [1, max_layers] at true words, 0 at padding.
    d_max: [B] deepest selected depth per sentence.  probs: [B, n, L]
    selection distribution (zero rows at padding).  inner: the classifier's
    ReLU hidden vectors, kept on the tape for the layer-0 state map.
    """

    depths: np.ndarray
    d_max: np.ndarray
    probs: np.ndarray
    inner: Tensor
    max_layers: int

    @property
    def mean_depth(self) -> float:
        true = self.depths > 0
        return float(self.depths[true].mean()) if true.any() else 0.0


def depth_logits(h: Tensor, params: DepthClassifierParams):
    """Depth scores from sequence states; returns (logits, relu_inner)."""
    inner = ts.relu(ts.linear(h, params.w1, params.b1))
    logits = ts.linear(inner, params.w2, params.b2)
    return logits, inner


def depth_probs(logits: Tensor) -> Tensor:
    """Softmax over the depth axis."""
    return ts.softmax(logits, axis=-1)


def _np_softmax(x: np.ndarray) -> np.ndarray:
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def select_hard(probs: np.ndarray) -> np.ndarray:
    """argmax depth, 1-based; ties resolve to the smallest depth."""
    return np.argmax(probs, axis=-1).astype(np.int64) + 1


def select_soft(probs: np.ndarray) -> np.ndarray:
    """floor of the expected depth, clamped into [1, max_layers]."""
    max_layers = probs.shape[-1]
    expect = (probs * np.arange(1, max_layers + 1)).sum(axis=-1)
    return np.clip(np.floor(expect).astype(np.int64), 1, max_layers)


def sample_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel noise via the double-log transform of uniforms."""
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def select_gumbel(logits: np.ndarray, tau: float, rng: np.random.Generator):
    """Gumbel-max depth sample; returns (depths, perturbed softmax).

    The perturbed scores (logits + noise) / tau give a near-one-hot softmax
    at small tau; the argmax itself is a sample from softmax(logits) and is
    independent of tau.  Noise affects selection only, never any loss.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    noise = sample_gumbel(rng, logits.shape)
    perturbed = (logits.astype(np.float64) + noise) / tau
    depths = np.argmax(perturbed, axis=-1).astype(np.int64) + 1
    return depths, _np_softmax(perturbed)


def compute_assignment(seq_states: Tensor, params: DepthClassifierParams, strategy: str,
                       word_mask: np.ndarray, tau: float = 0.001,
                       rng: np.random.Generator | None = None) -> DepthAssignment:
    """Classify every word's depth under the given selection strategy."""
    word_mask = np.asarray(word_mask, dtype=bool)
    logits, inner = depth_logits(seq_states, params)
    probs = _np_softmax(logits.data.astype(np.float64))
    if strategy == "hard":
        depths = select_hard(probs)
    elif strategy == "soft":
        depths = select_soft(probs)
    elif strategy == "gumbel":
        if rng is None:
            raise ValueError("gumbel selection needs an rng")
        depths, _ = select_gumbel(logits.data, tau, rng)
    else:
        raise ValueError(f"unknown selection strategy {strategy!r}")
    depths = np.where(word_mask, depths, 0)
    probs = np.where(word_mask[:, :, None], probs, 0.0)
    d_max = np.where(word_mask.any(axis=1), depths.max(axis=1), 1).astype(np.int64)
    return DepthAssignment(depths=depths, d_max=d_max, probs=probs, inner=inner,
                           max_layers=params.max_layers)


def init_h0(assignment: DepthAssignment, params: DepthClassifierParams) -> Tensor:
    """Layer-0 word states: a bias-free linear map of the classifier's
    hidden vectors, giving the classifier a gradient path from the loss."""
    return ts.matmul(assignment.inner, params.h0_proj)


def adaptive_stack(x: Tensor, params: SLSTMParams, assignment: DepthAssignment,
                   word_mask: np.ndarray, h0: Tensor | None = None,
                   compact_threshold: float = COMPACT_THRESHOLD,
                   collect_layers: bool = False) -> SLSTMState:
    """Run the stack with per-word depths from ``assignment``.

    Runs max(d_i) layers.  At layer l only words with d_i >= l compute a
    transition; the rest carry their state through bitwise unchanged.  When
    the active fraction drops below ``compact_threshold`` the layer computes
    only the gathered active rows, so halted words stop costing gate matrix
    multiplies; above it, a full layer is computed and masked, which wastes
    some rows but avoids gather overhead.  The sentence node updates for as
    long as its sentence has any active word.

    With every depth equal to the layer budget this reproduces ``full_stack``
    bit for bit (same layer helpers, same operation order).
    """
    word_mask = np.asarray(word_mask, dtype=bool)
    b, n = word_mask.shape
    if x.shape != (b, n, params.x_dim):
        raise DimensionError(f"x must be {(b, n, params.x_dim)}, got {x.shape}")
    depths = assignment.depths
    if depths.shape != (b, n):
        raise DimensionError(f"depths must be {(b, n)}, got {depths.shape}")
    if (depths[word_mask] < 1).any() or depths.max(initial=0) > assignment.max_layers:
        raise ValueError("depth assignment outside [1, max_layers] at true words")
    if (depths[~word_mask] != 0).any():
        raise ValueError("padding positions must have depth 0")

    h_pad, c_pad, g, c_g, _ = _initial_state(params, word_mask, h0)
    ux = _precompute_token_terms(x, params)
    n_words = max(int(word_mask.sum()), 1)
    d_max_batch = int(assignment.d_max.max(initial=1))
    words = 0
    globals_ = 0
    layer_h = [] if collect_layers else None
    for layer in range(1, d_max_batch + 1):
        active = depths >= layer
        n_active = int(active.sum())
        if n_active / n_words < compact_threshold:
            h_words, c_words, computed = _word_layer_compact(
                h_pad, c_pad, g, c_g, ux, params, active, b, n)
            words += computed
        else:
            h_new, c_new = _word_layer(h_pad, c_pad, g, c_g, ux, params, b, n)
            act3 = active[:, :, None]
            h_words = ts.where_mask(act3, h_new, ts.slice_axis(h_pad, 1, 1, n + 1))
            c_words = ts.where_mask(act3, c_new, ts.slice_axis(c_pad, 1, 1, n + 1))
            words += n_active
        sent_active = assignment.d_max >= layer
        g_new, c_g_new = _global_layer(h_pad, c_pad, g, c_g, word_mask, params, b, n)
        g = ts.where_mask(sent_active[:, None], g_new, g)
        c_g = ts.where_mask(sent_active[:, None], c_g_new, c_g)
        globals_ += int(sent_active.sum())
        h_pad = ts.pad_axis(h_words, 1, 1, 1)
        c_pad = ts.pad_axis(c_words, 1, 1, 1)
        if collect_layers:
            layer_h.append(h_words.data)
    return SLSTMState(h=h_pad, c=c_pad, g=g, c_g=c_g, word_mask=word_mask,
                      layer=d_max_batch, word_transitions=words,
                      global_transitions=globals_, layer_h=layer_h)
