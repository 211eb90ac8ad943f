"""Sequence layer under the depth classifier: Bi-LSTM or position embeddings.

Exactly one variant is active per model: a one-layer Bi-LSTM (the default),
a sinusoidal or learned position embedding added to the token and projected,
or a plain projection with no position information at all.  Each produces the
[B, n, hidden] states the depth classifier reads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as ts
from .embedding import sinusoid_table
from .errors import DimensionError
from .tensor import Tensor

_GATES = ("i", "f", "o", "c")


@dataclass
class LSTMDirectionParams:
    """One direction's gate weights: x projections, h projections, biases."""

    w: dict  # gate -> Tensor [in_dim, hid]
    u: dict  # gate -> Tensor [hid, hid]
    b: dict  # gate -> Tensor [hid]

    @classmethod
    def init(cls, rng, in_dim: int, hid: int, dtype) -> "LSTMDirectionParams":
        w, u, b = {}, {}, {}
        for gate in _GATES:
            w[gate] = Tensor(ts.xavier_uniform(rng, (in_dim, hid), dtype), requires_grad=True)
            u[gate] = Tensor(ts.xavier_uniform(rng, (hid, hid), dtype), requires_grad=True)
            bias = np.zeros(hid, dtype=dtype)
            if gate == "f":
                bias += 1.0  # standard forget-gate bias
            b[gate] = Tensor(bias, requires_grad=True)
        return cls(w, u, b)

    def named(self, prefix: str) -> dict:
        out = {}
        for gate in _GATES:
            out[f"{prefix}.w_{gate}"] = self.w[gate]
            out[f"{prefix}.u_{gate}"] = self.u[gate]
            out[f"{prefix}.b_{gate}"] = self.b[gate]
        return out


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LSTMDirectionParams):
    """One LSTM step.  x: [B, in], h, c: [B, hid] -> (h', c')."""
    pre = {
        g: ts.add(ts.add(ts.matmul(x, params.w[g]), ts.matmul(h, params.u[g])), params.b[g])
        for g in _GATES
    }
    i = ts.sigmoid(pre["i"])
    f = ts.sigmoid(pre["f"])
    o = ts.sigmoid(pre["o"])
    c_tilde = ts.tanh(pre["c"])
    c_new = ts.add(ts.mul(f, c), ts.mul(i, c_tilde))
    h_new = ts.mul(o, ts.tanh(c_new))
    return h_new, c_new


@dataclass
class BiLSTMParams:
    fwd: LSTMDirectionParams
    bwd: LSTMDirectionParams

    @classmethod
    def init(cls, rng, in_dim: int, hidden: int, dtype) -> "BiLSTMParams":
        if hidden % 2:
            raise DimensionError(f"bilstm hidden size must be even, got {hidden}")
        half = hidden // 2
        return cls(
            fwd=LSTMDirectionParams.init(rng, in_dim, half, dtype),
            bwd=LSTMDirectionParams.init(rng, in_dim, half, dtype),
        )

    def named(self, prefix: str = "bilstm") -> dict:
        return {**self.fwd.named(f"{prefix}.fwd"), **self.bwd.named(f"{prefix}.bwd")}


def _run_direction(x: Tensor, lengths: np.ndarray, params: LSTMDirectionParams,
                   reverse: bool) -> Tensor:
    """Scan one direction over true lengths; padding positions emit zeros.

    The state is reset to zero at padding positions, so the right-to-left
    scan enters each sentence's last true word with a fresh state rather
    than one contaminated by padding.
    """
    b, n, _ = x.shape
    hid = params.b["i"].shape[0]
    dtype = x.dtype
    h = Tensor(np.zeros((b, hid), dtype=dtype))
    c = Tensor(np.zeros((b, hid), dtype=dtype))
    zero = Tensor(np.zeros((b, hid), dtype=dtype))
    steps = range(n - 1, -1, -1) if reverse else range(n)
    outputs = [None] * n
    for t in steps:
        x_t = ts.reshape(ts.slice_axis(x, 1, t, t + 1), (b, x.shape[-1]))
        h_new, c_new = lstm_cell(x_t, h, c, params)
        inside = (np.asarray(lengths) > t)[:, None]
        h = ts.where_mask(inside, h_new, zero)
        c = ts.where_mask(inside, c_new, zero)
        outputs[t] = h
    return ts.stack(outputs, axis=1)  # [B, n, hid]


def bilstm(x: Tensor, lengths: np.ndarray, params: BiLSTMParams) -> Tensor:
    """Concatenated left-to-right and right-to-left states, [B, n, hidden]."""
    out_f = _run_direction(x, lengths, params.fwd, reverse=False)
    out_b = _run_direction(x, lengths, params.bwd, reverse=True)
    return ts.concat([out_f, out_b], axis=-1)


def position_embedding(i: int, variant: str, dim: int, table: Tensor | None = None) -> Tensor:
    """One position's embedding under the chosen variant."""
    if variant == "sinusoidal":
        if i < 0:
            raise ValueError(f"position must be >= 0, got {i}")
        return Tensor(sinusoid_table(i + 1, dim)[i])
    if variant == "learned":
        if table is None:
            raise ValueError("learned position embeddings need a table")
        if not 0 <= i < table.shape[0]:
            raise IndexError(f"position {i} outside learned table of size {table.shape[0]}")
        return ts.reshape(ts.embedding_lookup(table, np.array([i])), (dim,))
    raise ValueError(f"no position embedding for variant {variant!r}")


class SequentialModule:
    """Dispatches between the Bi-LSTM and the projection-based variants."""

    def __init__(self, variant: str, token_dim: int, hidden: int, max_positions: int,
                 rng: np.random.Generator, dtype):
        self.variant = variant
        self.hidden = hidden
        self.params: BiLSTMParams | None = None
        self.proj: Tensor | None = None
        self.pos_table: Tensor | None = None
        if variant == "bilstm":
            self.params = BiLSTMParams.init(rng, token_dim, hidden, dtype)
        elif variant in ("sinusoidal", "learned", "none"):
            self.proj = Tensor(ts.xavier_uniform(rng, (token_dim, hidden), dtype),
                               requires_grad=True)
            if variant == "learned":
                self.pos_table = Tensor(
                    ts.uniform_init(rng, (max_positions, token_dim), 0.05, dtype),
                    requires_grad=True,
                )
            elif variant == "sinusoidal":
                self.pos_table = Tensor(
                    sinusoid_table(max_positions, token_dim).astype(dtype)
                )
        else:
            raise ValueError(f"unknown sequential variant {variant!r}")

    def named(self) -> dict:
        out = {}
        if self.params is not None:
            out.update(self.params.named())
        if self.proj is not None:
            out[f"seq.{self.variant}.proj"] = self.proj
        if self.variant == "learned":
            out["seq.learned.pos"] = self.pos_table
        return out

    def __call__(self, tokens: Tensor, lengths: np.ndarray) -> Tensor:
        b, n, _ = tokens.shape
        if self.variant == "bilstm":
            return bilstm(tokens, lengths, self.params)
        x = tokens
        if self.variant in ("sinusoidal", "learned"):
            if n > self.pos_table.shape[0]:
                raise IndexError(
                    f"sentence length {n} exceeds position table {self.pos_table.shape[0]}"
                )
            pos = ts.reshape(ts.slice_axis(self.pos_table, 0, 0, n), (1, n, tokens.shape[-1]))
            x = ts.add(x, pos)
        return ts.matmul(x, self.proj)
