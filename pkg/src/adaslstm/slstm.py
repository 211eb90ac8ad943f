"""Sentence-state LSTM: parallel word transitions plus a global sentence node.

Each layer updates every word state from its immediate neighbors, its own
previous state, the token embedding, and the global sentence state; the
sentence node is updated simultaneously from all words.  Word gates
(input, left, right, forget, sentence) are normalized jointly so they sum
to one at every coordinate; the sentence node's (n+1)-way gate softmax runs
over the words plus its own recurrent path.

States carry explicit zero padding rows at positions 0 and n+1, so boundary
words read zero vectors for their missing neighbors.  Positions past a
sentence's true length are forced to zero every layer for the same reason.

``full_stack`` runs every word for a fixed number of layers and is the
reference the depth-adaptive stack is checked against; both are built from
the same layer helpers so matched inputs give bitwise-matched outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as ts
from .errors import DimensionError
from .tensor import Tensor

# Gate order is fixed; the first five are jointly normalized.
WORD_GATES = ("i", "l", "r", "f", "s", "o", "u")
SOFTMAX_GATES = ("i", "l", "r", "f", "s")


@dataclass
class SLSTMParams:
    """Layer-shared weights for the word and sentence transitions.

    Word gates: w (neighborhood [3H, H]), u (token [Dx, H]), v (sentence
    state [H, H]), b ([H]).  Sentence node: its own forget gate (wg, ug, bg
    on g and the word average), per-word gates (wf, uf, bf on g and each
    word), and output gate (wo, uo, bo).
    """

    hidden: int
    x_dim: int
    w: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)
    wg: Tensor = None
    ug: Tensor = None
    bg: Tensor = None
    wf: Tensor = None
    uf: Tensor = None
    bf: Tensor = None
    wo: Tensor = None
    uo: Tensor = None
    bo: Tensor = None

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, x_dim: int, dtype) -> "SLSTMParams":
        p = cls(hidden=hidden, x_dim=x_dim)
        for gate in WORD_GATES:
            p.w[gate] = Tensor(ts.xavier_uniform(rng, (3 * hidden, hidden), dtype), requires_grad=True)
            p.u[gate] = Tensor(ts.xavier_uniform(rng, (x_dim, hidden), dtype), requires_grad=True)
            p.v[gate] = Tensor(ts.xavier_uniform(rng, (hidden, hidden), dtype), requires_grad=True)
            p.b[gate] = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True)
        for name in ("wg", "ug", "wf", "uf", "wo", "uo"):
            setattr(p, name, Tensor(ts.xavier_uniform(rng, (hidden, hidden), dtype), requires_grad=True))
        for name in ("bg", "bf", "bo"):
            setattr(p, name, Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True))
        return p

    @property
    def dtype(self):
        return self.wg.dtype

    def named(self, prefix: str = "slstm") -> dict:
        out = {}
        for gate in WORD_GATES:
            out[f"{prefix}.w_{gate}"] = self.w[gate]
            out[f"{prefix}.u_{gate}"] = self.u[gate]
            out[f"{prefix}.v_{gate}"] = self.v[gate]
            out[f"{prefix}.b_{gate}"] = self.b[gate]
        for name in ("wg", "ug", "bg", "wf", "uf", "bf", "wo", "uo", "bo"):
            out[f"{prefix}.{name}"] = getattr(self, name)
        return out


@dataclass
class SLSTMState:
    """Stack output: padded word states, cells, sentence state, counters."""

    h: Tensor              # [B, n+2, H], rows 0 and n+1 are zero padding
    c: Tensor              # [B, n+2, H]
    g: Tensor              # [B, H]
    c_g: Tensor            # [B, H]
    word_mask: np.ndarray  # [B, n] bool, true words only
    layer: int
    word_transitions: int = 0    # logical per-word transition count
    global_transitions: int = 0  # logical sentence-node update count
    layer_h: list = None         # optional per-layer word states (tests)

    @property
    def n(self) -> int:
        return self.h.shape[1] - 2

    def words_h(self) -> Tensor:
        return ts.slice_axis(self.h, 1, 1, self.n + 1)

    def words_c(self) -> Tensor:
        return ts.slice_axis(self.c, 1, 1, self.n + 1)


def _precompute_token_terms(x: Tensor, params: SLSTMParams) -> dict:
    """u-projections of the tokens, constant across layers."""
    return {gate: ts.matmul(x, params.u[gate]) for gate in WORD_GATES}


def _word_gate_math(xi: Tensor, ux: dict, gv: dict, cells: dict, params: SLSTMParams,
                    gates_out: dict | None = None):
    """Gate equations shared by every word-transition path.

    xi: neighborhood concat [*, 3H]; ux, gv: per-gate token and sentence
    projections already shaped [*, H]; cells: left/self/right/sentence cell
    values shaped [*, H] (sentence may broadcast).  Returns (h, c).  When
    ``gates_out`` is given the normalized gates are stored in it by name.
    """
    hat = {}
    for gate in WORD_GATES:
        pre = ts.add(ts.add(ts.add(ts.matmul(xi, params.w[gate]), ux[gate]), gv[gate]),
                     params.b[gate])
        hat[gate] = ts.tanh(pre) if gate == "u" else ts.sigmoid(pre)
    i, l, r, f, s = ts.group_softmax([hat[g] for g in SOFTMAX_GATES])
    if gates_out is not None:
        gates_out.update({"i": i, "l": l, "r": r, "f": f, "s": s, "o": hat["o"]})
    c_new = ts.add(
        ts.add(ts.add(ts.mul(l, cells["left"]), ts.mul(f, cells["self"])),
               ts.add(ts.mul(r, cells["right"]), ts.mul(s, cells["g"]))),
        ts.mul(i, hat["u"]),
    )
    h_new = ts.mul(hat["o"], ts.tanh(c_new))
    return h_new, c_new


def word_transition(x, h_left, h_self, h_right, c_left, c_self, c_right, g, c_g,
                    params: SLSTMParams, gates_out: dict | None = None):
    """One word's transition from 1-d state vectors; returns (h, c).

    The batched layer computes exactly this math for all positions at once.
    """
    for name, t in (("h_left", h_left), ("h_self", h_self), ("h_right", h_right)):
        if t.shape != (params.hidden,):
            raise DimensionError(f"{name} must have shape ({params.hidden},), got {t.shape}")
    if x.shape != (params.x_dim,):
        raise DimensionError(f"x must have shape ({params.x_dim},), got {x.shape}")
    xi = ts.concat([h_left, h_self, h_right], axis=-1)
    ux = {gate: ts.matmul(x, params.u[gate]) for gate in WORD_GATES}
    gv = {gate: ts.matmul(g, params.v[gate]) for gate in WORD_GATES}
    cells = {"left": c_left, "self": c_self, "right": c_right, "g": c_g}
    return _word_gate_math(xi, ux, gv, cells, params, gates_out=gates_out)


def _word_layer(h_pad: Tensor, c_pad: Tensor, g: Tensor, c_g: Tensor, ux: dict,
                params: SLSTMParams, b: int, n: int, gates_out: dict | None = None):
    """Simultaneous word transitions for a whole batch layer -> (h, c) [B, n, H]."""
    h_l = ts.slice_axis(h_pad, 1, 0, n)
    h_s = ts.slice_axis(h_pad, 1, 1, n + 1)
    h_r = ts.slice_axis(h_pad, 1, 2, n + 2)
    xi = ts.concat([h_l, h_s, h_r], axis=-1)
    gv = {gate: ts.reshape(ts.matmul(g, params.v[gate]), (b, 1, params.hidden))
          for gate in WORD_GATES}
    cells = {
        "left": ts.slice_axis(c_pad, 1, 0, n),
        "self": ts.slice_axis(c_pad, 1, 1, n + 1),
        "right": ts.slice_axis(c_pad, 1, 2, n + 2),
        "g": ts.reshape(c_g, (b, 1, params.hidden)),
    }
    return _word_gate_math(xi, ux, gv, cells, params, gates_out=gates_out)


def _word_layer_compact(h_pad, c_pad, g, c_g, ux, params, active, b, n):
    """Word transitions for the active positions only.

    Gate matrix multiplies run over gathered rows, so halted positions cost
    no matmul work.  Returns updated full-width (h, c) word tensors with
    inactive rows carried through unchanged, plus the active row count.
    """
    hidden = params.hidden
    flat = np.flatnonzero(active.reshape(-1))
    rows_b = flat // n

    def grab(t3: Tensor, width: int) -> Tensor:
        return ts.embedding_lookup(ts.reshape(t3, (b * n, width)), flat)

    h_l = grab(ts.slice_axis(h_pad, 1, 0, n), hidden)
    h_s = grab(ts.slice_axis(h_pad, 1, 1, n + 1), hidden)
    h_r = grab(ts.slice_axis(h_pad, 1, 2, n + 2), hidden)
    xi = ts.concat([h_l, h_s, h_r], axis=-1)
    ux_rows = {gate: grab(ux[gate], hidden) for gate in WORD_GATES}
    gv_rows = {gate: ts.embedding_lookup(ts.matmul(g, params.v[gate]), rows_b)
               for gate in WORD_GATES}
    cells = {
        "left": grab(ts.slice_axis(c_pad, 1, 0, n), hidden),
        "self": grab(ts.slice_axis(c_pad, 1, 1, n + 1), hidden),
        "right": grab(ts.slice_axis(c_pad, 1, 2, n + 2), hidden),
        "g": ts.embedding_lookup(c_g, rows_b),
    }
    h_act, c_act = _word_gate_math(xi, ux_rows, gv_rows, cells, params)
    h_prev = ts.slice_axis(h_pad, 1, 1, n + 1)
    c_prev = ts.slice_axis(c_pad, 1, 1, n + 1)
    h_new = ts.reshape(ts.scatter_rows(ts.reshape(h_prev, (b * n, hidden)), flat, h_act),
                       (b, n, hidden))
    c_new = ts.reshape(ts.scatter_rows(ts.reshape(c_prev, (b * n, hidden)), flat, c_act),
                       (b, n, hidden))
    return h_new, c_new, len(flat)


def _global_layer(h_pad, c_pad, g, c_g, mask, params, b, n, gates_out: dict | None = None):
    """Sentence-node update from the previous layer's word states."""
    h_words = ts.slice_axis(h_pad, 1, 1, n + 1)
    c_words = ts.slice_axis(c_pad, 1, 1, n + 1)
    h_bar = ts.mean_pool(h_words, axis=1, mask=mask)
    fg_hat = ts.sigmoid(ts.add(ts.add(ts.matmul(g, params.wg), ts.matmul(h_bar, params.ug)),
                               params.bg))
    fi_hat = ts.sigmoid(ts.add(ts.add(ts.reshape(ts.matmul(g, params.wf), (b, 1, params.hidden)),
                                      ts.matmul(h_words, params.uf)),
                               params.bf))
    o = ts.sigmoid(ts.add(ts.add(ts.matmul(g, params.wo), ts.matmul(h_bar, params.uo)),
                          params.bo))
    gates = ts.concat([fi_hat, ts.reshape(fg_hat, (b, 1, params.hidden))], axis=1)
    gate_mask = np.concatenate([mask, np.ones((b, 1), dtype=bool)], axis=1)[:, :, None]
    norm = ts.softmax(gates, axis=1, mask=gate_mask)
    f_words = ts.slice_axis(norm, 1, 0, n)
    f_g = ts.reshape(ts.slice_axis(norm, 1, n, n + 1), (b, params.hidden))
    if gates_out is not None:
        gates_out.update({"f_words": f_words, "f_g": f_g, "o": o})
    c_g_new = ts.add(ts.sum_(ts.mul(f_words, c_words), axis=1), ts.mul(f_g, c_g))
    g_new = ts.mul(o, ts.tanh(c_g_new))
    return g_new, c_g_new


def global_transition(h_words: Tensor, c_words: Tensor, g: Tensor, c_g: Tensor,
                      params: SLSTMParams, mask: np.ndarray | None = None,
                      gates_out: dict | None = None):
    """Sentence-node update for one sentence or a batch; returns (g, c_g).

    Accepts [n, H] word states with [H] sentence vectors, or batched
    [B, n, H] with [B, H].
    """
    single = h_words.ndim == 2
    if single:
        h_words = ts.reshape(h_words, (1,) + h_words.shape)
        c_words = ts.reshape(c_words, (1,) + c_words.shape)
        g = ts.reshape(g, (1, -1))
        c_g = ts.reshape(c_g, (1, -1))
    b, n, _ = h_words.shape
    if mask is None:
        mask = np.ones((b, n), dtype=bool)
    h_pad = ts.pad_axis(h_words, 1, 1, 1)
    c_pad = ts.pad_axis(c_words, 1, 1, 1)
    g_new, c_g_new = _global_layer(h_pad, c_pad, g, c_g, mask, params, b, n,
                                   gates_out=gates_out)
    if single:
        g_new = ts.reshape(g_new, (-1,))
        c_g_new = ts.reshape(c_g_new, (-1,))
    return g_new, c_g_new


def _initial_state(params: SLSTMParams, word_mask: np.ndarray, h0: Tensor | None):
    b, n = word_mask.shape
    hidden = params.hidden
    dtype = params.dtype
    zeros3 = Tensor(np.zeros((b, n, hidden), dtype=dtype))
    if h0 is None:
        h_pad = ts.pad_axis(zeros3, 1, 1, 1)
    else:
        if h0.shape != (b, n, hidden):
            raise DimensionError(f"h0 must be [B, n, H] = {(b, n, hidden)}, got {h0.shape}")
        h_pad = ts.pad_axis(ts.where_mask(word_mask[:, :, None], h0, zeros3), 1, 1, 1)
    c_pad = ts.pad_axis(zeros3, 1, 1, 1)
    g = Tensor(np.zeros((b, hidden), dtype=dtype))
    c_g = Tensor(np.zeros((b, hidden), dtype=dtype))
    return h_pad, c_pad, g, c_g, zeros3


def full_stack(x: Tensor, params: SLSTMParams, layers: int, word_mask: np.ndarray,
               h0: Tensor | None = None, couple_global: bool = True,
               collect_layers: bool = False, gates_out: dict | None = None) -> SLSTMState:
    """Run every word for ``layers`` layers; the conventional fixed-depth stack.

    x: refined tokens [B, n, x_dim]; word_mask: [B, n] bool.  ``h0`` seeds
    the layer-0 word states (zeros when omitted).  ``couple_global=False``
    freezes the sentence node at zero, which confines information flow to
    the one-hop neighborhood per layer; it exists for receptive-field tests.
    ``gates_out`` captures the final layer's word gate tensors.
    """
    word_mask = np.asarray(word_mask, dtype=bool)
    b, n = word_mask.shape
    if x.shape != (b, n, params.x_dim):
        raise DimensionError(f"x must be {(b, n, params.x_dim)}, got {x.shape}")
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    h_pad, c_pad, g, c_g, zeros3 = _initial_state(params, word_mask, h0)
    ux = _precompute_token_terms(x, params)
    mask3 = word_mask[:, :, None]
    n_words = int(word_mask.sum())
    words = 0
    globals_ = 0
    layer_h = [] if collect_layers else None
    for li in range(layers):
        capture = gates_out if (gates_out is not None and li == layers - 1) else None
        h_new, c_new = _word_layer(h_pad, c_pad, g, c_g, ux, params, b, n,
                                   gates_out=capture)
        if couple_global:
            g_new, c_g_new = _global_layer(h_pad, c_pad, g, c_g, word_mask, params, b, n)
            g, c_g = g_new, c_g_new
            globals_ += b
        h_words = ts.where_mask(mask3, h_new, zeros3)
        c_words = ts.where_mask(mask3, c_new, zeros3)
        h_pad = ts.pad_axis(h_words, 1, 1, 1)
        c_pad = ts.pad_axis(c_words, 1, 1, 1)
        words += n_words
        if collect_layers:
            layer_h.append(h_words.data)
    return SLSTMState(h=h_pad, c=c_pad, g=g, c_g=c_g, word_mask=word_mask,
                      layer=layers, word_transitions=words,
                      global_transitions=globals_, layer_h=layer_h)
