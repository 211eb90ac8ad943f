"""Dense tensors over numpy with tape-based reverse-mode differentiation.

Every differentiable operation in the package goes through the functions in
this module.  An op computes its result eagerly in numpy and, when a Tape is
active on the current thread and some input requires gradients, appends a
closure to the tape that knows how to push the output gradient back onto the
inputs.  ``backward`` replays those closures in reverse recording order, which
is a valid topological order for anything recorded on a single tape.

With no tape active (evaluation mode) the ops are plain numpy with no
bookkeeping.  Tapes are thread local, so independent model replicas can run
on separate threads without sharing state.  Tensors are treated as immutable
by every op; nothing here writes into an input's ``data`` buffer.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericalError

DEFAULT_DTYPE = np.float64

# Additive fill for masked softmax entries.  Large enough that exp underflows
# to zero at both float32 and float64, finite so debug checks stay clean.
NEG_FILL = -1e30

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    """The innermost Tape open on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-op finiteness assertions (slow; for tests and debugging)."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """A numpy array plus an accumulated gradient buffer.

    ``requires_grad`` marks leaves (parameters, inputs under test) and is
    propagated to op outputs while a tape is recording.  ``grad`` starts as
    None and is filled by ``backward``; repeated backward calls accumulate
    into leaf gradients until ``zero_grad`` clears them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._node = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # Operator sugar; constants (floats, ndarrays) are folded in without grad.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), scale(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported; divide by a scalar")
        return scale(self, 1.0 / float(other))


def _scalar_error(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=False)


def _pick_dtype(*xs):
    for x in xs:
        if isinstance(x, Tensor):
            return x.dtype
    return DEFAULT_DTYPE


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward pass."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(out_data: np.ndarray, inputs: tuple, backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording the backward closure if a tape is live."""
    tape = active_tape()
    track = tape is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    out = Tensor(out_data, requires_grad=track)
    if _debug_checks and not np.all(np.isfinite(out_data)):
        raise NumericalError("non-finite values produced by a forward op")
    if track:
        out._node = True
        tape._nodes.append((out, backward_fn))
        for t in inputs:
            if isinstance(t, Tensor) and t.requires_grad and not t._node:
                tape._leaves.add(t)
    return out


class Tape:
    """Records op closures for one forward pass; context manager.

    Nested tapes are allowed; ops record onto the innermost one.  Use
    ``backward(tape, loss)`` or ``tape.backward(loss)`` to propagate.
    """

    __slots__ = ("_nodes", "_leaves")

    def __init__(self):
        self._nodes = []
        self._leaves = set()

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tape stack corrupted"
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse sweep from a scalar loss over everything the tape recorded.

    Leaf gradients accumulate across calls; intermediate node gradients are
    reset at the start of each sweep.  Leaves the loss does not depend on end
    up with explicit zero gradients.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor loss")
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    for out, _ in tape._nodes:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape._nodes):
        if out.grad is not None:
            fn(out.grad)
    for leaf in tape._leaves:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    dtype = _pick_dtype(a, b)
    a = _as_tensor(a, dtype)
    b = _as_tensor(b, dtype)
    out = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    dtype = _pick_dtype(a, b)
    a = _as_tensor(a, dtype)
    b = _as_tensor(b, dtype)
    out = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = a.data * s

    def bwd(g):
        _accum(a, g * s)

    return _make(out, (a,), bwd)


def matmul(a, b) -> Tensor:
    """``a @ b`` where b is a 2-d weight and a has any number of leading axes.

    a: [..., k], b: [k, m] -> [..., m].  A 1-d ``a`` of shape [k] maps to [m].
    """
    dtype = _pick_dtype(a, b)
    a = _as_tensor(a, dtype)
    b = _as_tensor(b, dtype)
    if b.ndim != 2:
        raise DimensionError(f"matmul weight must be 2-d, got shape {b.shape}")
    if a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dims disagree: {a.shape} @ {b.shape}"
        )
    out = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1]) if a.ndim != 2 else a.data
            g2 = g.reshape(-1, b.shape[1]) if g.ndim != 2 else g
            _accum(b, a2.T @ g2)

    return _make(out, (a, b), bwd)


def linear(x, w, b) -> Tensor:
    """Affine map ``x @ w + b`` with explicit shape validation."""
    if not isinstance(w, Tensor) or w.ndim != 2:
        raise DimensionError("linear weight must be a 2-d tensor")
    xs = x.shape if isinstance(x, Tensor) else np.shape(x)
    if len(xs) < 1 or xs[-1] != w.shape[0]:
        raise DimensionError(f"linear: input {xs} does not match weight {w.shape}")
    bs = b.shape if isinstance(b, Tensor) else np.shape(b)
    if tuple(bs) != (w.shape[1],):
        raise DimensionError(f"linear: bias {tuple(bs)} does not match weight {w.shape}")
    return add(matmul(x, w), b)


# ---------------------------------------------------------------------------
# activations


def sigmoid(x) -> Tensor:
    x = _as_tensor(x, _pick_dtype(x))
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def bwd(g):
        _accum(x, g * out * (1.0 - out))

    return _make(out, (x,), bwd)


def tanh(x) -> Tensor:
    x = _as_tensor(x, _pick_dtype(x))
    out = np.tanh(x.data)

    def bwd(g):
        _accum(x, g * (1.0 - out * out))

    return _make(out, (x,), bwd)


def relu(x) -> Tensor:
    x = _as_tensor(x, _pick_dtype(x))
    out = np.maximum(x.data, 0.0)

    def bwd(g):
        _accum(x, g * (x.data > 0))

    return _make(out, (x,), bwd)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def activation(x, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
    return fn(x)


# ---------------------------------------------------------------------------
# softmax family


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Stable softmax along one axis, with optional boolean masking.

    Masked-out entries get probability exactly 0 and receive no gradient.
    The max-subtraction trick is always applied.
    """
    x = _as_tensor(x, _pick_dtype(x))
    d = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), d.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax: some row is fully masked")
        d = np.where(mask, d, NEG_FILL)
    m = d.max(axis=axis, keepdims=True)
    e = np.exp(d - m)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accum(x, (g - inner) * out)

    return _make(out, (x,), bwd)


def group_softmax(gates: Sequence[Tensor]) -> list:
    """Jointly normalize a group of same-shaped gate tensors.

    Stacks the gates, applies softmax across the group axis, and returns the
    normalized gates in input order.  At every tensor coordinate the returned
    values sum to 1.
    """
    gates = list(gates)
    if not gates:
        raise ValueError("group_softmax needs at least one gate")
    shape = gates[0].shape
    for t in gates[1:]:
        if t.shape != shape:
            raise DimensionError(f"group_softmax shapes differ: {shape} vs {t.shape}")
    stacked = stack(gates, axis=0)
    norm = softmax(stacked, axis=0)
    return [index_axis(norm, 0, i) for i in range(len(gates))]


def log_clipped(x: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); gradient is zero where the floor is active."""
    x = _as_tensor(x, _pick_dtype(x))
    out = np.log(np.maximum(x.data, floor))

    def bwd(g):
        _accum(x, np.where(x.data > floor, g / np.maximum(x.data, floor), 0.0))

    return _make(out, (x,), bwd)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(out, (x,), bwd)


def transpose2d(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose2d expects a matrix, got shape {x.shape}")
    out = x.data.T

    def bwd(g):
        _accum(x, g.T)

    return _make(out, (x,), bwd)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = x.data[idx]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        _accum(x, full)

    return _make(out, (x,), bwd)


def index_axis(x: Tensor, axis: int, i: int) -> Tensor:
    """Select index i along an axis, dropping that axis."""
    out = np.take(x.data, i, axis=axis)

    def bwd(g):
        full = np.zeros_like(x.data)
        idx = [slice(None)] * x.ndim
        idx[axis] = i
        full[tuple(idx)] = g
        _accum(x, full)

    return _make(out, (x,), bwd)


def pad_axis(x: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis; backward slices the padding back off."""
    widths = [(0, 0)] * x.ndim
    widths[axis] = (before, after)
    out = np.pad(x.data, widths)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(before, before + x.shape[axis])
    idx = tuple(idx)

    def bwd(g):
        _accum(x, g[idx])

    return _make(out, (x,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [t for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    dtype = _pick_dtype(*tensors)
    tensors = [_as_tensor(t, dtype) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(out, tuple(tensors), bwd)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("stack needs at least one tensor")
    dtype = _pick_dtype(*tensors)
    tensors = [_as_tensor(t, dtype) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))

    return _make(out, tuple(tensors), bwd)


# ---------------------------------------------------------------------------
# reductions and pooling


def sum_(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape).copy())

    return _make(out, (x,), bwd)


def mean_(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def _expand_mask(mask: np.ndarray, x: Tensor) -> np.ndarray:
    """Broadcast a positions mask up to x's shape (trailing feature axes)."""
    mask = np.asarray(mask, dtype=bool)
    while mask.ndim < x.ndim:
        mask = mask[..., None]
    return np.broadcast_to(mask, x.shape)


def max_pool(x: Tensor, axis: int = 1, mask: np.ndarray | None = None) -> Tensor:
    """Max over one axis; with a mask, only unmasked positions compete.

    Gradient is routed to the (first, on ties) argmax position per slice.
    """
    d = x.data
    if mask is not None:
        m = _expand_mask(mask, x)
        if not m.any(axis=axis).all():
            raise ValueError("max_pool: fully masked slice")
        d = np.where(m, d, -np.inf)
    out = d.max(axis=axis)
    arg = d.argmax(axis=axis)

    def bwd(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        _accum(x, full)

    return _make(out, (x,), bwd)


def mean_pool(x: Tensor, axis: int = 1, mask: np.ndarray | None = None) -> Tensor:
    """Mean over one axis, counting only unmasked positions when masked."""
    if mask is None:
        return mean_(x, axis=axis)
    m = _expand_mask(mask, x)
    cnt = m.sum(axis=axis)
    if not (cnt > 0).all():
        raise ValueError("mean_pool: fully masked slice")
    mf = m.astype(x.dtype)
    out = (x.data * mf).sum(axis=axis) / cnt

    def bwd(g):
        _accum(x, np.expand_dims(g / cnt, axis) * mf)

    return _make(out, (x,), bwd)


# ---------------------------------------------------------------------------
# selection, lookup, scatter


def where_mask(mask: np.ndarray, a: Tensor, b) -> Tensor:
    """Elementwise select: a where mask, b elsewhere.

    The mask is a plain boolean array (no gradient).  Gradients flow to each
    branch only at the positions it supplied.
    """
    dtype = _pick_dtype(a, b)
    a = _as_tensor(a, dtype)
    b = _as_tensor(b, dtype)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.where(mask, g, 0.0), a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.where(mask, 0.0, g), b.data.shape))

    return _make(out, (a, b), bwd)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a 2-d table by integer ids of any shape."""
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-d, got {table.shape}")
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.shape[0]}): "
            f"[{ids.min()}, {ids.max()}]"
        )
    out = table.data[ids]

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        _accum(table, full)

    return _make(out, (table,), bwd)


def scatter_rows(base: Tensor, idx: np.ndarray, values: Tensor) -> Tensor:
    """Copy of ``base`` with rows ``idx`` replaced by ``values``.

    ``idx`` must not contain duplicates.  Gradients flow to ``values`` at the
    replaced rows and to ``base`` everywhere else.
    """
    idx = np.asarray(idx)
    if base.ndim < 1 or values.shape != (len(idx),) + base.shape[1:]:
        raise DimensionError(
            f"scatter_rows: base {base.shape}, idx {idx.shape}, values {values.shape}"
        )
    out = base.data.copy()
    out[idx] = values.data

    def bwd(g):
        if values.requires_grad:
            _accum(values, g[idx])
        if base.requires_grad:
            gb = g.copy()
            gb[idx] = 0.0
            _accum(base, gb)

    return _make(out, (base, values), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    m = keep / np.asarray(1.0 - rate, dtype=x.dtype)
    out = x.data * m

    def bwd(g):
        _accum(x, g * m)

    return _make(out, (x,), bwd)


# ---------------------------------------------------------------------------
# initializers and checking


def xavier_uniform(rng: np.random.Generator, shape, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Glorot-style uniform init for 2-d weights."""
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def uniform_init(rng: np.random.Generator, shape, bound: float, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def grad_check(f: Callable[..., Tensor], inputs: Iterable[Tensor], eps: float = 1e-6) -> float:
    """Compare tape gradients of a scalar function against central differences.

    ``f`` must be deterministic and must read its arguments fresh on every
    call.  Returns the worst relative error over all requires_grad inputs,
    where the error for one input is max|analytic - numeric| divided by
    max(1, ||analytic||_inf, ||numeric||_inf).
    """
    inputs = list(inputs)
    for t in inputs:
        if isinstance(t, Tensor):
            t.grad = None  # stale grads from earlier passes would accumulate
    with Tape() as tape:
        out = f(*inputs)
        backward(tape, out)
    worst = 0.0
    for t in inputs:
        if not (isinstance(t, Tensor) and t.requires_grad):
            continue
        analytic = t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(*inputs).data)
            flat[i] = orig - eps
            fm = float(f(*inputs).data)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * eps)
        denom = max(1.0, float(np.abs(analytic).max(initial=0.0)), float(np.abs(numeric).max(initial=0.0)))
        worst = max(worst, float(np.abs(analytic - numeric).max(initial=0.0)) / denom)
    return worst
