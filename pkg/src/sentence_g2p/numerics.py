"""Dense tensors with reverse-mode automatic differentiation.

The graph is a dynamically built tape: every tracked operation records a
node holding its inputs and a backward closure, and ``backward`` walks the
nodes once in reverse topological order. Tensors hold numpy arrays; float64
is the default and is mandatory for gradient tests, float32 is available
for training speed.

Conventions used throughout the package:
  * batched activations are (B, T, D) or (B, D); single sequences are (T, D)
  * softmax/log_softmax normalize over the last axis
  * every stochastic op takes an explicit ``numpy.random.Generator``

Every value-producing op verifies that its output is finite and raises
``NonFiniteError`` (carrying the op name) otherwise. Pure data-movement ops
(reshape, narrow, concat, gather, sequence reversal) skip the check since
they cannot create non-finite values from finite inputs.
"""

from __future__ import annotations

import contextlib
import math
from typing import Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf. Carries the op identifier."""

    def __init__(self, op_id: str):
        super().__init__(f"non-finite values produced by op '{op_id}'")
        self.op_id = op_id


class GraphError(RuntimeError):
    """Misuse of the tape (non-scalar root, repeated backward, ...)."""


class TapeNode:
    """One recorded op: identifier, input tensors, and a backward closure.

    ``backward_fn(grad_out)`` returns one gradient array (or None) per input.
    """

    __slots__ = ("op_id", "inputs", "backward_fn", "consumed")

    def __init__(self, op_id, inputs, backward_fn):
        self.op_id = op_id
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.consumed = False


class Tensor:
    """A dense array, optionally participating in the differentiation tape."""

    __slots__ = ("data", "grad", "node", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, node: Optional[TapeNode] = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.node = node
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = "param" if self.requires_grad else ("node" if self.node else "const")
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, {tag})"

    # Operator sugar; everything routes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)


def param(data, dtype=None) -> Tensor:
    """A trainable leaf tensor."""
    arr = np.array(data, dtype=dtype if dtype is not None else None)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    """Coerce x to a Tensor; scalars adopt the dtype of ``like``."""
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def uniform_init(shape, k: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    return rng.uniform(-k, k, size=shape).astype(dtype)


def _ensure_finite(arr: np.ndarray, op_id: str):
    # Single-reduction fast path; the exact check only runs on suspicion
    # (a sum of finite values can overflow, hence the confirmation pass).
    s = arr.sum()
    if not math.isfinite(s):
        if not np.isfinite(arr).all():
            raise NonFiniteError(op_id)


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference, validation)."""
    global _GRAD_ENABLED
    saved = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


def _tracked(*tensors: Tensor) -> bool:
    if not _GRAD_ENABLED:
        return False
    return any(t.requires_grad or t.node is not None for t in tensors)


def _make(out_data, op_id, inputs, backward_fn, check=True) -> Tensor:
    if check:
        _ensure_finite(out_data, op_id)
    if _tracked(*inputs):
        return Tensor(out_data, node=TapeNode(op_id, inputs, backward_fn))
    return Tensor(out_data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc
    ash, bsh = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return _make(out, "add", (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(out, "mul", (a, b), backward)


def matmul(a, b, transpose_a: bool = False, transpose_b: bool = False) -> Tensor:
    """Matrix product with optional (cost-free) operand transposition.

    Supports 2-d operands and batched 3-d operands with numpy broadcasting
    of the leading batch axis; gradients are summed over broadcast axes.
    """
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul requires operands with ndim >= 2")
    aa = a.data.swapaxes(-1, -2) if transpose_a else a.data
    bb = b.data.swapaxes(-1, -2) if transpose_b else b.data
    if aa.shape[-1] != bb.shape[-2]:
        raise ShapeError(f"matmul: {aa.shape} @ {bb.shape}")
    out = aa @ bb

    def backward(g):
        ga = g @ bb.swapaxes(-1, -2)
        gb = aa.swapaxes(-1, -2) @ g
        ga = _unbroadcast(ga, aa.shape)
        gb = _unbroadcast(gb, bb.shape)
        if transpose_a:
            ga = ga.swapaxes(-1, -2)
        if transpose_b:
            gb = gb.swapaxes(-1, -2)
        return ga, gb

    return _make(out, "matmul", (a, b), backward)


# ---------------------------------------------------------------------------
# Activations and normalizers
# ---------------------------------------------------------------------------


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _make(y, "tanh", (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _make(y, "sigmoid", (x,), backward)


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _make(y, "softmax", (x,), backward)


def log_softmax(x) -> Tensor:
    """Log-softmax over the last axis."""
    x = as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True)) + m
    y = x.data - lse

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _make(y, "log_softmax", (x,), backward)


def l2_normalize(x, eps: float = 1e-12) -> Tensor:
    """Scale vectors along the last axis to unit L2 norm (0 stays 0)."""
    x = as_tensor(x)
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=-1, keepdims=True))
    safe = np.maximum(norm, eps)
    y = xd / safe

    def backward(g):
        dot = (xd * g).sum(axis=-1, keepdims=True)
        return (g / safe - xd * (dot / safe**3),)

    return _make(y, "l2_normalize", (x,), backward)


def dropout(x, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; the identity map (same tensor) in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout requires an explicit Generator")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    scale = 1.0 / (1.0 - rate)
    out = x.data * keep * scale

    def backward(g):
        return (g * keep * scale,)

    return _make(out, "dropout", (x,), backward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = x.data.sum(axis=axis)
    shape = x.data.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).astype(x.data.dtype, copy=True),)
        ge = np.expand_dims(g, axis=axis)
        return (np.broadcast_to(ge, shape).copy(),)

    return _make(out, "sum", (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis)
    shape = x.data.shape
    n = x.data.size if axis is None else shape[axis]

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / n, shape).astype(x.data.dtype, copy=True),)
        ge = np.expand_dims(g / n, axis=axis)
        return (np.broadcast_to(ge, shape).copy(),)

    return _make(out, "mean", (x,), backward)


# ---------------------------------------------------------------------------
# Data movement (no finite checks: permutation/selection of existing values)
# ---------------------------------------------------------------------------


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat along axis {axis}: {[t.shape for t in ts]}") from exc
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, "concat", tuple(ts), backward, check=False)


def gather_rows(table, ids) -> Tensor:
    """Row lookup into a 2-d table (embedding); ids is an integer array."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-d table")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(f"gather_rows: id out of range 0..{table.data.shape[0] - 1}")
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(out, "gather_rows", (table,), backward, check=False)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    orig = x.data.shape

    def backward(g):
        return (g.reshape(orig),)

    return _make(out, "reshape", (x,), backward, check=False)


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    x = as_tensor(x)
    if not 0 <= start <= start + length <= x.data.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + length}) outside axis {axis} of {x.shape}")
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = x.data[index]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _make(out, "narrow", (x,), backward, check=False)


def reverse_sequence(x, lengths) -> Tensor:
    """Reverse the first lengths[b] positions of each row along axis 1.

    x is (B, T, ...). Padding positions stay in place. The transform is an
    involution, so the backward pass applies the same index map.
    """
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeError("reverse_sequence expects (B, T, ...)")
    B, T = x.data.shape[:2]
    idx = np.broadcast_to(np.arange(T), (B, T)).copy()
    for b, L in enumerate(lengths):
        if not 0 <= L <= T:
            raise ShapeError(f"reverse_sequence: length {L} outside [0, {T}]")
        idx[b, :L] = np.arange(L - 1, -1, -1)
    rows = np.arange(B)[:, None]
    out = x.data[rows, idx]

    def backward(g):
        return (g[rows, idx],)

    return _make(out, "reverse_sequence", (x,), backward, check=False)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list:
    """Tensors with nodes, children before parents, each exactly once."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for inp in t.node.inputs:
            stack.append((inp, False))
    return order


def backward(root: Tensor) -> None:
    """Populate .grad on every tracked tensor reachable from root.

    Gradients accumulate (+=) across multiple uses of a tensor. Running
    backward twice on the same root is an error; rebuild the graph instead.
    """
    if root.node is None:
        raise GraphError("backward on a tensor that is not the result of tracked ops")
    if root.data.size != 1:
        raise GraphError(f"backward root must be scalar, got shape {root.data.shape}")
    if root.node.consumed:
        raise GraphError("backward already ran on this root; rebuild the graph")
    root.node.consumed = True

    order = _topo_order(root)
    root.grad = np.ones_like(root.data)
    for t in reversed(order):
        node = t.node
        g = t.grad
        if g is None:
            continue
        grads = node.backward_fn(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not (inp.requires_grad or inp.node is not None):
                continue
            if inp.grad is None:
                inp.grad = np.zeros_like(inp.data)
            inp.grad += gi


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
