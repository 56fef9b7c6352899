"""Dense-tensor engine with tape-based reverse-mode automatic differentiation.

Every trainable component in this package (text encoder, sequence encoders,
top model, classifier heads) is built from the operations defined here.
Tensors wrap float64 numpy arrays; all shapes are 0-, 1- or 2-dimensional.
Broadcasting is deliberately restricted to the two patterns the models need:
scalar-with-tensor and row-vector-over-matrix-rows.

Gradients are recorded on a :class:`Tape`. Operations executed while a tape
is active append one node each, in construction order, which is already a
topological order; :func:`backward` replays the nodes exactly once in
reverse. Operations executed with no active tape are pure forward
computations (inference mode).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ContractError(ValueError):
    """An operation was called outside its stated preconditions."""


def _as_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """A float64 array plus gradient bookkeeping.

    ``grad`` is allocated lazily by :func:`backward` and accumulates across
    repeated backward calls until cleared with :meth:`zero_grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_f64(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


def tensor(values, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(values, requires_grad=requires_grad, name=name)


def parameter(values, name: str = "") -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


class _Node:
    """One recorded operation: output tensor plus a function that maps the
    output gradient to per-input gradient contributions."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations.

    Nodes are appended in execution order, so every node's inputs were
    produced by earlier nodes (or are leaves); the backward pass walks the
    list once in reverse. One tape per training step, single-threaded.
    """

    _active: list["Tape"] = []

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._active.pop()

    @staticmethod
    def current() -> Optional["Tape"]:
        return Tape._active[-1] if Tape._active else None


def _record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
            backward_fn: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    tape = Tape.current()
    if tape is not None and needs:
        tape.nodes.append(_Node(op, inputs, out, backward_fn))
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers (restricted patterns only)

def _binary_shapes_ok(a: np.ndarray, b: np.ndarray) -> bool:
    if a.shape == b.shape:
        return True
    if b.size == 1 or a.size == 1:
        return True
    # row vector against matrix rows
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return True
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return True
    return False


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    if shape == () or (len(shape) == 1 and shape[0] == 1 and grad.size != 1):
        return np.asarray(grad.sum()).reshape(shape)
    if len(shape) == 1 and grad.ndim == 2 and grad.shape[1] == shape[0]:
        return grad.sum(axis=0)
    return grad.reshape(shape)


def _check_binary(op: str, a: Tensor, b: Tensor) -> None:
    if not _binary_shapes_ok(a.data, b.data):
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable")


# ---------------------------------------------------------------------------
# operations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g: np.ndarray):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _record("matmul", (a, b), out, bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("add", a, b)
    out = a.data + b.data

    def bw(g: np.ndarray):
        ga = _reduce_to(g, a.shape) if a.requires_grad else None
        gb = _reduce_to(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record("add", (a, b), out, bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("sub", a, b)
    out = a.data - b.data

    def bw(g: np.ndarray):
        ga = _reduce_to(g, a.shape) if a.requires_grad else None
        gb = _reduce_to(-g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record("sub", (a, b), out, bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("mul", a, b)
    out = a.data * b.data

    def bw(g: np.ndarray):
        ga = _reduce_to(g * b.data, a.shape) if a.requires_grad else None
        gb = _reduce_to(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record("mul", (a, b), out, bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c

    def bw(g: np.ndarray):
        return (g * c if a.requires_grad else None,)

    return _record("scale", (a,), out, bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g: np.ndarray, _out=out):
        return (g * (1.0 - _out * _out) if a.requires_grad else None,)

    return _record("tanh", (a,), out, bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g: np.ndarray, _out=out):
        return (g * _out * (1.0 - _out) if a.requires_grad else None,)

    return _record("sigmoid", (a,), out, bw)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bw(g: np.ndarray):
        return (g * (a.data > 0.0) if a.requires_grad else None,)

    return _record("relu", (a,), out, bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bw(g: np.ndarray, _out=out):
        return (g * _out if a.requires_grad else None,)

    return _record("exp", (a,), out, bw)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ContractError("log: inputs must be strictly positive")
    out = np.log(a.data)

    def bw(g: np.ndarray):
        return (g / a.data if a.requires_grad else None,)

    return _record("log", (a,), out, bw)


_ELEMENTWISE_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "exp": exp, "log": log}
_ELEMENTWISE_BINARY = {"add": add, "mul": mul, "sub": sub}


def elementwise(op: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Dispatch wrapper over the elementwise op table."""
    if op in _ELEMENTWISE_BINARY:
        if b is None:
            raise ContractError(f"{op} requires two operands")
        return _ELEMENTWISE_BINARY[op](a, b)
    if op in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ContractError(f"{op} takes a single operand")
        return _ELEMENTWISE_UNARY[op](a)
    raise ContractError(f"unknown elementwise op {op!r}")


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractError("concat of an empty tensor list")
    ndim = tensors[0].data.ndim
    if axis < 0 or axis >= max(ndim, 1):
        raise ShapeError(f"concat: axis {axis} out of range for {ndim}-d tensors")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != ndim:
            raise ShapeError(f"concat: rank mismatch {tensors[0].shape} vs {t.shape}")
        for ax in range(ndim):
            if ax != axis and other[ax] != base[ax]:
                raise ShapeError(
                    f"concat: non-axis dimensions disagree: {tensors[0].shape} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def bw(g: np.ndarray):
        grads = []
        for i, t in enumerate(tensors):
            if not t.requires_grad:
                grads.append(None)
                continue
            sl = [slice(None)] * ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(np.ascontiguousarray(g[tuple(sl)]))
        return grads

    return _record("concat", tuple(tensors), out, bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols: [{start}:{stop}] invalid for shape {a.shape}")
    out = np.ascontiguousarray(a.data[:, start:stop])

    def bw(g: np.ndarray):
        if not a.requires_grad:
            return (None,)
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _record("slice_cols", (a,), out, bw)


def embedding_gather(table: Tensor, ids: Sequence[int]) -> Tensor:
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_gather: table must be 2-d, got {table.shape}")
    vocab = table.shape[0]
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ContractError("embedding_gather: ids must be a flat list")
    bad = (idx < 0) | (idx >= vocab)
    if np.any(bad):
        culprit = int(idx[bad][0])
        raise IndexError(f"embedding_gather: id {culprit} out of range for table of {vocab} rows")
    out = table.data[idx]

    def bw(g: np.ndarray):
        if not table.requires_grad:
            return (None,)
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)  # repeated ids accumulate
        return (gt,)

    return _record("embedding_gather", (table,), out, bw)


def tile_rows(a: Tensor, times: int) -> Tensor:
    """Stack ``times`` copies of a matrix along axis 0 (broadcast over steps)."""
    if a.data.ndim != 2:
        raise ShapeError(f"tile_rows: expected a matrix, got shape {a.shape}")
    if times < 1:
        raise ContractError(f"tile_rows: times must be >= 1, got {times}")
    out = np.tile(a.data, (times, 1))
    rows = a.shape[0]

    def bw(g: np.ndarray):
        if not a.requires_grad:
            return (None,)
        return (g.reshape(times, rows, -1).sum(axis=0),)

    return _record("tile_rows", (a,), out, bw)


def mse_mean(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"mse_mean: shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n)

    def bw(g: np.ndarray):
        coeff = 2.0 * float(np.ravel(g)[0]) / n
        gp = coeff * diff if pred.requires_grad else None
        gt = -coeff * diff if target.requires_grad else None
        return gp, gt

    return _record("mse_mean", (pred, target), out, bw)


def tsum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())

    def bw(g: np.ndarray):
        return (np.full_like(a.data, float(np.ravel(g)[0])) if a.requires_grad else None,)

    return _record("sum", (a,), out, bw)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean cross-entropy of row-wise softmax against integer labels.

    Fused for numerical stability (max-shifted log-sum-exp).
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-d, got {logits.shape}")
    lab = np.asarray(labels, dtype=np.intp)
    n, k = logits.shape
    if lab.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {n} rows but {lab.shape} labels")
    if np.any((lab < 0) | (lab >= k)):
        raise ContractError("softmax_cross_entropy: label outside class range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    out = np.asarray(-np.log(probs[rows, lab]).mean())

    def bw(g: np.ndarray):
        if not logits.requires_grad:
            return (None,)
        gl = probs.copy()
        gl[rows, lab] -= 1.0
        gl *= float(np.ravel(g)[0]) / n
        return (gl,)

    return _record("softmax_cross_entropy", (logits,), out, bw)


def softmax_probs(logits: Tensor) -> np.ndarray:
    """Forward-only softmax used at prediction time."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate across calls; callers reset with ``zero_grad``.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = tape or Tape.current()
    if tape is None:
        raise ContractError("backward: no active tape recorded this loss")

    buffers: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {id(loss): loss}

    def deposit(t: Tensor, g: np.ndarray) -> None:
        key = id(t)
        buf = buffers.get(key)
        if buf is None:
            # copy: backward fns may hand back the upstream buffer itself
            buffers[key] = np.array(g)
            tensors[key] = t
        else:
            buf += g

    for node in reversed(tape.nodes):
        g_out = buffers.get(id(node.output))
        if g_out is None:
            continue
        for t, g in zip(node.inputs, node.backward_fn(g_out)):
            if g is not None and t.requires_grad:
                deposit(t, g)

    for key, buf in buffers.items():
        t = tensors[key]
        if t.requires_grad:
            t.grad = buf if t.grad is None else t.grad + buf
