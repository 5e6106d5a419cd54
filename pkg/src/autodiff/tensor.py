# src/autodiff/tensor.py

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """
    Raised when the operands of an op do not have conforming shapes.
    """


# --------- Tensor + tape --------- #

class DiffTensor:
    """
    Dense float64 array that takes part in reverse-mode differentiation.
    """

    __slots__ = ("values", "requires_grad", "grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values: np.ndarray = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item: expected a single value, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class TapeRecord:
    op: str
    inputs: Tuple[DiffTensor, ...]
    output: DiffTensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """
    Ordered record of executed ops. Rebuilt on every forward pass (define-by-run).
    """

    def __init__(self) -> None:
        self.records: List[TapeRecord] = []

    def record(self, rec: TapeRecord) -> None:
        self.records.append(rec)

    def clear(self) -> None:
        self.records = []

    def __len__(self) -> int:
        return len(self.records)


_state = threading.local()


def get_tape() -> Tape:
    """
    Tape of the calling thread.
    """
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


def _recording() -> bool:
    return not getattr(_state, "no_grad", False)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Evaluate ops without recording, even on parameters that require grad.
    """
    previous = getattr(_state, "no_grad", False)
    _state.no_grad = True
    try:
        yield
    finally:
        _state.no_grad = previous


def as_tensor(x) -> DiffTensor:
    if isinstance(x, DiffTensor):
        return x
    return DiffTensor(x, requires_grad=False)


def _emit(op: str, value: np.ndarray, inputs: Tuple[DiffTensor, ...], vjp) -> DiffTensor:
    needs_grad = _recording() and any(t.requires_grad for t in inputs)
    out = DiffTensor(value, requires_grad=needs_grad)
    if needs_grad:
        get_tape().record(TapeRecord(op=op, inputs=inputs, output=out, vjp=vjp))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sum an adjoint back down to the shape of the operand that was broadcast.
    """
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result_shape(op: str, a: DiffTensor, b: DiffTensor) -> Tuple[int, ...]:
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        shape = None
    # one operand must already carry the full result shape
    if shape is None or shape not in (a.shape, b.shape):
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform")
    return shape


# --------- Ops --------- #

def matmul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    av, bv = a.values, b.values

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _emit("matmul", av @ bv, (a, b), vjp)


def add(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _result_shape("add", a, b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _emit("add", a.values + b.values, (a, b), vjp)


def mul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    _result_shape("mul", a, b)
    av, bv = a.values, b.values

    def vjp(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _emit("mul", av * bv, (a, b), vjp)


def concat(tensors: Sequence) -> DiffTensor:
    """
    Concatenate along the last axis.
    """
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise ShapeError("concat: no inputs")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.values.ndim != len(lead) + 1 or p.shape[:-1] != lead:
            raise ShapeError(f"concat: shapes {parts[0].shape} and {p.shape} do not conform")
    widths = [p.shape[-1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=-1))

    return _emit("concat", np.concatenate([p.values for p in parts], axis=-1), parts, vjp)


def reshape(x, shape: Sequence[int]) -> DiffTensor:
    x = as_tensor(x)
    try:
        value = x.values.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from exc
    original = x.shape

    def vjp(g):
        return (g.reshape(original),)

    return _emit("reshape", value, (x,), vjp)


def relu(x) -> DiffTensor:
    x = as_tensor(x)
    mask = x.values > 0

    def vjp(g):
        return (g * mask,)

    return _emit("relu", np.where(mask, x.values, 0.0), (x,), vjp)


def sigmoid(x) -> DiffTensor:
    x = as_tensor(x)
    s = expit(x.values)

    def vjp(g):
        return (g * s * (1.0 - s),)

    return _emit("sigmoid", s, (x,), vjp)


def softplus(x) -> DiffTensor:
    x = as_tensor(x)
    xv = x.values

    def vjp(g):
        return (g * expit(xv),)

    return _emit("softplus", np.logaddexp(0.0, xv), (x,), vjp)


def sin(x) -> DiffTensor:
    x = as_tensor(x)
    xv = x.values

    def vjp(g):
        return (g * np.cos(xv),)

    return _emit("sin", np.sin(xv), (x,), vjp)


def cos(x) -> DiffTensor:
    x = as_tensor(x)
    xv = x.values

    def vjp(g):
        return (-g * np.sin(xv),)

    return _emit("cos", np.cos(xv), (x,), vjp)


def exp(x) -> DiffTensor:
    x = as_tensor(x)
    e = np.exp(x.values)

    def vjp(g):
        return (g * e,)

    return _emit("exp", e, (x,), vjp)


def neg(x) -> DiffTensor:
    x = as_tensor(x)

    def vjp(g):
        return (-g,)

    return _emit("neg", -x.values, (x,), vjp)


def sum(x, axis: Optional[int] = None, keepdims: bool = False) -> DiffTensor:  # noqa: A001
    x = as_tensor(x)
    original = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, original).copy(),)

    return _emit("sum", np.sum(x.values, axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x, axis: Optional[int] = None, keepdims: bool = False) -> DiffTensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def squared_error(pred, target) -> DiffTensor:
    """
    Mean of squared differences over all elements (scalar).
    """
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"squared_error: shapes {pred.shape} and {target.shape} do not conform")
    diff = pred.values - target.values
    n = diff.size

    def vjp(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return _emit("squared_error", np.array(np.mean(diff * diff)), (pred, target), vjp)


# --------- Backward --------- #

def backward(loss: DiffTensor) -> None:
    """
    Replay the tape in reverse, accumulating adjoints into every tensor that
    requires grad. Clears the tape afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = get_tape()
    if len(tape) == 0:
        raise RuntimeError("backward: tape is empty (did the loss depend on any parameter?)")

    loss.grad = np.ones_like(loss.values)
    for rec in reversed(tape.records):
        g = rec.output.grad
        if g is None:
            continue
        for tensor, adj in zip(rec.inputs, rec.vjp(g)):
            if not tensor.requires_grad or adj is None:
                continue
            if tensor.grad is None:
                tensor.grad = np.array(adj, dtype=np.float64).reshape(tensor.shape)
            else:
                tensor.grad = tensor.grad + adj
    tape.clear()


# --------- Parameters --------- #

def init_parameters(layer_dims: Sequence[int], seed: int) -> List[DiffTensor]:
    """
    Glorot-uniform weights and zero biases for a chain of dense layers.

    Returns [w0, b0, w1, b1, ...] with w_i of shape (dims[i], dims[i+1]).
    """
    if len(layer_dims) < 2 or any(int(d) <= 0 for d in layer_dims):
        raise ValueError(f"layer dims must be >= 2 positive sizes, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    params: List[DiffTensor] = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params.append(DiffTensor(w, requires_grad=True))
        params.append(DiffTensor(np.zeros(fan_out), requires_grad=True))
    return params
