"""
Reverse-mode automatic differentiation over numpy arrays.

Operations executed while a Tape is active are appended to it in execution
order, which is a topological order of the value graph. Tape.backward walks the
recording once, in reverse. Outside a tape nothing is recorded, so inference
over fixed parameters needs no bookkeeping and can run from several threads.
"""
import threading
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from utils.custom_exception import AutodiffError, DimensionError, PreconditionError

_state = threading.local()


def _active_tape() -> Optional["Tape"]:
    return getattr(_state, "tape", None)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array with an optional gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad", "name", "_backward")

    def __init__(self, values, requires_grad: bool = False, name: str = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise DimensionError(f"item() needs a single element, tensor '{self.name}' has shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.values.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True).reshape(self.values.shape)
        else:
            self.grad += grad

    def accumulate_at(self, index, grad: np.ndarray) -> None:
        """Scatter-add into rows selected by `index` without materializing a full-size temporary."""
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        np.add.at(self.grad, index, grad)

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(values, name: str = None) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64, copy=True), requires_grad=True, name=name)


class Tape:
    """
    Records primitive operations for one forward pass.

    Usage:
        with Tape() as tape:
            loss = model_loss(...)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[Tensor] = []
        self._consumed = False
        self._previous = None

    def __enter__(self) -> "Tape":
        self._previous = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = self._previous
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise AutodiffError("Tape already consumed by a backward pass; record a new forward pass first")
        if loss.values.size != 1:
            raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise AutodiffError("Loss does not depend on any trainable tensor recorded on this tape")
        self._consumed = True
        loss.accumulate(np.ones_like(loss.values))
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
            node._backward = None


def _result(values: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    tape = _active_tape()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=needs_grad)
    if needs_grad:
        out._backward = backward
        tape.record(out)
    return out


def _send(parent: Tensor, grad: np.ndarray) -> None:
    if parent.requires_grad:
        parent.accumulate(grad)


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g)
        _send(b, g)
    return _result(a.values + b.values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g)
        _send(b, -g)
    return _result(a.values - b.values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g * b.values)
        _send(b, g * a.values)
    return _result(a.values * b.values, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _send(a, g / b.values)
        _send(b, -g * a.values / (b.values * b.values))
    return _result(a.values / b.values, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _result(-a.values, (a,), lambda g: _send(a, -g))


def exp(a: Tensor) -> Tensor:
    out_values = np.exp(a.values)
    return _result(out_values, (a,), lambda g: _send(a, g * out_values))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.values), (a,), lambda g: _send(a, g / a.values))


def sigmoid(a: Tensor) -> Tensor:
    out_values = 0.5 * (np.tanh(0.5 * a.values) + 1.0)
    return _result(out_values, (a,), lambda g: _send(a, g * out_values * (1.0 - out_values)))


def tanh(a: Tensor) -> Tensor:
    out_values = np.tanh(a.values)
    return _result(out_values, (a,), lambda g: _send(a, g * (1.0 - out_values * out_values)))


def relu(a: Tensor) -> Tensor:
    positive = a.values > 0
    return _result(np.where(positive, a.values, 0.0), (a,), lambda g: _send(a, g * positive))


def where(mask, a, b) -> Tensor:
    """Select from `a` where the constant boolean `mask` holds, else from `b`."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)

    def backward(g):
        _send(a, np.where(mask, g, 0.0))
        _send(b, np.where(mask, 0.0, g))
    return _result(np.where(mask, a.values, b.values), (a, b), backward)


# reductions and shape plumbing

def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        if axis is None:
            _send(a, np.broadcast_to(g, a.shape))
        else:
            _send(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))
    return _result(a.values.sum(axis=axis), (a,), backward)


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.values.size if axis is None else a.values.shape[axis]
    return sum(a, axis=axis) / float(count)


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.values.reshape(shape), (a,), lambda g: _send(a, g.reshape(a.shape)))


def getitem(a: Tensor, key) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate_at(key, g)
    return _result(a.values[key], (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _send(t, piece)
    return _result(np.concatenate([t.values for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise PreconditionError("stack() needs at least one tensor")

    def backward(g):
        for i, t in enumerate(tensors):
            _send(t, np.take(g, i, axis=axis))
    return _result(np.stack([t.values for t in tensors], axis=axis), tensors, backward)


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Rows of a 2-d tensor by index; index -1 yields a zero row."""
    index = np.asarray(index, dtype=np.int64)
    valid = index >= 0
    out_values = np.zeros((index.shape[0],) + a.shape[1:])
    out_values[valid] = a.values[index[valid]]

    def backward(g):
        if a.requires_grad:
            a.accumulate_at(index[valid], g[valid])
    return _result(out_values, (a,), backward)


# dense layers

def linear(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    """y = x @ weight.T + bias for x of shape (..., in) and weight of shape (out, in)."""
    if x.shape[-1] != weight.shape[-1]:
        raise DimensionError(
            f"linear: input '{x.name or 'x'}' has {x.shape[-1]} features, "
            f"weight '{weight.name or 'W'}' expects {weight.shape[-1]}"
        )
    out_values = x.values @ weight.values.T
    if bias is not None:
        out_values = out_values + bias.values

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ weight.values)
        if weight.requires_grad:
            flat_g = g.reshape(-1, weight.shape[0])
            flat_x = x.values.reshape(-1, weight.shape[1])
            weight.accumulate(flat_g.T @ flat_x)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.reshape(-1, weight.shape[0]).sum(axis=0))
    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out_values, parents, backward)


def matvec(x: Tensor, w: Tensor) -> Tensor:
    """Contract the last axis of x (..., d) with a vector w (d,)."""
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"matvec: input has {x.shape[-1]} features, vector '{w.name or 'w'}' has {w.shape[0]}"
        )

    def backward(g):
        if x.requires_grad:
            x.accumulate(g[..., None] * w.values)
        if w.requires_grad:
            w.accumulate(np.tensordot(g, x.values, axes=g.ndim) if g.ndim else g * x.values)
    return _result(x.values @ w.values, (x, w), backward)


def weighted_sum(alpha: Tensor, xs: Tensor) -> Tensor:
    """o[..., :] = sum_t alpha[..., t] * xs[..., t, :]"""
    def backward(g):
        if alpha.requires_grad:
            alpha.accumulate(np.einsum("...d,...td->...t", g, xs.values))
        if xs.requires_grad:
            xs.accumulate(alpha.values[..., :, None] * g[..., None, :])
    return _result(np.einsum("...t,...td->...d", alpha.values, xs.values), (alpha, xs), backward)


def softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction; masked entries get probability 0."""
    values = x.values
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), values.shape)
        if not np.all(mask.any(axis=-1)):
            raise PreconditionError("softmax: every position of a row is masked")
        values = np.where(mask, values, -np.inf)
    shifted = values - values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _send(x, probs * (g - (g * probs).sum(axis=-1, keepdims=True)))
    return _result(probs, (x,), backward)


def embedding(table: Tensor, indices: np.ndarray, padding_idx: int = 0) -> Tensor:
    """Row lookup; gradient reaching the padding row is discarded."""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        if table.requires_grad:
            keep = indices != padding_idx
            table.accumulate_at(indices[keep], g[keep])
    return _result(table.values[indices], (table,), backward)


# gradient checking

ABSOLUTE_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABSOLUTE_FLOOR) -> float:
    """||a - n|| / (||a|| + ||n||); 0 when both gradients are below `floor`, i.e. finite-difference round-off."""
    diff = np.linalg.norm(analytic - numeric)
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return 0.0 if scale < floor else float(diff / scale)


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar fn() with respect to param."""
    grad = np.zeros_like(param.values)
    flat = param.values.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn().item()
        flat[i] = original - eps
        minus = fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2.0 * eps)
    return grad


def gradient_check(fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5) -> float:
    """Worst relative error between tape gradients and finite differences over `params`."""
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.values)
        worst = max(worst, relative_error(analytic, numerical_gradient(fn, p, eps)))
    return worst
