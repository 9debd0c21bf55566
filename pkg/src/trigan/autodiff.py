"""Minimal reverse-mode automatic differentiation over dense 2D tensors.

All values are float64 matrices of shape (rows, cols); scalars are (1, 1).
Operations execute eagerly with numpy and record nodes on the active Tape,
which `backward` replays once in reverse to accumulate exact gradients.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

# Probabilities are clamped away from {0, 1} before any log so that the
# adversarial losses stay finite at saturated discriminators.
PROB_CLAMP = 1e-7


class AutodiffError(Exception):
    """Base class for contract violations inside the autodiff layer."""


class ShapeError(AutodiffError):
    pass


class DomainError(AutodiffError):
    pass


class NumericError(AutodiffError):
    pass


_STACK = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_STACK, "tapes", None)
    if stack is None:
        stack = []
        _STACK.tapes = stack
    return stack


def active_tape() -> "Tape":
    stack = _tape_stack()
    if not stack:
        raise AutodiffError("no active Tape; wrap the computation in `with Tape():`")
    return stack[-1]


class Tensor:
    """Dense float64 matrix with a same-shape gradient accumulator.

    The gradient buffer is allocated lazily but always reads as zeros until
    backward writes into it.
    """

    __slots__ = ("data", "_grad", "node_id")

    def __init__(self, values) -> None:
        data = np.array(values, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise ShapeError(f"tensors are 2D; got shape {data.shape}")
        self.data = data
        self._grad: np.ndarray | None = None
        self.node_id = -1

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        # Fast path for op outputs: adopt a freshly computed float64 array.
        obj = cls.__new__(cls)
        obj.data = data
        obj._grad = None
        obj.node_id = -1
        return obj

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Tensor":
        return cls._wrap(np.zeros((rows, cols)))

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Tensor":
        return cls._wrap(np.full((rows, cols), float(value)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self._grad = None

    def detach(self) -> "Tensor":
        """Copy of the values as a fresh leaf; gradients do not flow back."""
        return Tensor._wrap(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class _Node:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._ids: dict[int, int] = {}

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        assert popped is self

    def _register(self, tensor: Tensor) -> None:
        key = id(tensor)
        if key not in self._ids:
            self._ids[key] = len(self._ids)
        tensor.node_id = self._ids[key]

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        for t in inputs:
            self._register(t)
        self._register(output)
        self.nodes.append(_Node(output, inputs, backward_fn))

    def contains(self, tensor: Tensor) -> bool:
        return id(tensor) in self._ids


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into `.grad` of every tensor reachable
    from `loss` on the active tape.  Repeated calls add up until zero_grad.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = active_tape()
    # Per-call adjoints, flushed into .grad at the end so repeated backward
    # calls stay exactly additive.  `owned` marks arrays this pass may mutate
    # or adopt; anything straight out of a backward_fn may alias its caller's
    # buffers and must be copied first.
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    owned: set[int] = {id(loss)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes):
        out_adj = adjoint.get(id(node.output))
        if out_adj is None:
            continue
        for tensor, contrib in zip(node.inputs, node.backward_fn(out_adj)):
            key = id(tensor)
            if key in adjoint:
                if key in owned:
                    adjoint[key] += contrib
                else:
                    adjoint[key] = adjoint[key] + contrib
                    owned.add(key)
            else:
                adjoint[key] = contrib
                holders[key] = tensor
    # Flush into the gradient accumulators, adopting adjoint arrays where
    # that cannot alias another tensor's gradient (pass-through adjoints can
    # be shared objects and concat adjoints are views).
    adopted: set[int] = set()
    for key, arr in adjoint.items():
        tensor = holders[key]
        if tensor._grad is None:
            if arr.base is not None or id(arr) in adopted:
                tensor._grad = arr.copy()
            else:
                tensor._grad = arr
                adopted.add(id(arr))
        else:
            tensor._grad += arr


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def _record(output: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    active_tape().record(output, inputs, backward_fn)
    return output


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    a_data, b_data = a.data, b.data
    return _record(out, (a, b), lambda g: (g @ b_data.T, a_data.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise addition; `b` may be a single bias row broadcast over rows."""
    if a.shape == b.shape:
        out = Tensor._wrap(a.data + b.data)
        return _record(out, (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        out = Tensor._wrap(a.data + b.data)
        return _record(out, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise ShapeError(f"add needs equal shapes or a bias row: {a.shape} + {b.shape}")


def subtract(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"subtract needs equal shapes: {a.shape} - {b.shape}")
    out = Tensor._wrap(a.data - b.data)
    return _record(out, (a, b), lambda g: (g, -g))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"multiply needs equal shapes: {a.shape} * {b.shape}")
    out = Tensor._wrap(a.data * b.data)
    a_data, b_data = a.data, b.data
    return _record(out, (a, b), lambda g: (g * b_data, g * a_data))


def negate(a: Tensor) -> Tensor:
    out = Tensor._wrap(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor._wrap(np.where(mask, a.data, 0.0))
    return _record(out, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, float(slope))
    out = Tensor._wrap(a.data * factor)
    return _record(out, (a,), lambda g: (g * factor,))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor._wrap(t)
    return _record(out, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function with outputs clamped to [PROB_CLAMP, 1 - PROB_CLAMP]."""
    s = np.clip(expit(a.data), PROB_CLAMP, 1.0 - PROB_CLAMP)
    out = Tensor._wrap(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        bad = float(a.data[a.data <= 0.0][0])
        raise DomainError(f"log of non-positive value {bad}")
    out = Tensor._wrap(np.log(a.data))
    a_data = a.data
    return _record(out, (a,), lambda g: (g / a_data,))


def log_sigmoid(a: Tensor) -> Tensor:
    # Fused -softplus(-x): stable for |x| well beyond 30, never -inf.
    x = a.data
    out = Tensor._wrap(np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x))))
    return _record(out, (a,), lambda g: (g * expit(-x),))


def mean(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.array([[a.data.mean()]]))
    n = a.data.size
    shape = a.shape
    return _record(out, (a,), lambda g: (np.full(shape, g[0, 0] / n),))


def tensor_sum(a: Tensor) -> Tensor:
    out = Tensor._wrap(np.array([[a.data.sum()]]))
    shape = a.shape
    return _record(out, (a,), lambda g: (np.full(shape, g[0, 0]),))


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the feature axis (columns)."""
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat needs equal row counts: {a.shape} ++ {b.shape}")
    out = Tensor._wrap(np.concatenate([a.data, b.data], axis=1))
    split = a.shape[1]
    return _record(out, (a, b), lambda g: (g[:, :split], g[:, split:]))


_OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "negate": negate,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "log": log,
    "log_sigmoid": log_sigmoid,
    "mean": mean,
    "sum": tensor_sum,
    "concat": concat,
}

OP_KINDS: tuple[str, ...] = tuple(_OPS)


def apply(kind: str, *inputs: Tensor, **params) -> Tensor:
    """Apply a registered operation by name (see OP_KINDS)."""
    try:
        op = _OPS[kind]
    except KeyError:
        raise AutodiffError(f"unknown operation kind {kind!r}") from None
    return op(*inputs, **params)


def gradient_check(
    f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5
) -> float:
    """Max relative error between analytic gradients of the scalar `f()` and
    central finite differences over every entry of `params`.

    `f` must rebuild its computation from the current parameter values on
    each call (a fresh tape is opened around it).
    """
    if step <= 0:
        raise AutodiffError(f"step must be positive, got {step}")

    def evaluate() -> float:
        with Tape():
            out = f()
        return out.item()

    zero_grads(params)
    with Tape():
        out = f()
        if out.data.size != 1:
            raise ShapeError(f"gradient_check needs a scalar f, got {out.shape}")
        backward(out)
    analytic = [p.grad.copy() for p in params]
    zero_grads(params)

    worst = 0.0
    for pi, (p, grads) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        gflat = grads.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = evaluate()
            flat[i] = orig - step
            f_minus = evaluate()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(
                    f"non-finite f output while perturbing parameter {pi} entry {i}"
                )
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
