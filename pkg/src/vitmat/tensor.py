"""Minimal dense tensors with reverse-mode gradients.

Every op records its parents and a backward rule; ``Tensor.backward`` walks the
graph in reverse topological order and accumulates gradients into leaf tensors
created with ``requires_grad=True``.

Broadcasting is restricted to leading axes: two operands are compatible when
their shapes are equal or one shape is a trailing suffix of the other (a bias
of shape ``(D,)`` against activations ``(B, T, D)``). Gradients for the smaller
operand are summed over the prepended axes.

Precision: new tensors default to float32; ``precision("float64")`` switches
the default inside a ``with`` block. Ops keep the dtype of their inputs.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .rng import RngState

__all__ = [
    "Tensor", "DimensionError", "NumericError", "tensor", "zeros", "ones",
    "matmul", "add", "sub", "mul", "scale", "elementwise", "softmax",
    "layer_norm", "gelu", "reshape", "transpose", "concat", "take",
    "sum", "mean", "dropout", "make_op", "grad_check", "precision",
    "set_precision", "get_dtype", "no_grad", "rng_uniform", "rng_normal",
]

_DTYPES = {"float32": np.float32, "float64": np.float64}
_state = {"dtype": np.float32, "grad_enabled": True, "check_finite": False}

GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def get_dtype():
    return _state["dtype"]


def set_precision(name: str) -> None:
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _state["dtype"] = _DTYPES[name]


@contextlib.contextmanager
def precision(name: str):
    old = _state["dtype"]
    set_precision(name)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not isinstance(data, np.ndarray) or arr.dtype.kind != "f":
            arr = arr.astype(get_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    __matmul__ = lambda self, other: matmul(self, other)
    __add__ = lambda self, other: add(self, _wrap(other))
    __radd__ = lambda self, other: add(_wrap(other), self)
    __sub__ = lambda self, other: sub(self, _wrap(other))
    __mul__ = lambda self, other: (scale(self, other) if np.isscalar(other) else mul(self, _wrap(other)))
    __rmul__ = __mul__


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    order.reverse()
    return order


def make_op(name: str, data: np.ndarray, parents: Sequence[Tensor],
            backward: Callable[[np.ndarray], Iterable]) -> Tensor:
    """Wrap ``data`` as the output of op ``name``.

    ``backward`` maps the output gradient to one gradient (or None) per parent.
    """
    if _state["check_finite"] and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by op {name!r}")
    out = Tensor(data)
    out.op = name
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(data, dtype=get_dtype()), requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=get_dtype()), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=get_dtype()), requires_grad=requires_grad)


def rng_uniform(rng: RngState, shape) -> Tensor:
    return Tensor(rng.uniform(shape, dtype=get_dtype()))


def rng_normal(rng: RngState, shape, mean: float = 0.0, std: float = 1.0) -> Tensor:
    return Tensor(rng.normal(shape, mean, std, dtype=get_dtype()))


# -- broadcasting helpers ----------------------------------------------------

def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    short, long_ = (sa, sb) if len(sa) < len(sb) else (sb, sa)
    if len(short) == len(long_) or long_[len(long_) - len(short):] != short:
        raise DimensionError(f"{op}: incompatible shapes {sa} and {sb} "
                             "(only leading-axis broadcasting is supported)")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# -- elementwise ---------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    return make_op("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    return make_op("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    return make_op("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return make_op("scale", a.data * a.dtype.type(s), (a,), lambda g: (g * s,))


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU: ``0.5 x (1 + tanh(c (x + 0.044715 x^3)))``, c = sqrt(2/pi)."""
    xd = x.data
    t = np.tanh(GELU_C * (xd + GELU_A * xd * xd * xd))
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dt = GELU_C * (1.0 + 3.0 * GELU_A * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dt),)

    return make_op("gelu", out, (x,), backward)


# -- linear algebra --------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., M, K] @ b[..., K, N]``; leading axes equal, or ``b`` 2-D (shared weight)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} differ")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return make_op("matmul", out, (a, b), backward)


def _check_axis(x: Tensor, axis: int, op: str) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{op}: axis {axis} invalid for shape {x.shape}")
    return axis % x.ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op("softmax", y, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis; eps is added inside the square root."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: input {x.shape} needs gamma/beta of shape {(d,)}, "
                             f"got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return make_op("layer_norm", out, (x, gamma, beta), backward)


# -- shape ops -------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from exc
    return make_op("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_op("transpose", np.transpose(x.data, axes), (x,),
                   lambda g: (np.transpose(g, inverse),))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    out = np.concatenate([t.data for t in xs], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op("concat", out, xs, backward)


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """Select one position along ``axis`` (the axis is dropped)."""
    axis = _check_axis(x, axis, "take")
    out = np.take(x.data, index, axis=axis)

    def backward(g):
        full = np.zeros_like(x.data)
        sl = [slice(None)] * x.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return make_op("take", out, (x,), backward)


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return make_op("sum", np.asarray(x.data.sum()), (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return make_op("mean", np.asarray(x.data.mean()), (x,),
                   lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def dropout(x: Tensor, rate: float, rng: RngState) -> Tensor:
    """Inverted dropout; identity when ``rate == 0``."""
    if rate <= 0.0:
        return x
    keep = (rng.uniform(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return make_op("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# -- verification --------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5,
               indices: Sequence[int] | None = None, stencil: int = 2) -> float:
    """Max relative error between the analytic gradient of ``f`` at ``x`` and central differences.

    Per entry: ``|a - n| / max(|a|, |n|, 1e-8)``. ``indices`` restricts the
    comparison to those flat positions (all entries by default). ``stencil=2``
    is ``(f(x+h) - f(x-h)) / 2h``; ``stencil=4`` is the fourth-order
    ``(f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / 12h``, which tolerates a
    larger ``h`` and so suffers less round-off. ``x`` must be float64 and is
    restored afterwards.
    """
    if stencil not in (2, 4):
        raise ValueError(f"stencil must be 2 or 4, got {stencil}")
    if x.dtype != np.float64:
        raise NumericError(f"grad_check needs float64 input, got {x.dtype}")
    old_check, old_req = _state["check_finite"], x.requires_grad
    _state["check_finite"] = True
    try:
        x.requires_grad = True
        x.grad = None
        out = f(x)
        if out.data.size != 1:
            raise DimensionError(f"grad_check: f must return a scalar, got shape {out.shape}")
        out.backward()
        analytic = np.zeros(x.data.size) if x.grad is None else x.grad.reshape(-1).copy()
        x.grad = None
        flat = x.data.reshape(-1)
        positions = range(flat.size) if indices is None else indices
        worst = 0.0
        with no_grad():
            for i in positions:
                orig = flat[i]

                def at(step):
                    flat[i] = orig + step
                    return float(f(x).data)

                if stencil == 2:
                    num = (at(eps) - at(-eps)) / (2.0 * eps)
                else:
                    num = (at(-2 * eps) - 8.0 * at(-eps) + 8.0 * at(eps) - at(2 * eps)) / (12.0 * eps)
                flat[i] = orig
                a = analytic[i]
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                worst = max(worst, err)
        return worst
    finally:
        _state["check_finite"] = old_check
        x.requires_grad = old_req
