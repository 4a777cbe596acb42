"""Minimal reverse-mode automatic differentiation on numpy arrays.

Values are float32 by default; ``precision(np.float64)`` switches newly created
tensors to float64 for tight gradient checks. Operations performed inside a
``Tape`` context are recorded; ``tape.backward(loss)`` then walks the record
in reverse and accumulates ``.grad`` on every tensor that requires it.

Broadcasting is limited to what the networks need: elementwise ops take equal
shapes, ``add_bias`` adds a vector along the last axis, and ``matmul`` accepts
leading batch dimensions on its left operand only.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np

_DTYPE = [np.float32]
_ACTIVE: list["Tape"] = []


class ShapeError(ValueError):
    pass


def default_dtype():
    return _DTYPE[-1]


@contextlib.contextmanager
def precision(dtype):
    _DTYPE.append(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.pop()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "vjp", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data, dtype=default_dtype())
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.vjp: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(data, requires_grad, name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations; each node's parents precede it."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def reset(self) -> None:
        self.nodes.clear()
        self.consumed = False

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def _record(out_data, parents: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = ""
    out.parents = ()
    out.vjp = None
    tracked = bool(_ACTIVE) and any(p.requires_grad for p in parents)
    out.requires_grad = tracked
    if tracked:
        out.parents = tuple(parents)
        out.vjp = vjp
        _ACTIVE[-1].nodes.append(out)
    return out


def _accumulate(t: Tensor, g) -> None:
    if not t.requires_grad or g is None:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``.grad`` of every tracked tensor reachable from ``loss``."""
    if loss.data.size != 1:
        raise ShapeError("backward needs a scalar loss")
    if tape.consumed:
        raise RuntimeError("tape already used for a backward pass; call reset() first")
    tape.consumed = True
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        grads = node.vjp(node.grad)
        for p, g in zip(node.parents, grads):
            _accumulate(p, g)
        if node is not loss:
            # interior grads are not needed afterwards
            node.grad = None


# -- elementwise ---------------------------------------------------------------


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    return _record(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant array of the same shape (or broadcastable to it)."""
    c = np.asarray(c, dtype=a.data.dtype)
    out = a.data * c
    if out.shape != a.shape:
        raise ShapeError("mul_const may not change the shape")
    return _record(out, (a,), lambda g: (g * c,))


def add_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=a.data.dtype)
    out = a.data + c
    if out.shape != a.shape:
        raise ShapeError("add_const may not change the shape")
    return _record(out, (a,), lambda g: (g,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., d] + b[d]."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: {x.shape} and {b.shape}")
    return _record(x.data + b.data, (x, b), lambda g: (g, g.reshape(-1, b.shape[0]).sum(axis=0)))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _record(y, (x,), lambda g: (g * (1 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _record(y, (x,), lambda g: (g * y * (1 - y),))


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e)).astype(z.dtype)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(x.data * mask, (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    z = x.data
    c = z.dtype.type(math.sqrt(2 / math.pi))
    inner = c * (z + z.dtype.type(0.044715) * z**3)
    t = np.tanh(inner)
    y = 0.5 * z * (1 + t)

    def vjp(g):
        dinner = c * (1 + 3 * z.dtype.type(0.044715) * z * z)
        return (g * (0.5 * (1 + t) + 0.5 * z * (1 - t * t) * dinner),)

    return _record(y, (x,), vjp)


def one_minus(x: Tensor) -> Tensor:
    return _record(1 - x.data, (x,), lambda g: (-g,))


# -- reductions and losses -----------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _record(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), lambda g: (np.broadcast_to(g, shape),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return _record(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,),
                   lambda g: (np.broadcast_to(g / n, shape),))


def mse(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mse")
    diff = a.data - b.data
    n = diff.size
    value = np.asarray((diff * diff).sum() / n, dtype=a.data.dtype)
    return _record(value, (a, b), lambda g: (2 * g * diff / n, -2 * g * diff / n))


def detach(x: Tensor) -> Tensor:
    """Same value, no gradient path back to ``x``."""
    return Tensor(x.data.copy())


def external_scalar(x: Tensor, value: float, grad) -> Tensor:
    """A scalar computed outside the graph from ``x``, with its known gradient.

    Used to connect numpy energies with analytic gradients to network outputs.
    """
    grad = np.asarray(grad, dtype=x.data.dtype)
    if grad.shape != x.shape:
        raise ShapeError("external gradient must match the input shape")
    return _record(np.asarray(value, dtype=x.data.dtype), (x,), lambda g: (g * grad,))


# -- shape ops -----------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return _record(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _record(np.concatenate([t.data for t in xs], axis=axis), tuple(xs),
                   lambda g: tuple(np.split(g, cuts, axis=axis)))


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return _record(x.data[start:stop].copy(), (x,), vjp)


def take_rows(x: Tensor, index) -> Tensor:
    """x[index] along the first axis (rows may repeat)."""
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def vjp(g):
        # scatter-add as a one-hot product: fast and in a fixed summation order
        onehot = np.zeros((shape[0], index.size), dtype=g.dtype)
        onehot[index, np.arange(index.size)] = 1
        return ((onehot @ g.reshape(index.size, -1)).reshape(shape),)

    return _record(x.data[index], (x,), vjp)


# -- linear algebra ------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a[..., m, k] @ b[k, n]."""
    if b.ndim != 2 or a.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

    def vjp(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _record(a.data @ b.data, (a, b), vjp)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched a[h, m, k] @ b[h, k, n]."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm: {a.shape} @ {b.shape}")
    return _record(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.transpose(0, 2, 1), a.data.transpose(0, 2, 1) @ g))


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(L, d) -> (heads, L, d/heads)."""
    L, d = x.shape
    if d % heads:
        raise ShapeError("model width must be divisible by the head count")
    dh = d // heads
    out = x.data.reshape(L, heads, dh).transpose(1, 0, 2).copy()
    return _record(out, (x,), lambda g: (g.transpose(1, 0, 2).reshape(L, d),))


def merge_heads(x: Tensor) -> Tensor:
    """(heads, L, dh) -> (L, heads*dh)."""
    h, L, dh = x.shape
    out = x.data.transpose(1, 0, 2).reshape(L, h * dh).copy()
    return _record(out, (x,), lambda g: (g.reshape(L, h, dh).transpose(1, 0, 2),))


def swap_last(x: Tensor) -> Tensor:
    """(h, m, n) -> (h, n, m)."""
    return _record(x.data.transpose(0, 2, 1).copy(), (x,), lambda g: (g.transpose(0, 2, 1),))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(y, (x,), vjp)


LN_EPS = 1e-5


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError("layernorm gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def vjp(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        flat_g = g.reshape(-1, d)
        return gx, (flat_g * xhat.reshape(-1, d)).sum(axis=0), flat_g.sum(axis=0)

    return _record(y, (x, gain, bias), vjp)


# -- composites ----------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return add_bias(y, b) if b is not None else y


def softmax_attention(Q: Tensor, K: Tensor, V: Tensor, heads: int, wq, wk, wv, wo) -> Tensor:
    """Multi-head scaled dot-product attention with input and output projections.

    ``wq`` etc. are (weight, bias) pairs. Q is (L_q, d); K and V are (L_k, d).
    """
    d = Q.shape[-1]
    if K.shape[-1] != d or V.shape[-1] != d or K.shape[0] != V.shape[0]:
        raise ShapeError("attention: inconsistent query/key/value shapes")
    if d % heads:
        raise ShapeError("model width must be divisible by the head count")
    q = split_heads(linear(Q, *wq), heads)
    k = split_heads(linear(K, *wk), heads)
    v = split_heads(linear(V, *wv), heads)
    logits = scale(bmm(q, swap_last(k)), 1.0 / math.sqrt(d // heads))
    att = softmax(logits)
    return linear(merge_heads(bmm(att, v)), *wo)


def gru_cell(x: Tensor, h: Tensor, w) -> Tensor:
    """Gated recurrent unit. ``w`` maps names to tensors:

    W_z, U_z, b_z (update gate), W_r, U_r, b_r (reset gate), W_n, U_n, b_n
    (candidate). h' = (1 - z) * n + z * h.
    """
    z = sigmoid(add_bias(add(matmul(x, w["W_z"]), matmul(h, w["U_z"])), w["b_z"]))
    r = sigmoid(add_bias(add(matmul(x, w["W_r"]), matmul(h, w["U_r"])), w["b_r"]))
    n = tanh(add_bias(add(matmul(x, w["W_n"]), matmul(mul(r, h), w["U_n"])), w["b_n"]))
    return add(mul(one_minus(z), n), mul(z, h))


# -- checks --------------------------------------------------------------------


def numerical_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function (evaluated in float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g
