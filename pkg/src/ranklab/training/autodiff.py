"""A small reverse-mode differentiation engine over numpy arrays.

Only the primitives the two models need are provided: broadcasting
add/sub/mul, ``matmul``, a per-token ``token_matmul``, ``einsum`` (two-operand contractions without
operand-local summed indices), ``reshape``, ``swapaxes``, ``concat``,
embedding ``gather``, ``layer_norm``, ``gelu``, ``relu``, ``sum``/``mean`` and
a fused sigmoid + binary cross-entropy on logits.

>>> x = Tensor(3.0, requires_grad=True)
>>> y = x * x
>>> y.backward()
>>> float(x.grad)
6.0
"""

from __future__ import annotations

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_K = 0.044715


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, value, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every tracked tensor."""
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        for node in order:
            node.grad = None
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward, op):
    track = any(p.requires_grad for p in parents)
    if not track:
        return Tensor(value, op=op)
    return Tensor(value, True, parents, backward, op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def neg(a):
    return _make(-a.value, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape),
                            _unbroadcast(g * a.value, b.shape)), "mul")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with at least 2 dimensions; use einsum")

    def backward(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.value @ b.value, (a, b), backward, "matmul")


def einsum(subscripts, a, b):
    """Two-operand einsum, e.g. ``einsum("btd,tdm->btm", x, w)``."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for s, other in ((sa, sb), (sb, sa)):
        missing = set(s) - set(other) - set(out)
        if missing:
            raise ValueError(f"index {sorted(missing)} is summed inside one operand only")

    def backward(g):
        return (np.einsum(f"{out},{sb}->{sa}", g, b.value),
                np.einsum(f"{out},{sa}->{sb}", g, a.value))

    return _make(np.einsum(subscripts, a.value, b.value), (a, b), backward, "einsum")


def token_matmul(x, w):
    """Per-token linear map: ``x[B, T, D]`` with ``w[T, D, m]`` gives ``[B, T, m]``."""
    x, w = as_tensor(x), as_tensor(w)
    xt = np.swapaxes(x.value, 0, 1)

    def backward(g):
        gt = np.swapaxes(g, 0, 1)
        gx = np.swapaxes(gt @ np.swapaxes(w.value, -1, -2), 0, 1)
        gw = np.swapaxes(xt, -1, -2) @ gt
        return gx, gw

    return _make(np.swapaxes(xt @ w.value, 0, 1), (x, w), backward, "token_matmul")


def reshape(a, shape):
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def swapaxes(a, i, j):
    return _make(np.swapaxes(a.value, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.value for t in tensors], axis=axis),
                 tuple(tensors), backward, "concat")


def gather(table, index):
    """Rows of ``table`` selected by an integer array (embedding lookup)."""
    index = np.asarray(index)

    def backward(g):
        out = np.zeros_like(table.value)
        np.add.at(out, index, g)
        return (out,)

    return _make(table.value[index], (table,), backward, "gather")


def layer_norm(a, eps=1e-5):
    """Per-row normalization over the last axis, no affine parameters."""
    x = a.value
    xc = x - x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _make(y, (a,), backward, "layer_norm")


def gelu(a):
    x = a.value
    x2 = x * x
    u = _GELU_C * x * (1.0 + _GELU_K * x2)
    t = np.tanh(u)

    def backward(g):
        dudx = _GELU_C * (1.0 + 3.0 * _GELU_K * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dudx),)

    return _make(0.5 * x * (1.0 + t), (a,), backward, "gelu")


def relu(a):
    x = a.value
    return _make(np.maximum(x, 0.0), (a,), lambda g: (g * (x > 0),), "relu")


def activation(a, kind):
    if kind == "gelu":
        return gelu(a)
    if kind == "relu":
        return relu(a)
    raise ValueError(f"unknown activation {kind!r}")


def sum(a, axis=None):
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(np.sum(a.value, axis=axis), (a,), backward, "sum")


def mean(a, axis=None):
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 labels."""
    z = logits.value
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and labels {y.shape} differ in shape")
    loss = np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z))))

    def backward(g):
        return (g * (sigmoid(z) - y) / z.size,)

    return _make(loss, (logits,), backward, "bce")
