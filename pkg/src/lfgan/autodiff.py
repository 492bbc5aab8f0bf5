"""Minimal reverse-mode automatic differentiation over numpy arrays.

A `Var` wraps a float64 ndarray and records the op that produced it; calling
`backward(root)` on a scalar root pushes exact gradients to every reachable
leaf. Gradients accumulate across backward calls until explicitly reset —
callers that want fresh gradients zero their parameters first.

Every op checks its forward value for NaN/Inf and raises naming the op, so a
blown-up training step points at the first bad node instead of a downstream
symptom. Broadcasting in add/mul follows numpy; the backward pass sums
gradients over the broadcast axes.
"""

import numpy as np


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _check(value, op):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value produced by op '{op}'")
    return value


class Var:
    """Node in the computation graph: a value, a grad slot and a backprop rule."""

    __slots__ = ("value", "grad", "op", "_prev", "_backward")

    # Make `ndarray <op> Var` dispatch to our reflected operators instead of
    # numpy building an object array elementwise.
    __array_ufunc__ = None

    def __init__(self, value, _prev=(), op="leaf"):
        self.value = _check(np.asarray(value, dtype=np.float64), op)
        self.grad = np.zeros_like(self.value)
        self.op = op
        self._prev = _prev
        self._backward = lambda: None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = as_var(other)
        out = Var(self.value + other.value, (self, other), "add")

        def _back():
            self.grad += _unbroadcast(out.grad, self.value.shape)
            other.grad += _unbroadcast(out.grad, other.value.shape)

        out._backward = _back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.value, (self,), "neg")

        def _back():
            self.grad -= out.grad

        out._backward = _back
        return out

    def __sub__(self, other):
        return self + (-as_var(other))

    def __rsub__(self, other):
        return as_var(other) + (-self)

    def __mul__(self, other):
        other = as_var(other)
        out = Var(self.value * other.value, (self, other), "mul")

        def _back():
            self.grad += _unbroadcast(out.grad * other.value, self.value.shape)
            other.grad += _unbroadcast(out.grad * self.value, other.value.shape)

        out._backward = _back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (as_var(other) ** -1.0)

    def __rtruediv__(self, other):
        return as_var(other) * (self ** -1.0)

    def __pow__(self, n):
        if isinstance(n, Var):
            raise TypeError("only constant exponents are supported")
        out = Var(self.value ** n, (self,), f"pow{n}")

        def _back():
            self.grad += out.grad * n * self.value ** (n - 1)

        out._backward = _back
        return out

    def __matmul__(self, other):
        other = as_var(other)
        if self.value.ndim != 2 or other.value.ndim != 2:
            raise ValueError(f"matmul expects 2-D operands, got "
                             f"{self.value.shape} @ {other.value.shape}")
        out = Var(self.value @ other.value, (self, other), "matmul")

        def _back():
            self.grad += out.grad @ other.value.T
            other.grad += self.value.T @ out.grad

        out._backward = _back
        return out

    def __rmatmul__(self, other):
        return as_var(other) @ self

    # -- nonlinearities -----------------------------------------------------

    def relu(self):
        out = Var(np.maximum(self.value, 0.0), (self,), "relu")

        def _back():
            self.grad += out.grad * (self.value > 0.0)

        out._backward = _back
        return out

    def tanh(self):
        t = np.tanh(self.value)
        out = Var(t, (self,), "tanh")

        def _back():
            self.grad += out.grad * (1.0 - t * t)

        out._backward = _back
        return out

    def exp(self):
        e = np.exp(self.value)
        out = Var(e, (self,), "exp")

        def _back():
            self.grad += out.grad * e

        out._backward = _back
        return out

    def log(self):
        out = Var(np.log(self.value), (self,), "log")

        def _back():
            self.grad += out.grad / self.value

        out._backward = _back
        return out

    # -- reductions and reshaping -------------------------------------------

    def sum(self, axis=None):
        out = Var(self.value.sum(axis=axis), (self,), "sum")

        def _back():
            g = out.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.value.shape)

        out._backward = _back
        return out

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        out = Var(self.value.mean(axis=axis), (self,), "mean")

        def _back():
            g = out.grad / n
            if axis is not None:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.value.shape)

        out._backward = _back
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Var(self.value.reshape(shape), (self,), "reshape")

        def _back():
            self.grad += out.grad.reshape(self.value.shape)

        out._backward = _back
        return out

    def __getitem__(self, idx):
        out = Var(self.value[idx], (self,), "slice")

        def _back():
            np.add.at(self.grad, idx, out.grad)

        out._backward = _back
        return out


def as_var(x):
    return x if isinstance(x, Var) else Var(x, op="const")


def concat(vars_, axis=0):
    """Concatenate along an axis; gradient splits back to the pieces."""
    vars_ = [as_var(v) for v in vars_]
    out = Var(np.concatenate([v.value for v in vars_], axis=axis), tuple(vars_), "concat")
    sizes = [v.value.shape[axis] for v in vars_]
    offsets = np.cumsum([0] + sizes)

    def _back():
        for v, lo, hi in zip(vars_, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * out.grad.ndim
            sl[axis] = slice(lo, hi)
            v.grad += out.grad[tuple(sl)]

    out._backward = _back
    return out


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer labels under softmax(logits).

    Fused for numerical stability: log-sum-exp with max subtraction forward,
    (softmax − one-hot)/B backward. `labels` is a plain int array of shape (B,).
    """
    labels = np.asarray(labels)
    if logits.value.ndim != 2 or labels.shape != (logits.value.shape[0],):
        raise ValueError(f"logits {logits.value.shape} vs labels {labels.shape}")
    z = logits.value
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(z.shape[0]), labels]
    out = Var(np.mean(lse - picked), (logits,), "softmax_xent")

    def _back():
        p = np.exp(z - zmax)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(z.shape[0]), labels] -= 1.0
        logits.grad += out.grad * p / z.shape[0]

    out._backward = _back
    return out


def backward(root):
    """Reverse-mode sweep from a scalar root.

    Leaf gradients accumulate across calls (two sweeps give exactly twice the
    gradient); op-produced nodes get a fresh grad each sweep, so re-running
    backward on the same graph never compounds through intermediates.
    """
    if root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
    topo, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node._prev:
            stack.append((child, False))
    for node in topo:
        if node._prev:
            node.grad = np.zeros_like(node.value)
    root.grad = root.grad + np.ones_like(root.value)
    for node in reversed(topo):
        node._backward()
        if not np.all(np.isfinite(node.grad)):
            raise FloatingPointError(f"non-finite gradient at op '{node.op}'")
