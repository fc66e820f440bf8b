"""Reverse-mode automatic differentiation over numpy arrays.

A recording tape in the micrograd style, generalized to arrays: every
operation on a ``Var`` appends a node holding the forward value and a
closure that scatters the output cotangent back to the inputs.  Calling
``backward`` on a scalar loss walks the graph once in reverse topological
order and leaves ``.grad`` arrays on every reachable leaf.

The elementwise helpers (``exp``, ``log``, ``sin`` ...) dispatch on type:
given a plain ndarray they call numpy directly, given a ``Var`` they record
a node.  Code written against these helpers therefore runs unchanged in
"plain evaluation" and "tracked" mode, which is how the residual assembly
is shared between oracle checks and training.
"""

import numpy as np


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """Array node on the tape.

    ``value`` is always a float64 ndarray.  ``grad`` is populated by
    ``backward`` and has the same shape as ``value``.
    """

    __slots__ = ("value", "grad", "_parents", "_backward")

    # keep numpy from absorbing Vars into object arrays; binary ops with
    # ndarrays then defer to the reflected Var operators
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    # -- binary ops ---------------------------------------------------

    def __add__(self, other):
        other = lift(other)
        out = Var(self.value + other.value, (self, other))

        def bwd():
            self._accumulate(_unbroadcast(out.grad, self.shape))
            other._accumulate(_unbroadcast(out.grad, other.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = lift(other)
        out = Var(self.value - other.value, (self, other))

        def bwd():
            self._accumulate(_unbroadcast(out.grad, self.shape))
            other._accumulate(_unbroadcast(-out.grad, other.shape))

        out._backward = bwd
        return out

    def __rsub__(self, other):
        return lift(other) - self

    def __mul__(self, other):
        other = lift(other)
        out = Var(self.value * other.value, (self, other))

        def bwd():
            self._accumulate(_unbroadcast(out.grad * other.value, self.shape))
            other._accumulate(_unbroadcast(out.grad * self.value, other.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = lift(other)
        out = Var(self.value / other.value, (self, other))

        def bwd():
            self._accumulate(_unbroadcast(out.grad / other.value, self.shape))
            other._accumulate(
                _unbroadcast(-out.grad * self.value / other.value**2, other.shape)
            )

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return lift(other) / self

    def __neg__(self):
        out = Var(-self.value, (self,))

        def bwd():
            self._accumulate(-out.grad)

        out._backward = bwd
        return out

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("only constant exponents are supported")
        c = float(exponent)
        out = Var(self.value**c, (self,))

        def bwd():
            self._accumulate(out.grad * c * self.value ** (c - 1.0))

        out._backward = bwd
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # -- shape ops ----------------------------------------------------

    def __getitem__(self, idx):
        out = Var(self.value[idx], (self,))

        def bwd():
            g = np.zeros_like(self.value)
            np.add.at(g, idx, out.grad)
            self._accumulate(g)

        out._backward = bwd
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = Var(self.value.reshape(shape), (self,))

        def bwd():
            self._accumulate(out.grad.reshape(self.shape))

        out._backward = bwd
        return out

    def sum(self, axis=None, keepdims=False):
        out = Var(self.value.sum(axis=axis, keepdims=keepdims), (self,))

        def bwd():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape).copy())

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    def __repr__(self):
        return f"Var(shape={self.shape})"


def lift(x):
    """Wrap a constant as a leaf Var; Vars pass through."""
    return x if isinstance(x, Var) else Var(x)


def matmul(a, b):
    """Matrix product with reverse rule; ``b`` must be a rank-2 matrix."""
    if not isinstance(a, Var) and not isinstance(b, Var):
        return a @ b
    a, b = lift(a), lift(b)
    if b.ndim != 2 or a.ndim < 2:
        raise ValueError("matmul supports (..., n) @ (n, m) with rank-2 rhs")
    out = Var(a.value @ b.value, (a, b))

    def bwd():
        n, m = b.shape
        a._accumulate(out.grad @ b.value.T)
        b._accumulate(a.value.reshape(-1, n).T @ out.grad.reshape(-1, m))

    out._backward = bwd
    return out


def _unary(x, fn, dfn):
    if not isinstance(x, Var):
        return fn(x)
    out = Var(fn(x.value), (x,))

    def bwd():
        x._accumulate(out.grad * dfn(x.value, out.value))

    out._backward = bwd
    return out


def exp(x):
    return _unary(x, np.exp, lambda v, o: o)


def log(x):
    return _unary(x, np.log, lambda v, o: 1.0 / v)


def sin(x):
    return _unary(x, np.sin, lambda v, o: np.cos(v))


def cos(x):
    return _unary(x, np.cos, lambda v, o: -np.sin(v))


def tanh(x):
    return _unary(x, np.tanh, lambda v, o: 1.0 - o * o)


def sqrt(x):
    return _unary(x, np.sqrt, lambda v, o: 0.5 / o)


def square(x):
    return x * x


def backward(root, seed=None):
    """Reverse sweep from ``root``; accumulates ``.grad`` on reachable Vars.

    ``seed`` defaults to an array of ones (the usual choice is a scalar
    root, where that means d(root)/d(root) = 1).
    """
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward()


def loss_param_grad(loss_fn, params):
    """Gradient of ``loss_fn(params)`` with respect to ``params``.

    ``loss_fn`` maps a Var of ``params.shape`` to a scalar Var using tape
    operations.  Returns an ndarray of ``params.shape``; a loss that never
    touches the parameters yields the zero vector.
    """
    p = Var(params)
    out = loss_fn(p)
    if not isinstance(out, Var):
        return np.zeros_like(np.asarray(params, dtype=np.float64))
    backward(out)
    if p.grad is None:
        return np.zeros_like(p.value)
    return p.grad
