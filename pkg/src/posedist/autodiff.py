"""Minimal reverse-mode automatic differentiation on numpy arrays.

Only the primitives the pose-scoring pipeline needs: broadcasting
arithmetic, matmul, relu, reductions, row gather (with scatter-add
backward), axis max (argmax routing), concatenation, and a numerically
stable logsumexp. Graphs are built only when an input requires gradients,
so inference runs at plain-numpy speed.

Dtype follows the inputs: training uses float32 parameters; gradient-check
tests build float64 graphs for tight finite-difference tolerances.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def segment_sum_rows(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of `values` into `n` buckets given by `index` (scatter-add).

    Sort-based so it runs at memcpy-like speed where np.add.at would crawl.
    """
    out = np.zeros((n,) + values.shape[1:], dtype=values.dtype)
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    boundaries = np.flatnonzero(np.diff(sorted_idx)) + 1
    starts = np.concatenate(([0], boundaries))
    sums = np.add.reduceat(values[order], starts, axis=0)
    out[sorted_idx[starts]] = sums
    return out


class Tensor:
    """Node in the computation graph; wraps an ndarray and its gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray, fresh: bool = False):
        """Add into this tensor's gradient.

        `fresh` promises the buffer is newly allocated (or a view of a
        gradient that is dead after this step) and handed to this parent
        exclusively, so it can be adopted without a defensive copy.
        """
        if self.grad is None:
            self.grad = grad if fresh else np.array(grad)
        else:
            self.grad += grad

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)

        def backward(out):
            # a reduced gradient is a fresh buffer; the pass-through case
            # may hand the same array to both parents, so it must be copied
            if self.requires_grad:
                g = _unbroadcast(out.grad, self.data.shape)
                self._accumulate(g, fresh=g is not out.grad)
            if other.requires_grad:
                g = _unbroadcast(out.grad, other.data.shape)
                other._accumulate(g, fresh=g is not out.grad)

        return self._make(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(out):
            if self.requires_grad:
                self._accumulate(-out.grad, fresh=True)

        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)

        def backward(out):
            if self.requires_grad:
                g = _unbroadcast(out.grad * other.data, self.data.shape)
                self._accumulate(g, fresh=True)
            if other.requires_grad:
                g = _unbroadcast(out.grad * self.data, other.data.shape)
                other._accumulate(g, fresh=True)

        return self._make(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise TypeError("division only supported by plain scalars")
        return self * (1.0 / scalar)

    def matmul(self, other: "Tensor") -> "Tensor":
        other = self._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad @ other.data.T, fresh=True)
            if other.requires_grad:
                other._accumulate(self.data.T @ out.grad, fresh=True)

        return self._make(self.data @ other.data, (self, other), backward)

    __matmul__ = matmul

    def linear(self, weight: "Tensor", bias: "Tensor") -> "Tensor":
        """Fused x @ w + b; one graph node instead of matmul + add."""
        weight = self._lift(weight)
        bias = self._lift(bias)
        if self.data.ndim != 2 or weight.data.ndim != 2:
            raise ValueError("linear expects 2-D input and weight")

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad @ weight.data.T, fresh=True)
            if weight.requires_grad:
                weight._accumulate(self.data.T @ out.grad, fresh=True)
            if bias.requires_grad:
                bias._accumulate(out.grad.sum(axis=0), fresh=True)

        return self._make(self.data @ weight.data + bias.data,
                          (self, weight, bias), backward)

    # -- nonlinearity and reductions -------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * mask, fresh=True)

        return self._make(self.data * mask, (self,), backward)

    def sum(self, axis=None) -> "Tensor":
        def backward(out):
            if not self.requires_grad:
                return
            g = out.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            g = np.broadcast_to(g, self.data.shape).astype(self.data.dtype)
            self._accumulate(g, fresh=True)  # astype materializes a copy

        return self._make(self.data.sum(axis=axis), (self,), backward)

    def mean(self, axis=None) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) / n

    def max(self, axis: int) -> "Tensor":
        idx = np.argmax(self.data, axis=axis)

        def backward(out):
            if not self.requires_grad:
                return
            g = np.zeros_like(self.data)
            np.put_along_axis(
                g, np.expand_dims(idx, axis), np.expand_dims(out.grad, axis), axis=axis
            )
            self._accumulate(g, fresh=True)

        return self._make(np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis), (self,), backward)

    def logsumexp(self, axis=None) -> "Tensor":
        m = self.data.max(axis=axis, keepdims=True)
        shifted = self.data - m
        s = np.exp(shifted).sum(axis=axis, keepdims=True)
        value = (m + np.log(s))
        softmax = np.exp(shifted) / s
        if axis is None:
            value = value.reshape(())
        else:
            value = value.squeeze(axis)

        def backward(out):
            if not self.requires_grad:
                return
            g = out.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            self._accumulate(g * softmax, fresh=True)

        return self._make(value, (self,), backward)

    # -- indexing and shaping ---------------------------------------------------

    def gather_rows(self, index) -> "Tensor":
        """Select rows (axis 0) by an integer array; repeats allowed."""
        index = np.asarray(index)
        flat = index.reshape(-1)

        def backward(out):
            if not self.requires_grad:
                return
            g = out.grad.reshape(flat.shape[0], *self.data.shape[1:])
            self._accumulate(segment_sum_rows(g, flat, self.data.shape[0]), fresh=True)

        return self._make(self.data[index], (self,), backward)

    def take_scalar(self, index: int) -> "Tensor":
        """Extract one element of a 1-D tensor as a scalar tensor."""
        index = int(index)

        def backward(out):
            if not self.requires_grad:
                return
            g = np.zeros_like(self.data)
            g[index] = out.grad
            self._accumulate(g, fresh=True)

        return self._make(self.data[index], (self,), backward)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def backward(out):
            # the reshaped view aliases out.grad, which is dead once this
            # node's backward has run, so adopting it without a copy is safe
            if self.requires_grad:
                self._accumulate(out.grad.reshape(self.data.shape), fresh=True)

        return self._make(self.data.reshape(shape), (self,), backward)

    # -- graph traversal ---------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor outside any gradient graph")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate tensors along an axis, splitting gradients back."""
    tensors = [Tensor._lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        # disjoint slices of the (dead-after-this) out.grad buffer, one per
        # parent, so each may be adopted without copying
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * out.grad.ndim
                sl[axis if axis >= 0 else out.grad.ndim + axis] = slice(a, b)
                t._accumulate(out.grad[tuple(sl)], fresh=True)

    return Tensor._make(data, tensors, backward)


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function, for gradient tests."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g
