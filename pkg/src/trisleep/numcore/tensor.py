"""Reverse-mode autodiff over dense numpy buffers.

A Tensor wraps a float array and records, for each op that produced it, a
closure that routes the output gradient back to the op's inputs. Calling
``backward()`` on a scalar walks the recorded graph in reverse topological
order. Training runs in float32; ``shadow_dtype`` temporarily switches new
tensors to float64 so the gradient checker operates at full precision.

Every forward op validates that its output is finite and raises
NonFiniteError otherwise; NaN/Inf never propagates silently.
"""

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class LabelError(ValueError):
    """A class label is outside the supported set."""


class NonFiniteError(ArithmeticError):
    """A forward op produced NaN or Inf."""


_default_dtype = np.float32
_grad_enabled = True


def default_dtype():
    return _default_dtype


@contextmanager
def shadow_dtype(dtype):
    """Temporarily change the dtype of newly constructed tensors."""
    global _default_dtype
    previous = _default_dtype
    _default_dtype = dtype
    try:
        yield
    finally:
        _default_dtype = previous


@contextmanager
def no_grad():
    """Skip graph construction inside the block; forward values only."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape`` by summing added axes."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_default_dtype)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor constructed from non-finite data")
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"{op} produced a non-finite value")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # ---- basic properties ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._backward = None
        out._parents = ()
        return out

    # ---- backward pass ---------------------------------------------------

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- arithmetic ------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._from_op(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            a = self
            s = float(other)

            def backward_scalar(g):
                a._accumulate(g * s)

            return Tensor._from_op(a.data * s, (a,), backward_scalar, "scale")

        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, other):
        return matmul(self, other)

    # ---- shape ops ---------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        src_shape = a.data.shape

        def backward(g):
            a._accumulate(g.reshape(src_shape))

        return Tensor._from_op(a.data.reshape(shape), (a,), backward, "reshape")

    def transpose(self, *axes) -> "Tensor":
        a = self
        if not axes:
            axes = tuple(reversed(range(a.data.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)

        def backward(g):
            a._accumulate(g.transpose(inverse))

        return Tensor._from_op(a.data.transpose(axes), (a,), backward, "transpose")

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    # ---- reductions / nonlinearities ---------------------------------------

    def mean(self, axis=None) -> "Tensor":
        a = self
        count = a.data.size if axis is None else a.data.shape[axis]

        def backward(g):
            if axis is None:
                a._accumulate(np.full_like(a.data, g / count))
            else:
                a._accumulate(np.expand_dims(g, axis) / count * np.ones_like(a.data))

        return Tensor._from_op(a.data.mean(axis=axis), (a,), backward, "mean")

    def sum(self, axis=None) -> "Tensor":
        a = self

        def backward(g):
            if axis is None:
                a._accumulate(np.full_like(a.data, g))
            else:
                a._accumulate(np.expand_dims(g, axis) * np.ones_like(a.data))

        return Tensor._from_op(a.data.sum(axis=axis), (a,), backward, "sum")

    def relu(self) -> "Tensor":
        a = self

        def backward(g):
            a._accumulate(g * (a.data > 0))

        return Tensor._from_op(np.maximum(a.data, 0), (a,), backward, "relu")

    def gelu(self) -> "Tensor":
        # tanh form; smooth everywhere, which keeps finite differences honest
        a = self
        c = math.sqrt(2.0 / math.pi)
        inner = c * (a.data + 0.044715 * a.data**3)
        t = np.tanh(inner)

        def backward(g):
            sech2 = 1.0 - t * t
            d_inner = c * (1.0 + 3 * 0.044715 * a.data**2)
            a._accumulate(g * (0.5 * (1.0 + t) + 0.5 * a.data * sech2 * d_inner))

        return Tensor._from_op(0.5 * a.data * (1.0 + t), (a,), backward, "gelu")


class Parameter(Tensor):
    """A named, trainable tensor. Names are unique within a model and stable
    across checkpoint save/load."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


# ---- free functions --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-d, or stacked 3-d with broadcasting over the batch axis."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, shifted by the row max for overflow safety."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (p * g).sum(axis=-1, keepdims=True)
        x._accumulate(p * (g - inner))

    return Tensor._from_op(p, (x,), backward, "softmax_rows")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each vector along the last axis to zero mean / unit variance,
    then apply the affine (gamma, beta)."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.data.shape}/{beta.data.shape} do not match feature dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(term * inv_std)

    return Tensor._from_op(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


def conv1d(x: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Valid (no padding) 1-d convolution.

    x: (C_in, T), kernels: (C_out, C_in, K) -> (C_out, T') with
    T' = floor((T - K) / stride) + 1.
    """
    c_in, t = x.data.shape
    c_out, kc_in, k = kernels.data.shape
    if kc_in != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.data.shape} vs kernels {kernels.data.shape}")
    if t < k:
        raise ShapeError(f"conv1d input too short: T={t} < K={k}")
    if stride < 1:
        raise ShapeError(f"conv1d stride must be >= 1, got {stride}")
    t_out = (t - k) // stride + 1

    # windows: (C_in, T', K) view, no copy
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=1)[:, ::stride]
    out = np.tensordot(kernels.data, windows, axes=([1, 2], [0, 2]))

    def backward(g):
        if kernels.requires_grad:
            kernels._accumulate(np.tensordot(g, windows, axes=([1], [1])))
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            # for a fixed kernel offset the written input slots are a disjoint
            # strided slice, so K slice-adds replace a scatter
            contrib = np.tensordot(kernels.data, g, axes=([0], [0]))  # (C_in, K, T')
            for off in range(k):
                gx[:, off : off + stride * (t_out - 1) + 1 : stride] += contrib[:, off, :]
            x._accumulate(gx)

    return Tensor._from_op(out, (x, kernels), backward, "conv1d")


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits).

    logits: (B, C); labels: length-B ints in {0, 1}. The fused gradient is
    (softmax - onehot) / B.
    """
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy_logits expects (B, C) logits, got {logits.data.shape}")
    b, c = logits.data.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    labels = labels.astype(np.int64)

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    nll = log_z - shifted[np.arange(b), labels]
    loss = nll.mean()

    def backward(g):
        p = np.exp(shifted - log_z[:, None])
        p[np.arange(b), labels] -= 1.0
        logits._accumulate(g * p / b)

    return Tensor._from_op(np.asarray(loss), (logits,), backward, "cross_entropy_logits")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(a, b)
                t._accumulate(g[tuple(idx)])

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def take_rows(x: Tensor, indices) -> Tensor:
    """Select rows of a 2-d tensor; backward scatter-adds into the source."""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, indices, g)
        x._accumulate(gx)

    return Tensor._from_op(x.data[indices], (x,), backward, "take_rows")


def time_interp(x: Tensor, n_out: int) -> Tensor:
    """Linearly resample a (N, D) tensor to (n_out, D) along the time axis.

    Endpoints map onto endpoints; interior positions interpolate between the
    two bracketing frames. Differentiable: the map is linear in x.
    """
    n_src = x.data.shape[0]
    if n_src < 1:
        raise ShapeError("time_interp needs at least one source frame")
    if n_out < 1:
        raise ShapeError(f"time_interp target length must be >= 1, got {n_out}")
    if n_out == 1:
        pos = np.zeros(1)
    elif n_src == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * (n_src - 1) / (n_out - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, n_src - 1)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = (pos - lo).astype(x.data.dtype)[:, None]

    out = x.data[lo] * (1.0 - frac) + x.data[hi] * frac

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, lo, g * (1.0 - frac))
        np.add.at(gx, hi, g * frac)
        x._accumulate(gx)

    return Tensor._from_op(out, (x,), backward, "time_interp")


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scale surviving activations by 1/(1-rate) so eval
    needs no rescaling. Callers skip this op entirely when not training."""
    if rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ValueError(f"dropout rate must be < 1, got {rate}")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def backward(g):
        x._accumulate(g * keep)

    return Tensor._from_op(x.data * keep, (x,), backward, "dropout")
