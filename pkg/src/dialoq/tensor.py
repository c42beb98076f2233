"""Reverse-mode autodiff over flat numpy arrays.

Every value is a Tensor wrapping a C-contiguous float array (float32 in
training, float64 available for numerical verification). Operations record
their parents and a backward closure; Tensor.backward() walks the recorded
graph once and releases it.

Backward closures pass `own=True` to accumulate_grad when the gradient
array is freshly allocated and never shared, letting the first accumulation
adopt it without a copy.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / rollouts)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.ascontiguousarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # internal fast path for op outputs; arr is trusted as-is (views allowed)
        out = cls.__new__(cls)
        out.data = arr
        out.grad = None
        out.requires_grad = False
        out.name = ""
        out._parents = ()
        out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype})"

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate_grad(self, g: np.ndarray, own: bool = False):
        if self.grad is None:
            self.grad = g if own and g.flags.writeable else g.copy()
        else:
            self.grad += g

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def backward(self):
        """Backpropagate from a scalar; populates .grad on requires_grad leaves.

        The recorded trace is released afterwards; a second call on the same
        graph raises.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        if self._backward is None and not self._parents:
            raise RuntimeError("backward() before any recorded forward trace")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            # release the trace; intermediate grads are not retained
            node._backward = None
            node._parents = ()
            if not node.requires_grad and node is not self:
                node.grad = None


def _as_tensor(x, dtype=np.float32) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor._wrap(data)
    if _GRAD_ENABLED:
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(g):
        if a.data.shape == g.shape:
            a.accumulate_grad(g)
        else:
            a.accumulate_grad(_unbroadcast(g, a.data.shape), own=True)
        if b.data.shape == g.shape:
            b.accumulate_grad(g)
        else:
            b.accumulate_grad(_unbroadcast(g, b.data.shape), own=True)

    return _make(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def backward(g):
        if a.data.shape == g.shape:
            a.accumulate_grad(g)
        else:
            a.accumulate_grad(_unbroadcast(g, a.data.shape), own=True)
        gb = _unbroadcast(-g, b.data.shape)
        b.accumulate_grad(gb, own=True)

    return _make(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(g):
        a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape), own=True)
        b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape), own=True)

    return _make(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * a.data.dtype.type(c)

    def backward(g):
        a.accumulate_grad(g * a.data.dtype.type(c), own=True)

    return _make(out, (a,), backward)


def square(a: Tensor) -> Tensor:
    out = a.data * a.data

    def backward(g):
        a.accumulate_grad(g * 2.0 * a.data, own=True)

    return _make(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b. Supports 2-D weights on either side and stacked (batched) inputs."""
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        a.accumulate_grad(_unbroadcast(ga, a.data.shape), own=True)
        if b.data.ndim == 2 and a.data.ndim > 2:
            # (..., n, k) @ (k, m): fold the leading axes into one GEMM
            k = a.data.shape[-1]
            m = g.shape[-1]
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
            b.accumulate_grad(gb, own=True)
        else:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            b.accumulate_grad(_unbroadcast(gb, b.data.shape), own=True)

    return _make(out, (a, b), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = a.data.reshape(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return _make(out, (a,), backward)


def transpose(a: Tensor, axes: tuple) -> Tensor:
    out = a.data.transpose(axes)  # a view; consumers may copy as needed
    inv = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate_grad(np.ascontiguousarray(g.transpose(inv)), own=True)

    return _make(out, (a,), backward)


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    out = np.concatenate([a.data, b.data], axis=-1)
    na = a.data.shape[-1]

    def backward(g):
        a.accumulate_grad(np.ascontiguousarray(g[..., :na]), own=True)
        b.accumulate_grad(np.ascontiguousarray(g[..., na:]), own=True)

    return _make(out, (a, b), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1),
                  g.reshape(-1, table.data.shape[-1]))

    return _make(out, (table,), backward)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor."""
    idx = np.asarray(idx)
    out = a.data[idx]

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    return _make(out, (a,), backward)


def select_token(a: Tensor, t: int) -> Tensor:
    """x[:, t, :] for a (B, n, d) tensor."""
    out = np.ascontiguousarray(a.data[:, t, :])

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[:, t, :] = g
        a.accumulate_grad(ga, own=True)

    return _make(out, (a,), backward)


def take_per_row(a: Tensor, cols: np.ndarray) -> Tensor:
    """out[i] = a[i, cols[i]] for a 2-D tensor."""
    cols = np.asarray(cols)
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, cols]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[rows, cols] = g
        a.accumulate_grad(ga, own=True)

    return _make(out, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = a.data
    c = x.dtype.type(math.sqrt(2.0 / math.pi))
    k = x.dtype.type(0.044715)
    u = c * (x + k * x * x * x)
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        du = c * (1.0 + 3.0 * k * x * x)
        ga = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
        ga *= g
        a.accumulate_grad(ga.astype(x.dtype, copy=False), own=True)

    return _make(out, (a,), backward)


def softmax_lastdim(a: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; `additive_mask` is added to the logits first."""
    x = a.data
    if additive_mask is not None:
        y = x + additive_mask
    else:
        y = x.copy()
    y -= y.max(axis=-1, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        ga = (g - dot) * y
        a.accumulate_grad(ga, own=True)

    return _make(y, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply gain+bias."""
    x = a.data
    d = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc
    xhat *= ivar
    out = xhat * gain.data + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gain.accumulate_grad((g * xhat).sum(axis=lead))
        bias.accumulate_grad(g.sum(axis=lead))
        gx = g * gain.data
        # d/dx of (x - mu) / sqrt(var + eps)
        gsum = gx.sum(axis=-1, keepdims=True)
        gdot = (gx * xhat).sum(axis=-1, keepdims=True)
        gx -= gsum / d
        gx -= xhat * (gdot / d)
        gx *= ivar
        a.accumulate_grad(gx.astype(x.dtype, copy=False), own=True)

    return _make(out, (a, gain, bias), backward)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        a.accumulate_grad(np.broadcast_to(g, a.data.shape).astype(a.data.dtype))

    return _make(out, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def backward(g):
        a.accumulate_grad(np.broadcast_to(g / n, a.data.shape).astype(a.data.dtype))

    return _make(out, (a,), backward)


def cross_entropy_sum(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Sum over rows of -log softmax(logits)[label]; labels is an int vector."""
    labels = np.asarray(labels)
    x = logits.data
    if x.ndim != 2:
        raise ValueError("cross_entropy_sum expects (rows, classes) logits")
    if labels.shape != (x.shape[0],):
        raise ValueError("labels must align with logits rows")
    xmax = x.max(axis=-1)
    shifted = x - xmax[:, None]
    logz = np.log(np.exp(shifted).sum(axis=-1)) + xmax
    rows = np.arange(x.shape[0])
    nll = logz - x[rows, labels]
    out = np.asarray(nll.sum(), dtype=x.dtype)

    def backward(g):
        e = np.exp(shifted)
        e /= e.sum(axis=-1, keepdims=True)
        e[rows, labels] -= 1.0
        e *= g
        logits.accumulate_grad(e.astype(x.dtype, copy=False), own=True)

    return _make(out, (logits,), backward)
