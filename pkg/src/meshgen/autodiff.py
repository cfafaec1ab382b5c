"""Minimal dense-tensor reverse-mode autodiff on top of numpy.

A ``Tensor`` wraps an ndarray and records a closure for the local backward
rule.  Calling ``backward()`` on a scalar loss runs a topological sweep.
Arrays keep whatever float dtype they were created with: training uses
float32, gradient-check tests use float64.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False, parents=(), bw=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._bw = bw

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return add(self, mul_scalar(_wrap(other, self.dtype), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _needs(*ts: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in ts)


def _accum(t: Tensor, g: np.ndarray) -> None:
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data
    if not _needs(a, b):
        return Tensor(out_data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    return Tensor(out_data, True, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data
    if not _needs(a, b):
        return Tensor(out_data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return Tensor(out_data, True, (a, b), bw)


def mul_scalar(a: Tensor, s: float) -> Tensor:
    out_data = a.data * s
    if not _needs(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * s)

    return Tensor(out_data, True, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix multiply with broadcasting over leading axes."""
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data
    if not _needs(a, b):
        return Tensor(out_data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return Tensor(out_data, True, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)
    if not _needs(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * (a.data > 0))

    return Tensor(out_data, True, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    out_data = e / e.sum(axis=axis, keepdims=True)
    if not _needs(a):
        return Tensor(out_data)

    def bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - dot))

    return Tensor(out_data, True, (a,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    if gain.data.shape != (x.data.shape[-1],) or bias.data.shape != (x.data.shape[-1],):
        raise ValueError(
            f"layer_norm gain/bias shape {gain.data.shape}/{bias.data.shape} "
            f"does not match feature dim of {x.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gain.data + bias.data
    if not _needs(x, gain, bias):
        return Tensor(out_data)

    def bw(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))

    return Tensor(out_data, True, (x, gain, bias), bw)


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by an integer index array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = table.data[idx]
    if not _needs(table):
        return Tensor(out_data)

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        _accum(table, gt)

    return Tensor(out_data, True, (table,), bw)


def take_along(x: Tensor, idx: np.ndarray) -> Tensor:
    """Per-batch gather: x [B, S, E], idx [B, T] -> [B, T, E]."""
    idx = np.asarray(idx, dtype=np.int64)
    b = np.arange(x.data.shape[0])[:, None]
    out_data = x.data[b, idx]
    if not _needs(x):
        return Tensor(out_data)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (b, idx), g)
        _accum(x, gx)

    return Tensor(out_data, True, (x,), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator,
            train: bool) -> Tensor:
    """Inverted dropout: identity in eval mode, expectation-preserving in train."""
    if not train or rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    scale = 1.0 / (1.0 - rate)
    out_data = x.data * keep * scale
    if not _needs(x):
        return Tensor(out_data)

    def bw(g):
        _accum(x, g * keep * scale)

    return Tensor(out_data, True, (x,), bw)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not _needs(*tensors):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return Tensor(out_data, True, tuple(tensors), bw)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)
    if not _needs(x):
        return Tensor(out_data)

    def bw(g):
        _accum(x, g.reshape(x.data.shape))

    return Tensor(out_data, True, (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    out_data = np.transpose(x.data, axes)
    if not _needs(x):
        return Tensor(out_data)
    inv = np.argsort(axes)

    def bw(g):
        _accum(x, np.transpose(g, inv))

    return Tensor(out_data, True, (x,), bw)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)
    if not _needs(x):
        return Tensor(out_data)

    def bw(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(x, np.broadcast_to(gg, x.data.shape))

    return Tensor(out_data, True, (x,), bw)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul_scalar(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def slice_axis(x: Tensor, axis: int, lo: int, hi: int) -> Tensor:
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(lo, hi)
    sl = tuple(sl)
    out_data = x.data[sl]
    if not _needs(x):
        return Tensor(out_data)

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        _accum(x, gx)

    return Tensor(out_data, True, (x,), bw)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         additive_mask: np.ndarray | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d) + mask) v over the last two axes.

    The additive mask uses large negative values (not -inf) so that
    gradients through fully-masked logits are exactly zero after softmax.
    """
    d = q.data.shape[-1]
    scores = mul_scalar(matmul(q, transpose(k, _swap_last(k.data.ndim))), 1.0 / math.sqrt(d))
    if additive_mask is not None:
        scores = add(scores, Tensor(np.asarray(additive_mask, dtype=q.dtype)))
    attn = softmax(scores, axis=-1)
    return matmul(attn, v)


def _swap_last(ndim: int) -> tuple:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


NEG_INF = -1e9


def cross_entropy_logits(logits: Tensor, targets: np.ndarray,
                         weights: np.ndarray | None = None) -> Tensor:
    """Weighted sum of per-position NLL in nats, numerically fused.

    logits [..., K], targets integer [...], weights float [...] (1 = count,
    0 = padding).  Returns a scalar Tensor.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.data.shape[:-1]:
        raise ValueError(
            f"targets shape {targets.shape} does not match logits {logits.data.shape}")
    if weights is None:
        weights = np.ones(targets.shape, dtype=logits.data.dtype)
    else:
        weights = np.asarray(weights, dtype=logits.data.dtype)
    m = logits.data.max(axis=-1, keepdims=True)
    e = np.exp(logits.data - m)
    z = e.sum(axis=-1, keepdims=True)
    logz = np.log(z) + m
    true_logit = np.take_along_axis(logits.data, targets[..., None], axis=-1)[..., 0]
    nll = (logz[..., 0] - true_logit) * weights
    out_data = np.asarray(nll.sum(), dtype=logits.data.dtype)
    if not _needs(logits):
        return Tensor(out_data)

    def bw(g):
        probs = e / z
        grad = probs * weights[..., None]
        flat = grad.reshape(-1, grad.shape[-1])
        flat[np.arange(flat.shape[0]), targets.reshape(-1)] -= weights.reshape(-1)
        _accum(logits, grad * g)

    return Tensor(out_data, True, (logits,), bw)
