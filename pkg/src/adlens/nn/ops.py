"""The operation set: forward kernels plus their reverse-mode rules.

Every op validates shapes up front, checks its output for NaN/Inf (a hard
error naming the op, never a silent propagation), and records itself into the
active graph when one exists. Reductions accumulate in float64 and cast back
to the storage dtype.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import NonFiniteError, ShapeMismatch, Tensor, active_graph, as_tensor


def _finish(op: str, inputs, out_data, backward_fn) -> Tensor:
    out_arr = np.ascontiguousarray(out_data)
    if not np.isfinite(out_arr).all():
        raise NonFiniteError(f"op {op!r} produced non-finite values")
    out = Tensor(out_arr, _check=False)
    g = active_graph()
    if g is not None:
        g.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape the operand actually had."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _finish("matmul", (a, b), out, bwd)


def conv2d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution, inputs (N,C,H,W), weights (O,C,kh,kw)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d needs 4-D operands, got {x.shape} and {w.shape}")
    n, c, h, wdt = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeMismatch(f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}")
    if h + 2 * padding < kh or wdt + 2 * padding < kw:
        raise ShapeMismatch(f"conv2d kernel {w.shape} larger than padded input {x.shape}")
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (xp.shape[2] - kh) // stride + 1
    wo = (xp.shape[3] - kw) // stride + 1
    cols = kernels.im2col(xp, kh, kw, stride)
    w2 = w.data.reshape(o, -1)
    out = (w2 @ cols).reshape(n, o, ho, wo)
    xp_shape = xp.shape

    def bwd(g):
        gr = g.reshape(n, o, ho * wo)
        cols_again = kernels.im2col(
            np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data,
            kh,
            kw,
            stride,
        )
        gw = np.matmul(gr, np.swapaxes(cols_again, 1, 2)).sum(axis=0).reshape(w.shape)
        gcols = np.matmul(w2.T[None, :, :], gr)
        gxp = kernels.col2im(np.ascontiguousarray(gcols), xp_shape, kh, kw, stride)
        gx = gxp[:, :, padding : padding + h, padding : padding + wdt] if padding else gxp
        return np.ascontiguousarray(gx), gw

    return _finish("conv2d", (x, w), out, bwd)


# ---------------------------------------------------------------------------
# activations


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0)

    def bwd(g):
        return ((x.data > 0) * g,)

    return _finish("relu", (x,), out, bwd)


def elu(x, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    neg = alpha * np.expm1(np.minimum(x.data, 0))
    out = np.where(x.data > 0, x.data, neg)

    def bwd(g):
        return (np.where(x.data > 0, g, g * (neg + alpha)),)

    return _finish("elu", (x,), out, bwd)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _finish("sigmoid", (x,), out, bwd)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _finish("softmax", (x,), out, bwd)


# ---------------------------------------------------------------------------
# normalization


class BatchNormState:
    """Running statistics for one batch-norm layer (mutated in train mode)."""

    def __init__(self, channels: int):
        self.mean = np.zeros(channels, dtype=np.float64)
        self.var = np.ones(channels, dtype=np.float64)

    def as_dict(self):
        return {"mean": self.mean, "var": self.var}


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool,
               momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over (N,C) or (N,C,H,W); eval mode is affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim == 2:
        axes = (0,)
        expand = (1, -1)
    elif x.ndim == 4:
        axes = (0, 2, 3)
        expand = (1, -1, 1, 1)
    else:
        raise ShapeMismatch(f"batch_norm expects 2-D or 4-D input, got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeMismatch(f"batch_norm scale/shift must be shape ({channels},), got {gamma.shape}/{beta.shape}")

    if training:
        mu = x.data.mean(axis=axes, dtype=np.float64)
        var = x.data.var(axis=axes, dtype=np.float64)
        state.mean *= 1.0 - momentum
        state.mean += momentum * mu
        state.var *= 1.0 - momentum
        state.var += momentum * var
    else:
        mu = state.mean
        var = state.var
    mu_c = mu.astype(x.dtype).reshape(expand)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(expand)
    xhat = (x.data - mu_c) * inv
    out = xhat * gamma.data.reshape(expand) + beta.data.reshape(expand)
    count = x.data.size // channels

    def bwd(g):
        gview = gamma.data.reshape(expand)
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        if training:
            gmean = g.mean(axis=axes, keepdims=True)
            gx_mean = (g * xhat).sum(axis=axes, keepdims=True) / count
            dx = gview * inv * (g - gmean - xhat * gx_mean)
        else:
            dx = gview * inv * g
        return dx.astype(x.dtype, copy=False), dgamma.astype(gamma.dtype, copy=False), dbeta.astype(beta.dtype, copy=False)

    return _finish("batch_norm", (x, gamma, beta), out, bwd)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalization over the last axis with learnable scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise ShapeMismatch(f"layer_norm scale/shift must be shape ({dim},)")
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64).astype(x.dtype)
    var = x.data.var(axis=-1, keepdims=True, dtype=np.float64).astype(x.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gg = g * gamma.data
        gmean = gg.mean(axis=-1, keepdims=True)
        gxhat = (gg * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (gg - gmean - xhat * gxhat)
        return dx.astype(x.dtype, copy=False), dgamma, dbeta

    return _finish("layer_norm", (x, gamma, beta), out, bwd)


# ---------------------------------------------------------------------------
# pooling and reductions


def global_avg_pool(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"global_avg_pool expects (N,C,H,W), got {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)

    def bwd(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(x.dtype, copy=False),)

    return _finish("global_avg_pool", (x,), out, bwd)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)
    denom = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def bwd(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg / denom, x.shape).astype(x.dtype, copy=False),)

    return _finish("mean", (x,), out, bwd)


def total(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def bwd(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).astype(x.dtype, copy=False),)

    return _finish("total", (x,), out, bwd)


def mse(pred, target) -> Tensor:
    """Mean squared error reduced to a scalar."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse operands differ: {pred.shape} vs {target.shape}")
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    out = np.asarray((diff * diff).mean(), dtype=pred.dtype)
    scale = 2.0 / pred.size

    def bwd(g):
        base = (g.reshape(()) * scale) * diff
        return base.astype(pred.dtype, copy=False), (-base).astype(target.dtype, copy=False)

    return _finish("mse", (pred, target), out, bwd)


# ---------------------------------------------------------------------------
# structure


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish("add", (a, b), out, bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _finish("mul", (a, b), out, bwd)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeMismatch("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def bwd(g):
        splits = np.cumsum(sizes[:-1])
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return _finish("concat", tuple(parts), out, bwd)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.shape),)

    return _finish("reshape", (x,), out, bwd)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    inverse = np.argsort(axes)

    def bwd(g):
        return (np.ascontiguousarray(np.transpose(g, inverse)),)

    return _finish("transpose", (x,), out, bwd)


def embedding(table, ids) -> Tensor:
    """Row gather from an embedding table; gradient scatter-adds."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ShapeMismatch("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding id out of range for table with {table.shape[0]} rows")
    out = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _finish("embedding", (table,), out, bwd)
