"""Building blocks over a ParamStore: linear, conv, norm, residual, attention.

Weight init is fan-in-scaled uniform. Layers create their parameters at
construction and only read them afterwards, so a layer object can be reused
across graphs and threads.
"""

from __future__ import annotations

import numpy as np

from ..nn import ops
from ..nn.params import ParamStore


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, rng):
        self.store = store
        self.w = f"{name}.w"
        self.b = f"{name}.b"
        store.create(self.w, _uniform(rng, n_in, (n_in, n_out)))
        store.create(self.b, _uniform(rng, n_in, (n_out,)))

    def __call__(self, x):
        return ops.add(ops.matmul(x, self.store.tensor(self.w)), self.store.tensor(self.b))


class BatchNorm:
    def __init__(self, store: ParamStore, name: str, channels: int, momentum: float, eps: float):
        self.store = store
        self.gamma = f"{name}.gamma"
        self.beta = f"{name}.beta"
        self.momentum = momentum
        self.eps = eps
        store.create(self.gamma, np.ones(channels, dtype=np.float32))
        store.create(self.beta, np.zeros(channels, dtype=np.float32))
        self.state = ops.BatchNormState(channels)
        # buffers alias the state arrays so checkpoints carry running stats
        store.create_buffer(f"{name}.running_mean", self.state.mean)
        store.create_buffer(f"{name}.running_var", self.state.var)

    def __call__(self, x, training: bool):
        return ops.batch_norm(
            x,
            self.store.tensor(self.gamma),
            self.store.tensor(self.beta),
            self.state,
            training=training,
            momentum=self.momentum,
            eps=self.eps,
        )


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.store = store
        self.gamma = f"{name}.gamma"
        self.beta = f"{name}.beta"
        store.create(self.gamma, np.ones(dim, dtype=np.float32))
        store.create(self.beta, np.zeros(dim, dtype=np.float32))

    def __call__(self, x):
        return ops.layer_norm(x, self.store.tensor(self.gamma), self.store.tensor(self.beta))


class Conv:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 kernel: int, stride: int, padding: int, rng):
        self.store = store
        self.w = f"{name}.w"
        self.b = f"{name}.b"
        self.stride = stride
        self.padding = padding
        store.create(self.w, _uniform(rng, c_in * kernel * kernel, (c_out, c_in, kernel, kernel)))
        store.create(self.b, _uniform(rng, c_in * kernel * kernel, (c_out, 1, 1)))

    def __call__(self, x):
        out = ops.conv2d(x, self.store.tensor(self.w), stride=self.stride, padding=self.padding)
        return ops.add(out, self.store.tensor(self.b))


class ResBlock:
    """Two 3x3 convs with batch-norm; 1x1 projection shortcut when downsampling."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 stride: int, rng, momentum: float, eps: float):
        self.conv1 = Conv(store, f"{name}.conv1", c_in, c_out, 3, stride, 1, rng)
        self.bn1 = BatchNorm(store, f"{name}.bn1", c_out, momentum, eps)
        self.conv2 = Conv(store, f"{name}.conv2", c_out, c_out, 3, 1, 1, rng)
        self.bn2 = BatchNorm(store, f"{name}.bn2", c_out, momentum, eps)
        self.short = None
        if stride != 1 or c_in != c_out:
            self.short = Conv(store, f"{name}.short", c_in, c_out, 1, stride, 0, rng)
            self.short_bn = BatchNorm(store, f"{name}.short_bn", c_out, momentum, eps)

    def __call__(self, x, training: bool):
        h = ops.relu(self.bn1(self.conv1(x), training))
        h = self.bn2(self.conv2(h), training)
        skip = x if self.short is None else self.short_bn(self.short(x), training)
        return ops.relu(ops.add(h, skip))


class MlpStack:
    """Fully-connected stack with batch-norm and ELU after every layer."""

    def __init__(self, store: ParamStore, name: str, n_in: int, widths, rng,
                 momentum: float, eps: float, alpha: float):
        self.alpha = alpha
        self.layers = []
        prev = n_in
        for i, width in enumerate(widths):
            lin = Linear(store, f"{name}.fc{i}", prev, width, rng)
            bn = BatchNorm(store, f"{name}.bn{i}", width, momentum, eps)
            self.layers.append((lin, bn))
            prev = width
        self.out_width = prev

    def __call__(self, x, training: bool):
        for lin, bn in self.layers:
            x = ops.elu(bn(lin(x), training), alpha=self.alpha)
        return x


class TransformerBlock:
    """Post-norm block: multi-head self-attention then a 4x feed-forward."""

    def __init__(self, store: ParamStore, name: str, hidden: int, heads: int, rng):
        self.hidden = hidden
        self.heads = heads
        self.head_dim = hidden // heads
        self.q = Linear(store, f"{name}.q", hidden, hidden, rng)
        self.k = Linear(store, f"{name}.k", hidden, hidden, rng)
        self.v = Linear(store, f"{name}.v", hidden, hidden, rng)
        self.proj = Linear(store, f"{name}.proj", hidden, hidden, rng)
        self.ln1 = LayerNorm(store, f"{name}.ln1", hidden)
        self.fc1 = Linear(store, f"{name}.fc1", hidden, 4 * hidden, rng)
        self.fc2 = Linear(store, f"{name}.fc2", 4 * hidden, hidden, rng)
        self.ln2 = LayerNorm(store, f"{name}.ln2", hidden)

    def _split_heads(self, t, b, length):
        return ops.transpose(ops.reshape(t, (b, length, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, x, attn_bias):
        b, length, hidden = x.shape
        query = self._split_heads(self.q(x), b, length)
        key = self._split_heads(self.k(x), b, length)
        value = self._split_heads(self.v(x), b, length)
        scores = ops.matmul(query, ops.transpose(key, (0, 1, 3, 2)))
        scores = ops.mul(scores, np.float32(1.0 / np.sqrt(self.head_dim)))
        if attn_bias is not None:
            scores = ops.add(scores, attn_bias)
        weights = ops.softmax(scores, axis=-1)
        context = ops.matmul(weights, value)  # (B, heads, L, hd)
        context = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (b, length, hidden))
        x = self.ln1(ops.add(x, self.proj(context)))
        ff = self.fc2(ops.relu(self.fc1(x)))
        return self.ln2(ops.add(x, ff))
