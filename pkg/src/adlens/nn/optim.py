"""Adam-style optimizer over a ParamStore."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, store, names, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.store = store
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {n: np.zeros_like(store.get(n), dtype=np.float32) for n in self.names}
        self._v = {n: np.zeros_like(store.get(n), dtype=np.float32) for n in self.names}

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name in self.names:
            g = grads.for_param(name).astype(np.float32, copy=False)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            update = (self.lr / bias1) * m / (np.sqrt(v / bias2) + self.eps)
            self.store.set(name, self.store.get(name) - update)
