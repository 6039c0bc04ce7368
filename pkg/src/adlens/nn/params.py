"""Named parameter and buffer storage shared by model components."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, TensorError, active_graph


class ParamStore:
    """Holds the current value of every named parameter and buffer.

    ``tensor(name)`` hands out a stable wrapper for the current array and, when
    a graph is recording, registers it there so gradients come back under the
    same name. Buffers (batch-norm running stats) are mutable arrays that never
    receive gradients.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, np.ndarray] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._wrappers: dict[str, Tensor] = {}

    # -- parameters -----------------------------------------------------------

    def create(self, name: str, array: np.ndarray) -> None:
        if name in self._params or name in self._buffers:
            raise TensorError(f"duplicate parameter name {name!r}")
        self._params[name] = np.ascontiguousarray(array, dtype=self.dtype)

    def get(self, name: str) -> np.ndarray:
        return self._params[name]

    def set(self, name: str, array: np.ndarray) -> None:
        if name not in self._params:
            raise TensorError(f"unknown parameter {name!r}")
        self._params[name] = np.ascontiguousarray(array, dtype=self.dtype)
        self._wrappers.pop(name, None)

    def tensor(self, name: str) -> Tensor:
        wrapper = self._wrappers.get(name)
        if wrapper is None or wrapper.data is not self._params[name]:
            wrapper = Tensor(self._params[name], _check=False)
            self._wrappers[name] = wrapper
        g = active_graph()
        if g is not None:
            g.register_param(name, wrapper)
        return wrapper

    def names(self, prefix: str = "") -> list[str]:
        return sorted(n for n in self._params if n.startswith(prefix))

    # -- buffers ---------------------------------------------------------------

    def create_buffer(self, name: str, array: np.ndarray) -> None:
        if name in self._params or name in self._buffers:
            raise TensorError(f"duplicate buffer name {name!r}")
        self._buffers[name] = np.asarray(array)

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def buffer_names(self, prefix: str = "") -> list[str]:
        return sorted(n for n in self._buffers if n.startswith(prefix))

    # -- persistence -------------------------------------------------------------

    def state_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {f"param:{n}": self._params[n] for n in self.names(prefix)}
        out.update({f"buffer:{n}": self._buffers[n] for n in self.buffer_names(prefix)})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        for key, arr in arrays.items():
            kind, _, name = key.partition(":")
            if not name.startswith(prefix):
                continue
            if kind == "param":
                self.set(name, arr)
            elif kind == "buffer":
                buf = self._buffers.get(name)
                if buf is None:
                    raise TensorError(f"unknown buffer {name!r}")
                if buf.shape != arr.shape:
                    raise TensorError(f"buffer {name!r} shape changed: {buf.shape} vs {arr.shape}")
                buf[...] = arr
            else:
                raise TensorError(f"unknown state entry kind {kind!r}")

    def clone_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays(prefix).items()}
