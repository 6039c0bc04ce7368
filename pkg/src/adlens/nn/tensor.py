"""Dense float tensors and the recording graph used for reverse-mode gradients.

A ``Graph`` is a tape: every operation from :mod:`adlens.nn.ops` appends a node
while the graph is active (``with graph: ...``). Tensors are immutable values;
recording is single-threaded per graph, but independent graphs may run on
separate threads (the active graph is thread-local).
"""

from __future__ import annotations

import threading

import numpy as np

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class TensorError(ValueError):
    pass


class NonFiniteError(TensorError):
    """Raised whenever a NaN or Inf would enter the computation."""


class ShapeMismatch(TensorError):
    pass


_ACTIVE = threading.local()


def active_graph():
    return getattr(_ACTIVE, "graph", None)


class Tensor:
    """Immutable dense array of 32- or 64-bit floats, stored row-major."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None, _check=True):
        arr = np.asarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        arr = np.ascontiguousarray(arr)
        if _check and not np.isfinite(arr).all():
            raise NonFiniteError("tensor holds non-finite values")
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        if dtype is not None and x.dtype != np.dtype(dtype):
            return Tensor(x.data, dtype=dtype, _check=False)
        return x
    return Tensor(x, dtype=dtype)


class Node:
    __slots__ = ("op", "input_ids", "output", "backward_fn")

    def __init__(self, op, input_ids, output, backward_fn):
        self.op = op
        self.input_ids = input_ids
        self.output = output
        self.backward_fn = backward_fn


class Graph:
    """Ordered tape of operations plus named leaves (parameters and inputs)."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._index: dict[int, int] = {}
        self.params: dict[str, Tensor] = {}
        self.inputs: dict[str, Tensor] = {}
        self._prev = None

    # -- recording context ---------------------------------------------------

    def __enter__(self):
        self._prev = active_graph()
        _ACTIVE.graph = self
        return self

    def __exit__(self, *exc):
        _ACTIVE.graph = self._prev
        self._prev = None
        return False

    # -- leaves ----------------------------------------------------------------

    def leaf(self, tensor: Tensor) -> int:
        nid = self._index.get(id(tensor))
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(Node("leaf", (), tensor, None))
            self._index[id(tensor)] = nid
        return nid

    def register_param(self, name: str, tensor: Tensor) -> Tensor:
        known = self.params.get(name)
        if known is not None and known is not tensor:
            raise TensorError(f"parameter {name!r} registered twice with different tensors")
        self.params[name] = tensor
        self.leaf(tensor)
        return tensor

    def register_input(self, name: str, tensor: Tensor) -> Tensor:
        known = self.inputs.get(name)
        if known is not None and known is not tensor:
            raise TensorError(f"input {name!r} registered twice with different tensors")
        self.inputs[name] = tensor
        self.leaf(tensor)
        return tensor

    # -- recording --------------------------------------------------------------

    def record(self, op: str, inputs, output: Tensor, backward_fn) -> Tensor:
        input_ids = tuple(self.leaf(t) for t in inputs)
        nid = len(self.nodes)
        self.nodes.append(Node(op, input_ids, output, backward_fn))
        self._index[id(output)] = nid
        return output

    def node_id(self, tensor: Tensor) -> int:
        nid = self._index.get(id(tensor))
        if nid is None:
            raise TensorError("tensor was not produced inside this graph")
        return nid


class Gradients:
    """Gradient lookup for a finished backward pass."""

    def __init__(self, graph: Graph, table):
        self._graph = graph
        self._table = table

    def _by_tensor(self, tensor: Tensor, zero_like=True):
        nid = self._graph._index.get(id(tensor))
        grad = self._table[nid] if nid is not None else None
        if grad is None and zero_like:
            return np.zeros_like(tensor.data)
        return grad

    def for_param(self, name: str) -> np.ndarray:
        t = self._graph.params.get(name)
        if t is None:
            raise TensorError(f"graph has no parameter {name!r}")
        return self._by_tensor(t)

    def for_input(self, name: str) -> np.ndarray:
        t = self._graph.inputs.get(name)
        if t is None:
            raise TensorError(f"graph has no input {name!r}")
        return self._by_tensor(t)

    def of(self, tensor: Tensor) -> np.ndarray:
        return self._by_tensor(tensor)

    def param_dict(self) -> dict:
        return {name: self.for_param(name) for name in self._graph.params}


def backward(graph: Graph, output: Tensor) -> Gradients:
    """Reverse sweep from a scalar output; disconnected leaves get zeros."""
    out_id = graph.node_id(output)
    if output.size != 1:
        raise ShapeMismatch(f"backward needs a scalar output, got shape {output.shape}")
    table = [None] * len(graph.nodes)
    table[out_id] = np.ones_like(output.data)
    for nid in range(out_id, -1, -1):
        node = graph.nodes[nid]
        grad = table[nid]
        if grad is None or node.backward_fn is None:
            continue
        input_grads = node.backward_fn(grad)
        for iid, g in zip(node.input_ids, input_grads):
            if g is None:
                continue
            if table[iid] is None:
                table[iid] = g
            else:
                table[iid] = table[iid] + g
    return Gradients(graph, table)
