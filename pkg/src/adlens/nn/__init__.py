from .tensor import Graph, Gradients, NonFiniteError, ShapeMismatch, Tensor, TensorError, as_tensor, backward
from .params import ParamStore
from .gradcheck import finite_diff_grad, max_relative_error
from . import ops, optim, serial

__all__ = [
    "Graph",
    "Gradients",
    "NonFiniteError",
    "ParamStore",
    "ShapeMismatch",
    "Tensor",
    "TensorError",
    "as_tensor",
    "backward",
    "finite_diff_grad",
    "max_relative_error",
    "ops",
    "optim",
    "serial",
]
