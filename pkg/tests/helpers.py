"""Shared test fixtures: a hand-built linear model speaking the scorer protocol."""

import numpy as np

from adlens.nn import Graph, Tensor, ops


class LinearFeatureModel:
    """Pre-sigmoid-linear model over the feature vector: pre(x) = w . x + b.

    Implements the same attribution-facing surface as ContentScorer so the
    methods' linear-exactness oracles run against a model whose Shapley
    values, gradients, and ablation effects are known in closed form.
    """

    def __init__(self, w, b=0.0):
        self.w = np.asarray(w, dtype=np.float32)
        self.b = float(b)

    def input_arrays(self, content):
        return {"features": content.features.astype(np.float32)}

    def attribution_forward(self, content, overrides=None, fixed_embeddings=None,
                            want_activations=False):
        overrides = overrides or {}
        arr = np.asarray(overrides.get("features", self.input_arrays(content)["features"]),
                         dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[None, :]
        with Graph() as g:
            leaf = Tensor(arr, _check=False)
            g.register_input("features", leaf)
            pre = ops.add(ops.matmul(leaf, Tensor(self.w[:, None], _check=False)),
                          Tensor(np.array([[self.b]], dtype=np.float32), _check=False))
        return g, pre, {"features": leaf}, {}

    def embed_modality_batch(self, key, arrays):
        assert key == "features"
        return np.asarray(arrays, dtype=np.float32)

    def head_pre_from_embeddings(self, embeddings, batch):
        arr = embeddings["features"]
        if arr.ndim == 1:
            arr = np.broadcast_to(arr, (batch, arr.shape[0]))
        return arr @ self.w + self.b

    def predict_pre(self, content):
        return float(content.features @ self.w + self.b)

    def predict(self, content):
        return float(1.0 / (1.0 + np.exp(-self.predict_pre(content))))


def pre_at(model, content, arrays):
    """Pre-sigmoid output with the given raw input arrays substituted."""
    overrides = {k: np.asarray(v)[None] for k, v in arrays.items()}
    _, pre, _, _ = model.attribution_forward(content, overrides=overrides)
    return float(pre.data[0, 0])
