"""Attributors for the evaluation harness: planted-truth oracle, zero-mean
random noise, a linear bag-of-features baseline, and the cached model wrapper."""

from __future__ import annotations

import numpy as np

from ..attribution import AttributionMap, BaselineSpec, compute, rescale_to_prediction
from ..data.types import DataError, Dataset
from ..util import rng_for
from .metrics import EvalError


def oracle_attributor(dataset: Dataset):
    """Ground-truth contributions as attribution maps (synthetic data only)."""
    if dataset.ground_truth is None:
        raise EvalError("dataset carries no planted ground truth")

    def attribute(content) -> AttributionMap:
        gt = dataset.ground_truth[content.id]
        return AttributionMap(
            content_id=content.id,
            method="oracle",
            text=None if gt.token_attr is None else np.asarray(gt.token_attr, dtype=np.float64),
            image=None if gt.pixel_attr is None else gt.pixel_attr.astype(np.float64),
            features=None if gt.feature_attr is None else gt.feature_attr.astype(np.float64),
        )

    return attribute


def random_attributor(dataset: Dataset, seed: int, sigma: float = 0.05):
    """Zero-mean noise with the right shapes: the null hypothesis attributor."""

    def attribute(content) -> AttributionMap:
        rng = rng_for(seed, "random-attr", content.id)
        return AttributionMap(
            content_id=content.id,
            method="random",
            text=None if not content.has_text else rng.normal(0, sigma, len(content.tokens)),
            image=None if not content.has_image else rng.normal(0, sigma, content.image.shape[:2]),
            features=None if not content.has_features else rng.normal(0, sigma, content.features.shape),
        )

    return attribute


class LinearBagModel:
    """Ridge regression on observable bag features (token presence, feature
    dims, domain one-hot). Doubles as an attributor whose score for a feature
    is its fitted weight, and as the accuracy floor nonlinear scorers must beat."""

    def __init__(self, dataset: Dataset, ridge: float = 1e-3):
        self.vocab = dataset.vocab
        self.domains = dataset.domains
        self.feature_dim = dataset.feature_dim
        self.ridge = ridge
        self.weights = None

    def _design_row(self, content) -> np.ndarray:
        v, f, d = len(self.vocab), self.feature_dim, len(self.domains)
        row = np.zeros(v + f + d + 1)
        if content.tokens:
            for t in set(content.tokens):
                row[t] = 1.0
        if content.features is not None:
            row[v : v + f] = content.features
        if content.domain in self.domains:
            row[v + f + self.domains.index(content.domain)] = 1.0
        row[-1] = 1.0
        return row

    def fit(self, dataset: Dataset, split: str | None = "train") -> "LinearBagModel":
        ids = dataset.ids(split)
        if not ids:
            raise DataError(f"no items in split {split!r} to fit on")
        x = np.stack([self._design_row(dataset.contents[cid]) for cid in ids])
        y = np.array([dataset.rate(cid) for cid in ids])
        gram = x.T @ x + self.ridge * np.eye(x.shape[1])
        self.weights = np.linalg.solve(gram, x.T @ y)
        return self

    def predict(self, content) -> float:
        if self.weights is None:
            raise DataError("fit the linear baseline before predicting")
        return float(self._design_row(content) @ self.weights)

    def evaluate(self, dataset: Dataset, split: str | None) -> dict:
        ids = dataset.ids(split)
        preds = np.array([self.predict(dataset.contents[cid]) for cid in ids])
        truth = np.array([dataset.rate(cid) for cid in ids])
        return {
            "n": len(ids),
            "rmse": float(np.sqrt(((preds - truth) ** 2).mean())),
            "mae": float(np.abs(preds - truth).mean()),
        }

    def attribute(self, content) -> AttributionMap:
        if self.weights is None:
            raise DataError("fit the linear baseline before attributing")
        text = None
        if content.tokens:
            text = np.array([self.weights[t] for t in content.tokens], dtype=np.float64)
        features = None
        if content.features is not None:
            v = len(self.vocab)
            features = self.weights[v : v + self.feature_dim] * content.features
        return AttributionMap(content_id=content.id, method="linear_bag",
                              text=text, features=features)


class ModelAttributor:
    """Caches one attribution method over a model; maps are rescaled so their
    totals equal the prediction (the attributor contract)."""

    def __init__(self, model, method: str, baseline: BaselineSpec | None = None,
                 rescale: bool = True, seed: int = 0, steps: int = 32,
                 n_samples: int | None = None, image_tile: int = 16,
                 layer: str = "image.final",
                 pca_methods=("integrated_gradients", "feature_ablation", "kernel_shap")):
        self.model = model
        self.method = method
        self.baseline = baseline or BaselineSpec()
        self.rescale = rescale
        self.seed = seed
        self.steps = steps
        self.n_samples = n_samples
        self.image_tile = image_tile
        self.layer = layer
        self.pca_methods = pca_methods
        self._cache: dict = {}

    def __call__(self, content) -> AttributionMap:
        if content.id not in self._cache:
            amap = compute(self.method, self.model, content, self.baseline,
                           steps=self.steps, n_samples=self.n_samples, seed=self.seed,
                           image_tile=self.image_tile, layer=self.layer,
                           pca_methods=self.pca_methods)
            if self.rescale:
                amap = rescale_to_prediction(amap, self.model, content)
            self._cache[content.id] = amap
        return self._cache[content.id]


def model_feature_extractor(model, layer: str = "image.final"):
    """Last-conv activations of the image encoder, as (C, h, w) arrays."""

    def extract(image: np.ndarray) -> np.ndarray:
        collect: dict = {}
        from ..nn import Tensor

        model.image_forward(Tensor(image.transpose(2, 0, 1)[None].astype(np.float32), _check=False),
                            False, collect)
        return collect[layer].data[0]

    return extract
