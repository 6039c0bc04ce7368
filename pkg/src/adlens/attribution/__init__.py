from .maps import AttributionError, AttributionMap, BaselineSpec, rescale_to_prediction, split_signed
from .groups import Group, default_groups, validate_groups
from .methods import activation_attribution, feature_ablation, integrated_gradients, pca_aggregate
from .kernel_shap import kernel_shap

METHOD_NAMES = ("integrated_gradients", "feature_ablation", "kernel_shap", "activation", "pca")


def compute(method: str, model, content, baseline: BaselineSpec | None = None, *,
            steps: int = 64, n_samples: int | None = None, seed: int = 0,
            image_tile: int = 16, layer: str = "image.final",
            pca_methods=("integrated_gradients", "feature_ablation", "kernel_shap")) -> AttributionMap:
    """Dispatch a content item through one attribution method by name."""
    baseline = baseline or BaselineSpec()
    if method == "integrated_gradients":
        return integrated_gradients(model, content, baseline, steps=steps)
    if method == "feature_ablation":
        return feature_ablation(model, content, baseline, image_tile=image_tile)
    if method == "kernel_shap":
        return kernel_shap(model, content, baseline, n_samples=n_samples, seed=seed, image_tile=image_tile)
    if method == "activation":
        return activation_attribution(model, content, layer=layer)
    if method == "pca":
        if len(pca_methods) < 2:
            raise AttributionError("pca aggregation needs at least two source methods")
        parts = [
            compute(name, model, content, baseline, steps=steps, n_samples=n_samples,
                    seed=seed, image_tile=image_tile, layer=layer)
            for name in pca_methods
        ]
        return pca_aggregate(parts)
    raise AttributionError(f"unknown attribution method {method!r}; valid: {METHOD_NAMES}")


__all__ = [
    "METHOD_NAMES",
    "AttributionError",
    "AttributionMap",
    "BaselineSpec",
    "Group",
    "activation_attribution",
    "compute",
    "default_groups",
    "feature_ablation",
    "integrated_gradients",
    "kernel_shap",
    "pca_aggregate",
    "rescale_to_prediction",
    "split_signed",
    "validate_groups",
]
