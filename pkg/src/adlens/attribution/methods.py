"""Four of the five attribution methods (kernel SHAP lives next door).

All methods target the pre-sigmoid model output so linear-model oracles stay
exact and sigmoid saturation cannot flatten the scores; rescaling afterwards
maps totals into prediction space. Each method returns an unrescaled
AttributionMap whose parts mirror the content's present modalities.
"""

from __future__ import annotations

import numpy as np

from ..imaging import bilinear_resize
from ..nn import backward
from ..nn import ops
from .groups import apply_off_groups, default_groups, validate_groups, write_group_scores
from .maps import AttributionError, AttributionMap, BaselineSpec

_EMB_NAME = {"image": "image", "text": "text", "domain": "domain", "features": "features"}
_INPUT_KEY = {"image": "image", "text": "text_emb", "domain": "domain", "features": "features"}


def _digest(model) -> str:
    config = getattr(model, "config", None)
    return config.digest() if config is not None else ""


def _map_parts_template(content, natural) -> dict:
    parts = {}
    if "image" in natural:
        parts["image"] = natural["image"].shape[1:]
    if "text_emb" in natural:
        parts["text"] = (natural["text_emb"].shape[0],)
    if "features" in natural:
        parts["features"] = natural["features"].shape
    if "domain" in natural:
        parts["domain"] = ()
    return parts


def _finish_map(content_id, method, natural, arrays, model) -> AttributionMap:
    return AttributionMap(
        content_id=content_id,
        method=method,
        image=arrays.get("image"),
        text=arrays.get("text"),
        features=arrays.get("features"),
        domain=arrays.get("domain"),
        model_digest=_digest(model),
    )


def integrated_gradients(model, content, baseline: BaselineSpec = BaselineSpec(),
                         steps: int = 64, chunk: int = 16) -> AttributionMap:
    """Straight-line path integral, midpoint rule, gradients batched per chunk."""
    if steps < 8:
        raise AttributionError(f"integrated gradients needs at least 8 steps, got {steps}")
    natural = model.input_arrays(content)
    if not natural:
        raise AttributionError(f"{content.id}: nothing to attribute")
    base = baseline.arrays_for(natural)
    accum = {k: np.zeros(v.shape, dtype=np.float64) for k, v in natural.items()}
    alphas = (np.arange(steps, dtype=np.float64) + 0.5) / steps
    for start in range(0, steps, max(chunk, 1)):
        batch_alphas = alphas[start : start + max(chunk, 1)]
        b = len(batch_alphas)
        overrides = {}
        for key, x in natural.items():
            ramp = batch_alphas.reshape((b,) + (1,) * x.ndim)
            overrides[key] = (base[key][None] + ramp * (x - base[key])[None]).astype(np.float32)
        graph, pre, leaves, _ = model.attribution_forward(content, overrides=overrides)
        with graph:  # rows are independent, so the summed gradient is per-step
            scalar = ops.total(pre)
        grads = backward(graph, scalar)
        for key, leaf in leaves.items():
            accum[key] += grads.of(leaf).astype(np.float64).sum(axis=0)
    arrays = {}
    for key, x in natural.items():
        attr = (x.astype(np.float64) - base[key]) * (accum[key] / steps)
        if key == "image":
            arrays["image"] = attr.sum(axis=0)
        elif key == "text_emb":
            arrays["text"] = attr.sum(axis=-1)
        elif key == "features":
            arrays["features"] = attr
        elif key == "domain":
            arrays["domain"] = float(attr.sum())
    return _finish_map(content.id, "integrated_gradients", natural, arrays, model)


def _base_embeddings(model, natural) -> dict:
    embs = {}
    for key, arr in natural.items():
        embs[_EMB_NAME["text" if key == "text_emb" else key]] = model.embed_modality_batch(key, arr[None])[0]
    return embs


def feature_ablation(model, content, baseline: BaselineSpec = BaselineSpec(),
                     groups=None, image_tile: int = 16) -> AttributionMap:
    """Score of a group = prediction drop when the group is set to baseline.

    Only the perturbed modality is re-encoded per group; the other encoders'
    embeddings are computed once (late fusion makes this exact, not an
    approximation).
    """
    natural = model.input_arrays(content)
    if not natural:
        raise AttributionError(f"{content.id}: nothing to attribute")
    text_length = natural["text_emb"].shape[0] if "text_emb" in natural else None
    if groups is None:
        groups = default_groups(content, baseline, image_tile=image_tile, text_length=text_length)
    validate_groups(groups, content, text_length=text_length)
    base = baseline.arrays_for(natural)
    embs = _base_embeddings(model, natural)
    pre_x = float(model.head_pre_from_embeddings({k: v[None] for k, v in embs.items()}, 1)[0])

    scores = np.zeros(len(groups), dtype=np.float64)
    for modality in sorted({g.modality for g in groups}):
        idxs = [i for i, g in enumerate(groups) if g.modality == modality]
        input_key = _INPUT_KEY[modality]
        stacked = np.stack([
            apply_off_groups(natural, base, [groups[i]])[input_key] for i in idxs
        ])
        variant_emb = model.embed_modality_batch(input_key, stacked)
        emb_dict = dict(embs)
        emb_dict[_EMB_NAME[modality]] = variant_emb
        pres = model.head_pre_from_embeddings(emb_dict, len(idxs))
        for j, i in enumerate(idxs):
            scores[i] = pre_x - float(pres[j])

    template = _map_parts_template(content, natural)
    arrays = write_group_scores(template, groups, scores)
    arrays = {k: v for k, v in arrays.items() if v is not None}
    return _finish_map(content.id, "feature_ablation", natural, arrays, model)


def activation_attribution(model, content, layer: str = "image.final") -> AttributionMap:
    """Image saliency from one conv activation: channels weighted by their
    spatially-averaged gradients, summed, and upsampled to pixel size.

    No ReLU clamp on the weighted sum, so negative evidence survives for the
    signed display split.
    """
    if not content.has_image:
        raise AttributionError(f"{content.id}: activation attribution needs an image")
    valid = model.conv_layer_names()
    if layer not in valid:
        raise AttributionError(f"unknown layer {layer!r}; conv activations: {valid}")
    graph, pre, _, acts = model.attribution_forward(content, want_activations=True)
    activation = acts[layer]
    grads = backward(graph, pre)
    grad = grads.of(activation)  # (1, C, h, w)
    weights = grad.mean(axis=(2, 3), dtype=np.float64)  # (1, C)
    cam = (weights[:, :, None, None] * activation.data.astype(np.float64)).sum(axis=1)[0]
    h, w = content.image.shape[:2]
    upsampled = bilinear_resize(cam, h, w)
    natural = {"image": None}
    return _finish_map(content.id, "activation", natural, {"image": upsampled}, model)


def pca_aggregate(maps) -> AttributionMap:
    """Shared component across methods: first principal direction of the
    standardized, stacked score vectors, sign-aligned with the mean map."""
    maps = list(maps)
    if len(maps) < 2:
        raise AttributionError("pca aggregation needs at least two maps")
    first = maps[0]
    for other in maps[1:]:
        if other.content_id != first.content_id:
            raise AttributionError("pca aggregation mixes different contents")
        if other.present() != first.present():
            raise AttributionError(
                f"maps cover different modalities: {other.present()} vs {first.present()}")
        for name, part in first.parts().items():
            if other.parts()[name].shape != part.shape:
                raise AttributionError(f"map shapes differ on {name}")
    matrix = np.stack([m.flatten() for m in maps])
    means = matrix.mean(axis=1, keepdims=True)
    stds = matrix.std(axis=1, keepdims=True)
    dead = np.where(stds[:, 0] <= 0.0)[0]
    if dead.size:
        raise AttributionError(
            f"constant attribution map(s) at position(s) {dead.tolist()}: no variance to aggregate")
    standardized = (matrix - means) / stds
    # right singular vector via the small K x K gram matrix
    gram = standardized @ standardized.T
    eigvals, eigvecs = np.linalg.eigh(gram)
    lead = eigvecs[:, -1]
    component = standardized.T @ lead
    norm = np.linalg.norm(component)
    if norm <= 0.0:
        raise AttributionError("degenerate aggregation: maps cancel exactly")
    component = component / norm
    reference = standardized.mean(axis=0)
    orientation = float(component @ reference)
    if abs(orientation) > 1e-12:
        component = component * np.sign(orientation)
    elif component[np.argmax(np.abs(component))] < 0:
        component = -component
    return first.like(component, "pca")
