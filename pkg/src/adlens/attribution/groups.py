"""Feature groups: the units perturbation methods toggle.

Defaults: one group per token position, square pixel tiles for the image, one
group per feature dimension, and the domain as a single group. Groups must
partition each modality they cover; modalities without groups stay clamped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import AttributionError, BaselineSpec


@dataclass(frozen=True)
class Group:
    modality: str  # image | text | features | domain
    payload: tuple  # image: (r0, c0, r1, c1); text/features: index tuple; domain: ()
    label: str


def default_groups(content, baseline: BaselineSpec, image_tile: int = 16,
                   text_length: int | None = None) -> list[Group]:
    groups: list[Group] = []
    if content.has_image and baseline.attributed("image"):
        h, w = content.image.shape[:2]
        for r0 in range(0, h, image_tile):
            for c0 in range(0, w, image_tile):
                r1, c1 = min(r0 + image_tile, h), min(c0 + image_tile, w)
                groups.append(Group("image", (r0, c0, r1, c1), f"tile[{r0}:{r1},{c0}:{c1}]"))
    if content.has_text and baseline.attributed("text"):
        length = text_length if text_length is not None else len(content.tokens)
        for pos in range(length):
            groups.append(Group("text", (pos,), f"token[{pos}]"))
    if content.has_features and baseline.attributed("features"):
        for dim in range(content.features.shape[0]):
            groups.append(Group("features", (dim,), f"feature[{dim}]"))
    if content.has_domain and baseline.attributed("domain"):
        groups.append(Group("domain", (), "domain"))
    if not groups:
        raise AttributionError("no groups to attribute: every modality is absent or clamped")
    return groups


def validate_groups(groups, content, text_length: int | None = None) -> None:
    """Each covered modality must be partitioned exactly (no gaps, no overlaps)."""
    by_modality: dict[str, list[Group]] = {}
    for group in groups:
        by_modality.setdefault(group.modality, []).append(group)
    for modality, members in by_modality.items():
        if modality == "image":
            if not content.has_image:
                raise AttributionError("image groups given but content has no image")
            h, w = content.image.shape[:2]
            cover = np.zeros((h, w), dtype=np.int32)
            for g in members:
                r0, c0, r1, c1 = g.payload
                cover[r0:r1, c0:c1] += 1
            if cover.min() < 1 or cover.max() > 1:
                raise AttributionError("image groups do not partition the pixel grid")
        elif modality == "text":
            if not content.has_text:
                raise AttributionError("text groups given but content has no text")
            length = text_length if text_length is not None else len(content.tokens)
            seen = [pos for g in members for pos in g.payload]
            if sorted(seen) != list(range(length)):
                raise AttributionError("text groups do not partition the token positions")
        elif modality == "features":
            if not content.has_features:
                raise AttributionError("feature groups given but content has no features")
            seen = [dim for g in members for dim in g.payload]
            if sorted(seen) != list(range(content.features.shape[0])):
                raise AttributionError("feature groups do not partition the dimensions")
        elif modality == "domain":
            if len(members) != 1:
                raise AttributionError("the domain forms exactly one group")
        else:
            raise AttributionError(f"unknown group modality {modality!r}")


def apply_off_groups(natural: dict, base: dict, off_groups) -> dict:
    """Input arrays with the listed groups replaced by their baseline values."""
    arrays = {k: v.copy() for k, v in natural.items()}
    for group in off_groups:
        if group.modality == "image":
            r0, c0, r1, c1 = group.payload
            arrays["image"][:, r0:r1, c0:c1] = base["image"][:, r0:r1, c0:c1]
        elif group.modality == "text":
            for pos in group.payload:
                arrays["text_emb"][pos] = base["text_emb"][pos]
        elif group.modality == "features":
            for dim in group.payload:
                arrays["features"][dim] = base["features"][dim]
        elif group.modality == "domain":
            arrays["domain"] = base["domain"].copy()
    return arrays


def write_group_scores(template_parts: dict, groups, scores) -> dict:
    """Spread per-group scores over the member coordinates (totals preserved)."""
    out = {
        "image": None if "image" not in template_parts else np.zeros(template_parts["image"], dtype=np.float64),
        "text": None if "text" not in template_parts else np.zeros(template_parts["text"], dtype=np.float64),
        "features": None if "features" not in template_parts else np.zeros(template_parts["features"], dtype=np.float64),
        "domain": 0.0 if "domain" in template_parts else None,
    }
    for group, score in zip(groups, scores):
        if group.modality == "image":
            r0, c0, r1, c1 = group.payload
            area = (r1 - r0) * (c1 - c0)
            out["image"][r0:r1, c0:c1] += score / area
        elif group.modality == "text":
            for pos in group.payload:
                out["text"][pos] += score / len(group.payload)
        elif group.modality == "features":
            for dim in group.payload:
                out["features"][dim] += score / len(group.payload)
        elif group.modality == "domain":
            out["domain"] += score
    return out
