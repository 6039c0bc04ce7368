"""Attribution maps, baselines, rescaling, and the signed display split.

A map assigns a contribution score to every part of one content item: a pixel
grid for the image, one score per token, one per feature dimension, and one
scalar for the domain. After :func:`rescale_to_prediction` the scores total
exactly the model's prediction for the item.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np


class AttributionError(ValueError):
    pass


@dataclass(frozen=True)
class AttributionMap:
    content_id: str
    method: str
    image: np.ndarray | None = None  # (H, W) float64
    text: np.ndarray | None = None  # (L,) float64
    features: np.ndarray | None = None  # (F,) float64
    domain: float | None = None
    rescaled: bool = False
    prediction: float | None = None
    model_digest: str = ""

    def __post_init__(self):
        for name, part in (("image", self.image), ("text", self.text), ("features", self.features)):
            if part is not None and not np.isfinite(part).all():
                raise AttributionError(f"{name} scores hold non-finite values")
        if self.domain is not None and not np.isfinite(self.domain):
            raise AttributionError("domain score is non-finite")

    def parts(self) -> dict:
        out = {}
        if self.image is not None:
            out["image"] = self.image
        if self.text is not None:
            out["text"] = self.text
        if self.features is not None:
            out["features"] = self.features
        if self.domain is not None:
            out["domain"] = np.asarray([self.domain])
        return out

    def present(self) -> tuple:
        return tuple(sorted(self.parts()))

    def total(self) -> float:
        return float(sum(part.sum() for part in self.parts().values()))

    def entry_count(self) -> int:
        return int(sum(part.size for part in self.parts().values()))

    def scaled(self, factor: float) -> "AttributionMap":
        return replace(
            self,
            image=None if self.image is None else self.image * factor,
            text=None if self.text is None else self.text * factor,
            features=None if self.features is None else self.features * factor,
            domain=None if self.domain is None else self.domain * factor,
        )

    def flatten(self) -> np.ndarray:
        """All present scores as one vector (stable part order)."""
        pieces = [np.asarray(part, dtype=np.float64).reshape(-1) for _, part in sorted(self.parts().items())]
        return np.concatenate(pieces) if pieces else np.zeros(0)

    def like(self, vector: np.ndarray, method: str) -> "AttributionMap":
        """Rebuild a map with this one's shapes from a flat score vector."""
        fields = {"image": None, "text": None, "features": None, "domain": None}
        offset = 0
        for name, part in sorted(self.parts().items()):
            chunk = vector[offset : offset + part.size]
            offset += part.size
            if name == "domain":
                fields["domain"] = float(chunk[0])
            else:
                fields[name] = chunk.reshape(part.shape).copy()
        return AttributionMap(content_id=self.content_id, method=method,
                              model_digest=self.model_digest, **fields)

    # -- persistence --------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "content_id": self.content_id,
            "method": self.method,
            "image": None if self.image is None else [[round(float(v), 10) for v in row] for row in self.image],
            "text": None if self.text is None else [round(float(v), 10) for v in self.text],
            "features": None if self.features is None else [round(float(v), 10) for v in self.features],
            "domain": None if self.domain is None else round(float(self.domain), 10),
            "rescaled": self.rescaled,
            "prediction": None if self.prediction is None else float(self.prediction),
            "model_digest": self.model_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttributionMap":
        return cls(
            content_id=d["content_id"],
            method=d["method"],
            image=None if d.get("image") is None else np.asarray(d["image"], dtype=np.float64),
            text=None if d.get("text") is None else np.asarray(d["text"], dtype=np.float64),
            features=None if d.get("features") is None else np.asarray(d["features"], dtype=np.float64),
            domain=d.get("domain"),
            rescaled=d.get("rescaled", False),
            prediction=d.get("prediction"),
            model_digest=d.get("model_digest", ""),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "AttributionMap":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class BaselineSpec:
    """Per-modality replacement values: 'zero' attributes the modality against
    an all-zero input, 'keep' clamps it at its actual value (no attribution)."""

    image: str = "zero"
    text: str = "zero"
    features: str = "zero"
    domain: str = "keep"

    _MODES = ("zero", "keep")

    def __post_init__(self):
        for field in ("image", "text", "features", "domain"):
            if getattr(self, field) not in self._MODES:
                raise AttributionError(f"baseline mode for {field} must be one of {self._MODES}")

    @classmethod
    def scoped(cls, *modalities: str) -> "BaselineSpec":
        """Zero baselines for the listed modalities only; everything else kept."""
        modes = {m: "keep" for m in ("image", "text", "features", "domain")}
        for m in modalities:
            if m not in modes:
                raise AttributionError(f"unknown modality {m!r}")
            modes[m] = "zero"
        return cls(**modes)

    def mode(self, modality: str) -> str:
        key = "text" if modality == "text_emb" else modality
        return getattr(self, key)

    def arrays_for(self, natural: dict) -> dict:
        """Baseline input arrays aligned with a model's natural input arrays."""
        out = {}
        for modality, arr in natural.items():
            if self.mode(modality) == "zero":
                out[modality] = np.zeros_like(arr)
            else:
                out[modality] = arr.copy()
        return out

    def attributed(self, modality: str) -> bool:
        return self.mode(modality) == "zero"


def rescale_to_prediction(amap: AttributionMap, model, content) -> AttributionMap:
    """Multiplicative rescale so the map totals the model prediction.

    A map whose scores cancel to (numerically) zero cannot be scaled, so the
    prediction is spread uniformly over all entries instead.
    """
    pred = float(model.predict(content))
    total = amap.total()
    if abs(total) > 1e-9:
        scaled = amap.scaled(pred / total)
    else:
        even = pred / max(amap.entry_count(), 1)
        scaled = amap.like(np.full(amap.entry_count(), even), amap.method)
    return replace(scaled, rescaled=True, prediction=pred)


def split_signed(amap: AttributionMap) -> tuple[AttributionMap, AttributionMap]:
    """(positive part, |negative part|); positive minus negative rebuilds the map."""

    def positive(part):
        return None if part is None else np.maximum(part, 0.0)

    def negative(part):
        return None if part is None else np.abs(np.minimum(part, 0.0))

    pos = replace(
        amap,
        method=f"{amap.method}+",
        image=positive(amap.image),
        text=positive(amap.text),
        features=positive(amap.features),
        domain=None if amap.domain is None else max(amap.domain, 0.0),
    )
    neg = replace(
        amap,
        method=f"{amap.method}-",
        image=negative(amap.image),
        text=negative(amap.text),
        features=negative(amap.features),
        domain=None if amap.domain is None else abs(min(amap.domain, 0.0)),
    )
    return pos, neg
