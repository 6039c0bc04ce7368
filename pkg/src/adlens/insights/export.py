"""Per-domain recommendation bundles consumed by the service and dashboard."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..imaging import to_png_bytes
from ..util import canonical_json


def embed_patches(model, dataset, patches, batch_size: int = 128) -> list:
    """Fill patch embeddings with the image encoder's pooled features of each crop."""
    from dataclasses import replace

    out = list(patches)
    crops = []
    for p in patches:
        image = dataset.contents[p.source_id].image
        crop = image[p.row : p.row + p.size, p.col : p.col + p.size]
        crops.append(crop.transpose(2, 0, 1).astype(np.float32))
    for start in range(0, len(crops), batch_size):
        chunk = np.stack(crops[start : start + batch_size])
        embs = model.embed_modality_batch("image", chunk)
        for i, emb in enumerate(embs):
            out[start + i] = replace(out[start + i], embedding=emb.copy())
    return out


def patch_asset_id(domain: str, patch) -> str:
    return f"{domain}__{patch.source_id}__{patch.row}_{patch.col}_{patch.size}"


def export_recommendations(out_dir, domain: str, words: dict, phrases: dict,
                           patch_rec: dict | None, dataset) -> Path:
    """Write <domain>.json plus PNG crops under patches/."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def patch_payload(p):
        asset = patch_asset_id(domain, p)
        image = dataset.contents[p.source_id].image
        crop = image[p.row : p.row + p.size, p.col : p.col + p.size]
        crop_dir = out / "patches"
        crop_dir.mkdir(exist_ok=True)
        (crop_dir / f"{asset}.png").write_bytes(to_png_bytes(crop))
        return {
            "id": asset,
            "source": p.source_id,
            "box": [p.row, p.col, p.size],
            "score": round(float(p.score), 10),
            "cluster": p.cluster,
        }

    doc = {"domain": domain, "words": words, "phrases": phrases, "patches": None}
    if patch_rec is not None:
        doc["patches"] = {
            "positive": [patch_payload(p) for p in patch_rec["positive"]],
            "negative": [patch_payload(p) for p in patch_rec["negative"]],
            "cluster_scores": {str(k): round(float(v), 10) for k, v in patch_rec["cluster_scores"].items()},
            "low_diversity": patch_rec["low_diversity"],
        }
    path = out / f"{domain}.json"
    path.write_text(canonical_json(doc))
    return path


def load_recommendations(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
