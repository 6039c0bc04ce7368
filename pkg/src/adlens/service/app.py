"""HTTP API: scoring, attribution with signed saliency, recommendations, trust.

JSON in and out; images travel as base64 PNG; patch crops are served as PNG by
id. Responses are pure functions of (active model, catalog, request), and the
request id is a digest of the payload so identical requests are verifiably
identical end to end.
"""

from __future__ import annotations

import base64
import time

import numpy as np
from fastapi import FastAPI, Query, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .. import imaging
from ..attribution import METHOD_NAMES, AttributionError, BaselineSpec, compute, rescale_to_prediction, split_signed
from ..data.types import Content, DataError
from ..util import digest_of
from .registry import Registry


class ContentPayload(BaseModel):
    id: str | None = None
    text: str | None = None
    image_png_base64: str | None = None
    domain: str | None = None
    features: list[float] | None = None


class ScoreRequest(ContentPayload):
    pass


class AttributeRequest(BaseModel):
    content: ContentPayload
    method: str = "integrated_gradients"
    options: dict = {}


def _error(status: int, code: str, detail) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "detail": detail}})


def _parse_content(payload: ContentPayload, config) -> Content:
    problems = []
    tokens = None
    if payload.text is not None and payload.text.strip():
        words = payload.text.split()
        index = {w: i for i, w in enumerate(config.vocab)}
        unknown = sorted({w for w in words if w not in index})
        if unknown:
            raise DataError(f"words outside the model vocabulary: {unknown}")
        tokens = tuple(index[w] for w in words)
    image = None
    if payload.image_png_base64:
        try:
            image = imaging.from_png_bytes(base64.b64decode(payload.image_png_base64))
        except Exception as err:
            raise DataError(f"image is not decodable PNG: {err}") from err
    features = None
    if payload.features is not None:
        features = np.asarray(payload.features, dtype=np.float32)
        if features.shape != (config.feature_dim,):
            problems.append(f"feature vector must have length {config.feature_dim}")
    domain = payload.domain if payload.domain else None
    if problems:
        raise DataError("; ".join(problems))
    content = Content(id=payload.id or "request", domain=domain, image=image,
                      tokens=tokens, features=features)
    if not (content.has_image or content.has_text or content.has_features or content.has_domain):
        raise DataError("every modality is absent; provide text, image, features, or domain")
    return content


def create_app(registry: Registry) -> FastAPI:
    app = FastAPI(title="adlens", version="0.1.0")

    @app.get("/health")
    def health():
        snap = registry.snapshot()
        return {"status": "ok", "model_digest": snap.digest}

    @app.get("/meta")
    def meta():
        snap = registry.snapshot()
        if snap.config is None:
            return _error(503, "no_active_model", "no model is deployed")
        recommendation_domains = sorted(snap.catalog.recommendations) if snap.catalog else []
        return {
            "model_digest": snap.digest,
            "domains": list(snap.config.domains),
            "vocab": list(snap.config.vocab),
            "feature_dim": snap.config.feature_dim,
            "image_size": snap.config.image_size,
            "recommendation_domains": recommendation_domains,
        }

    @app.post("/score")
    def score(request: ScoreRequest):
        snap = registry.snapshot()
        if snap.model is None:
            return _error(503, "no_active_model", "no model is deployed")
        started = time.perf_counter()
        try:
            content = _parse_content(request, snap.config)
            value = snap.model.predict(content)
        except DataError as err:
            return _error(400, "invalid_content", str(err))
        return {
            "score": value,
            "presence": content.presence(),
            "model_digest": snap.digest,
            "latency_ms": (time.perf_counter() - started) * 1000.0,
            "request_id": digest_of({"kind": "score", "payload": request.model_dump(), "model": snap.digest})[:16],
        }

    @app.post("/attribute")
    def attribute(request: AttributeRequest):
        snap = registry.snapshot()
        if snap.model is None:
            return _error(503, "no_active_model", "no model is deployed")
        if request.method not in METHOD_NAMES:
            return _error(400, "unknown_method",
                          f"method {request.method!r} unknown; valid methods: {list(METHOD_NAMES)}")
        options = dict(request.options)
        pca_methods = tuple(options.get("methods", ("integrated_gradients", "feature_ablation", "kernel_shap")))
        if request.method == "pca" and len(pca_methods) < 2:
            return _error(400, "invalid_options", "pca aggregation needs at least two source methods")
        try:
            content = _parse_content(request.content, snap.config)
            baseline = BaselineSpec.scoped(*options["modalities"]) if "modalities" in options else BaselineSpec()
            amap = compute(
                request.method, snap.model, content, baseline,
                steps=int(options.get("steps", 32)),
                n_samples=options.get("n_samples"),
                seed=int(options.get("seed", 0)),
                image_tile=int(options.get("image_tile", 8)),
                layer=options.get("layer", "image.final"),
                pca_methods=pca_methods,
            )
            amap = rescale_to_prediction(amap, snap.model, content)
        except (DataError, AttributionError) as err:
            return _error(400, "attribution_failed", str(err))
        positive, negative = split_signed(amap)
        return {
            "map": amap.to_dict(),
            "positive": positive.to_dict(),
            "negative": negative.to_dict(),
            "request_id": digest_of({"kind": "attribute", "payload": request.model_dump(), "model": snap.digest})[:16],
        }

    @app.get("/recommendations")
    def recommendations(domain: str = Query(...), modality: str = Query("text"),
                        k: int = Query(10, ge=1)):
        snap = registry.snapshot()
        if snap.catalog is None or domain not in snap.catalog.recommendations:
            return _error(404, "unknown_domain", f"no recommendations for domain {domain!r}")
        bundle = snap.catalog.recommendations[domain]
        if modality == "text":
            def trim(block):
                return {
                    "positive": block["positive"][:k],
                    "negative": block["negative"][:k],
                    "short": block["short"] or len(block["positive"]) < k,
                }

            return {"domain": domain, "modality": "text",
                    "words": trim(bundle["words"]), "phrases": trim(bundle["phrases"])}
        if modality == "image":
            if not bundle.get("patches"):
                return _error(404, "no_patches", f"domain {domain!r} has no patch recommendations")
            patches = bundle["patches"]
            def decorate(items):
                return [dict(p, url=f"/patches/{p['id']}.png") for p in items[:k]]

            return {
                "domain": domain,
                "modality": "image",
                "positive": decorate(patches["positive"]),
                "negative": decorate(patches["negative"]),
                "low_diversity": patches["low_diversity"],
            }
        return _error(400, "unknown_modality", "modality must be 'text' or 'image'")

    @app.get("/trust")
    def trust(domain: str = Query(...), modality: str = Query(...)):
        snap = registry.snapshot()
        report = None if snap.catalog is None else snap.catalog.eval_reports.get((domain, modality))
        if report is None:
            return _error(404, "no_eval_report",
                          f"no evaluation for domain {domain!r} / modality {modality!r}; run the evaluate command first")
        return {
            "domain": domain,
            "modality": modality,
            "rho": report.rho,
            "trust": report.trust,
            "n_pairs": report.n_pairs,
        }

    @app.get("/patches/{asset_id}.png")
    def patch_png(asset_id: str):
        snap = registry.snapshot()
        blob = None if snap.catalog is None else snap.catalog.patch_png(asset_id)
        if blob is None:
            return _error(404, "unknown_patch", f"no patch asset {asset_id!r}")
        return Response(content=blob, media_type="image/png")

    return app
