"""Offline pipeline stages shared by the CLI and the acceptance suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..attribution import BaselineSpec
from ..data import Dataset, load_dataset
from ..evaluation import (
    EvalReport,
    LinearBagModel,
    ModelAttributor,
    eval_image,
    eval_text,
    model_feature_extractor,
    oracle_attributor,
    pairs_differing,
    random_attributor,
)
from ..insights import (
    attach_clusters,
    cluster_patches,
    embed_patches,
    export_recommendations,
    extract_patches,
    recommend_patches,
    recommend_text,
)
from ..model import ContentScorer, ModelConfig, TrainConfig, evaluate_model, train_full
from ..util import canonical_json


def run_training(dataset: Dataset, out_dir, seed: int, model_overrides: dict | None = None,
                 train_overrides: dict | None = None) -> ContentScorer:
    """Pretrain per modality, train jointly, and persist the checkpoint."""
    out = Path(out_dir)
    (out / "model").mkdir(parents=True, exist_ok=True)
    config = ModelConfig.from_dataset(dataset, **(model_overrides or {}))
    train_cfg = TrainConfig.from_dict(train_overrides) if train_overrides else TrainConfig()
    log: list = []
    model = train_full(dataset, config, train_cfg, seed=seed, log=log)
    model.save(out / "model" / "model.ckpt")
    (out / "model" / "config.json").write_text(canonical_json(config.to_dict()))
    with open(out / "model" / "metrics.jsonl", "w") as fh:
        for entry in log:
            fh.write(canonical_json(entry) + "\n")
    summary = {}
    for split in ("val", "test_in", "test_out"):
        if dataset.ids(split):
            summary[split] = evaluate_model(model, dataset, split)
    (out / "model" / "eval.json").write_text(canonical_json(summary))
    return model


def load_model(model_dir) -> ContentScorer:
    model_dir = Path(model_dir)
    with open(model_dir / "config.json") as fh:
        config = ModelConfig.from_dict(json.load(fh))
    return ContentScorer.load(model_dir / "model.ckpt", config)


def run_insights(dataset: Dataset, model: ContentScorer, out_dir, seed: int,
                 domains=None, k: int = 10, patch_size: int | None = None,
                 patches_per_image: int = 5, iou_threshold: float = 0.3,
                 cluster_range=(2, 8), patch_samples: int = 10,
                 split: str | None = None) -> dict:
    """Rank tables plus text and patch recommendations for each domain."""
    out = Path(out_dir) / "insights"
    out.mkdir(parents=True, exist_ok=True)
    domains = list(domains) if domains else list(dataset.domains)

    text_attr = ModelAttributor(model, "feature_ablation", BaselineSpec.scoped("text"))
    image_attr = ModelAttributor(model, "activation")
    written = {}
    for domain in domains:
        ids = dataset.ids_in_domain(domain, split)
        if not ids:
            continue
        words = recommend_text(dataset, domain, text_attr, k=k, kind="word", split=split)
        phrases = recommend_text(dataset, domain, text_attr, k=k, kind="phrase", split=split)

        patch_rec = None
        with_images = [cid for cid in ids if dataset.contents[cid].has_image]
        if with_images:
            size = patch_size
            if size is None:
                h = dataset.contents[with_images[0]].image.shape[0]
                size = min(32, max(4, h // 4))
            patches = []
            for cid in with_images:
                amap = image_attr(dataset.contents[cid])
                patches.extend(extract_patches(amap.image, k=patches_per_image,
                                               patch_size=size,
                                               overlap_threshold=iou_threshold,
                                               source_id=cid))
            if len(patches) >= cluster_range[0]:
                patches = embed_patches(model, dataset, patches)
                labels, chosen_k, _ = cluster_patches(
                    np.stack([p.embedding for p in patches]), k_range=cluster_range, seed=seed)
                patches = attach_clusters(patches, labels)
                patch_rec = recommend_patches(patches, n=patch_samples, seed=seed)
        path = export_recommendations(out, domain, words, phrases, patch_rec, dataset)
        written[domain] = path

        from ..insights import rank_scores, word_extractor

        table = rank_scores(dataset, domain, text_attr, word_extractor(dataset),
                            kind="word", split=split)
        table.save(out / f"rank_{domain}_word.json")
    return written


def make_attributors(dataset: Dataset, model: ContentScorer | None, name: str, seed: int):
    """Attributor factory for the evaluate stage.

    model:<method> uses the scorer with that attribution method, scoped to the
    modality being evaluated; oracle uses planted truth; random is the null;
    linear uses the fitted bag baseline.
    """
    if name == "oracle":
        oracle = oracle_attributor(dataset)
        return {"text": oracle, "image": oracle, "features": oracle}
    if name == "random":
        rand = random_attributor(dataset, seed=seed)
        return {"text": rand, "image": rand, "features": rand}
    if name == "linear":
        linear = LinearBagModel(dataset).fit(dataset, split="train" if dataset.splits else None)
        return {"text": linear.attribute, "image": None, "features": linear.attribute}
    if name.startswith("model:"):
        if model is None:
            raise ValueError("a trained model is required for model attributors")
        method = name.split(":", 1)[1]
        out = {}
        for modality in ("text", "image", "features"):
            if method == "activation" and modality != "image":
                out[modality] = None
                continue
            out[modality] = ModelAttributor(model, method,
                                            BaselineSpec.scoped(modality), seed=seed)
        return out
    raise ValueError(f"unknown attributor {name!r}")


def run_evaluation(dataset: Dataset, model: ContentScorer | None, out_dir, seed: int,
                   attributor: str = "model:integrated_gradients",
                   modalities=("text", "image", "features"),
                   sim_threshold: float = 0.8, per_domain: bool = True,
                   split: str | None = None) -> dict:
    """Difference-set evaluation per modality (and per domain) over best-treatment pairs."""
    out = Path(out_dir) / "evals"
    out.mkdir(parents=True, exist_ok=True)
    attributors = make_attributors(dataset, model, attributor, seed)
    base_pairs = dataset.best_treatment_pairs(split)
    feature_fn = model_feature_extractor(model) if model is not None else None

    reports = {}

    def run_scope(scope_name: str, pairs):
        for modality in modalities:
            fn = attributors.get(modality)
            if fn is None:
                continue
            chosen = pairs_differing(dataset, modality, pairs)
            if not chosen:
                continue
            ids = sorted({cid for pair in chosen for cid in pair})
            rates = {cid: dataset.rate(cid) for cid in ids}
            if modality == "text":
                maps = {cid: fn(dataset.contents[cid]) for cid in ids}
                tokens = {cid: dataset.contents[cid].tokens for cid in ids}
                report = eval_text(chosen, tokens, rates, maps)
            elif modality == "image":
                if feature_fn is None:
                    continue
                maps = {cid: fn(dataset.contents[cid]) for cid in ids}
                images = {cid: dataset.contents[cid].image for cid in ids}
                report = eval_image(chosen, images, rates, maps, feature_fn,
                                    sim_threshold=sim_threshold)
            else:
                from ..evaluation import eval_generic

                bags = {cid: {f"f{d}" for d, v in enumerate(dataset.contents[cid].features)
                              if v > 0.5} for cid in ids}
                attributions = {}
                for cid in ids:
                    amap = fn(dataset.contents[cid])
                    attributions[cid] = {f"f{d}": float(amap.features[d])
                                         for d in range(len(amap.features))}
                report = eval_generic(chosen, bags, rates, attributions)
            report.save(out / f"{scope_name}__{modality}.json")
            reports[(scope_name, modality)] = report

    run_scope("all", base_pairs)
    if per_domain:
        for domain in dataset.domains:
            scoped = [p for p in base_pairs if dataset.contents[p[0]].domain == domain]
            if scoped:
                run_scope(domain, scoped)
    return reports


def load_dataset_at(path) -> Dataset:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    return load_dataset(path)
