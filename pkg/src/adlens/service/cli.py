"""Command-line entry points.

Every subcommand takes --seed, --config (JSON file with one section per
subcommand; see docs/config-schema.json) and --out. Artifacts are written
without timestamps, so a fixed seed reproduces them byte for byte.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from ..util import canonical_json


def _load_config(path, section: str) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    return doc.get(section, {})


def _fail(message: str):
    raise click.ClickException(message)


common = [
    click.option("--seed", type=int, default=0, show_default=True, help="Seed for every random choice."),
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 default=None, help="JSON config file (per-subcommand sections)."),
    click.option("--out", "out_dir", type=click.Path(file_okay=False), default="artifacts",
                 show_default=True, help="Artifact output directory."),
]


def with_common(fn):
    for option in reversed(common):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Score marketing content, explain the scores, and rank design insights."""


@main.command("synth-gen")
@with_common
@click.option("--items", type=int, default=None, help="Total content items.")
@click.option("--pairs", type=int, default=None, help="Experiment groups.")
@click.option("--variant", type=click.Choice(["default", "nonlinear", "domain-only", "tiny"]),
              default=None, help="Built-in generator spec.")
@click.option("--holdout", default=None, help="Comma-separated held-out domains.")
def synth_gen(seed, config_path, out_dir, items, pairs, variant, holdout):
    """Generate a synthetic dataset with planted contributions and split it."""
    from ..data import (default_spec, domain_only_spec, generate_synthetic,
                        nonlinear_spec, save_dataset, split_dataset, tiny_spec)
    from ..data.types import DataError

    cfg = _load_config(config_path, "synthetic")
    items = items if items is not None else cfg.get("items", 2400)
    pairs = pairs if pairs is not None else cfg.get("pairs", 500)
    variant = variant or cfg.get("variant", "default")
    holdout = holdout.split(",") if holdout else cfg.get("holdout", [])
    ratios = tuple(cfg.get("ratios", (0.5, 0.1, 0.4)))
    spec = {"default": default_spec, "nonlinear": nonlinear_spec,
            "domain-only": domain_only_spec, "tiny": tiny_spec}[variant]()
    try:
        dataset = generate_synthetic(spec, n_items=items, n_pairs=pairs, seed=seed)
        dataset = split_dataset(dataset, ratios=ratios, held_out_domains=holdout, seed=seed)
        manifest = save_dataset(dataset, Path(out_dir) / "data")
    except DataError as err:
        _fail(str(err))
    click.echo(f"wrote {manifest} ({items} items, {pairs} experiments, variant {variant})")


@main.command()
@with_common
@click.option("--data", "data_path", required=True, type=click.Path(exists=True),
              help="Dataset directory or manifest file.")
def train(seed, config_path, out_dir, data_path):
    """Pretrain each encoder, then train the fused model; keep the best epoch."""
    from ..data.types import DataError
    from .pipeline import load_dataset_at, run_training

    model_overrides = _load_config(config_path, "model")
    train_overrides = _load_config(config_path, "train")
    try:
        dataset = load_dataset_at(data_path)
        if not dataset.splits:
            _fail("dataset has no split labels; run synth-gen (or add a splits record)")
        run_training(dataset, out_dir, seed, model_overrides, train_overrides)
    except DataError as err:
        _fail(str(err))
    click.echo(f"wrote {Path(out_dir) / 'model'}")


@main.command()
@with_common
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", default=None, type=click.Path(exists=True))
@click.option("--id", "content_id", default=None, help="Content id inside --data.")
@click.option("--content", "content_file", default=None, type=click.Path(exists=True),
              help="JSON file with a content payload.")
def score(seed, config_path, out_dir, model_dir, data_path, content_id, content_file):
    """Predict the success rate of one content item."""
    from ..data.types import DataError
    from .pipeline import load_dataset_at, load_model

    try:
        model = load_model(Path(model_dir))
        content = _resolve_content(model, data_path, content_id, content_file)
        value = model.predict(content)
    except DataError as err:
        _fail(str(err))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"id": content.id, "score": value, "presence": content.presence(),
           "model_digest": model.config.digest()}
    (out / "score.json").write_text(canonical_json(doc))
    click.echo(canonical_json(doc))


def _resolve_content(model, data_path, content_id, content_file):
    from ..data.types import DataError
    from .pipeline import load_dataset_at

    if content_file:
        from .app import ContentPayload, _parse_content

        with open(content_file) as fh:
            payload = ContentPayload(**json.load(fh))
        return _parse_content(payload, model.config)
    if not (data_path and content_id):
        raise DataError("give either --content or both --data and --id")
    dataset = load_dataset_at(data_path)
    if content_id not in dataset.contents:
        raise DataError(f"content {content_id!r} not in dataset")
    return dataset.contents[content_id]


@main.command()
@with_common
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", default=None, type=click.Path(exists=True))
@click.option("--id", "content_id", default=None)
@click.option("--content", "content_file", default=None, type=click.Path(exists=True))
@click.option("--method", default="integrated_gradients", show_default=True)
def attribute(seed, config_path, out_dir, model_dir, data_path, content_id, content_file, method):
    """Per-feature contributions for one content item, rescaled and sign-split."""
    from ..attribution import AttributionError, compute, rescale_to_prediction, split_signed
    from ..data.types import DataError
    from .pipeline import load_model

    cfg = _load_config(config_path, "attribute")
    try:
        model = load_model(Path(model_dir))
        content = _resolve_content(model, data_path, content_id, content_file)
        amap = compute(method, model, content,
                       steps=int(cfg.get("steps", 32)),
                       n_samples=cfg.get("n_samples"),
                       seed=seed,
                       image_tile=int(cfg.get("image_tile", 8)),
                       layer=cfg.get("layer", "image.final"))
        amap = rescale_to_prediction(amap, model, content)
    except (DataError, AttributionError) as err:
        _fail(str(err))
    positive, negative = split_signed(amap)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"map": amap.to_dict(), "positive": positive.to_dict(), "negative": negative.to_dict()}
    (out / f"attribution_{content.id}_{method}.json").write_text(canonical_json(doc))
    click.echo(f"total={amap.total():.6f} prediction={amap.prediction:.6f}")


@main.command()
@with_common
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--domains", default=None, help="Comma-separated subset of domains.")
@click.option("--k", type=int, default=10, show_default=True)
def insights(seed, config_path, out_dir, model_dir, data_path, domains, k):
    """Build rank tables, word/phrase lists, and clustered patch recommendations."""
    from ..data.types import DataError
    from .pipeline import load_dataset_at, load_model, run_insights

    cfg = _load_config(config_path, "insights")
    try:
        dataset = load_dataset_at(data_path)
        model = load_model(Path(model_dir))
        written = run_insights(
            dataset, model, out_dir, seed,
            domains=domains.split(",") if domains else cfg.get("domains"),
            k=k,
            patch_size=cfg.get("patch_size"),
            patches_per_image=cfg.get("patches_per_image", 5),
            iou_threshold=cfg.get("iou_threshold", 0.3),
            cluster_range=tuple(cfg.get("cluster_range", (2, 8))),
            patch_samples=cfg.get("patch_samples", 10),
        )
    except DataError as err:
        _fail(str(err))
    click.echo(f"wrote recommendations for {len(written)} domain(s) under {Path(out_dir) / 'insights'}")


@main.command()
@with_common
@click.option("--model", "model_dir", default=None, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--attributor", default="model:integrated_gradients", show_default=True,
              help="model:<method>, oracle, random, or linear.")
@click.option("--modalities", default="text,image,features", show_default=True)
def evaluate(seed, config_path, out_dir, model_dir, data_path, attributor, modalities):
    """Correlate attribution differences with observed outcome changes."""
    from ..data.types import DataError
    from ..evaluation import EvalError
    from .pipeline import load_dataset_at, load_model, run_evaluation

    cfg = _load_config(config_path, "evaluate")
    try:
        dataset = load_dataset_at(data_path)
        model = load_model(Path(model_dir)) if model_dir else None
        if attributor.startswith("model:") and model is None:
            _fail("attributor model:* requires --model")
        reports = run_evaluation(
            dataset, model, out_dir, seed,
            attributor=attributor,
            modalities=tuple(m for m in modalities.split(",") if m),
            sim_threshold=cfg.get("sim_threshold", 0.8),
            per_domain=cfg.get("per_domain", True),
        )
    except (DataError, EvalError, ValueError) as err:
        _fail(str(err))
    if not reports:
        _fail("no evaluation reports produced: dataset has no attributable pairs "
              "(generate pairs and attribution maps first)")
    for (scope, modality), report in sorted(reports.items()):
        rho = "n/a" if report.rho is None else f"{report.rho:.4f}"
        click.echo(f"{scope}/{modality}: rho={rho} trust={report.trust:.4f} n={report.n_pairs}")


@main.command()
@with_common
@click.option("--artifacts", "artifacts_dir", default=None, type=click.Path(exists=True),
              help="Artifacts directory (defaults to --out).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None, help="Defaults to $ADLENS_PORT or 8765.")
def serve(seed, config_path, out_dir, artifacts_dir, host, port):
    """Serve scoring, attribution, recommendations, and trust over HTTP."""
    import uvicorn

    from .app import create_app
    from .registry import Registry

    cfg = _load_config(config_path, "serve")
    root = artifacts_dir or os.environ.get("ADLENS_DATA_DIR") or cfg.get("artifacts") or out_dir
    port = port or int(os.environ.get("ADLENS_PORT", cfg.get("port", 8765)))
    host = cfg.get("host", host)
    registry = Registry.from_artifacts(root)
    app = create_app(registry)
    click.echo(f"serving artifacts from {root} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
