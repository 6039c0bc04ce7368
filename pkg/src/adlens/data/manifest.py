"""Line-delimited manifest IO for datasets.

A manifest is a ``.jsonl`` file: one ``meta`` record, one ``content`` record
per item, ``pair`` records, and an optional ``splits`` record. Images live as
8-bit RGB PNGs next to the manifest; planted ground truth (when present) in an
``.npz`` sidecar. The JSON schema ships in docs/manifest-schema.json and every
record is validated against it on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from ..util import canonical_json
from .types import Content, DataError, Dataset, ExperimentPair, GroundTruth, Outcome

SCHEMA_PATH = Path(__file__).resolve().parents[3] / "docs" / "manifest-schema.json"


def _validator():
    if jsonschema is None or not SCHEMA_PATH.exists():
        return None
    schema = json.loads(SCHEMA_PATH.read_text())
    return jsonschema.Draft202012Validator(schema)


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write manifest.jsonl, images/, and ground_truth.npz under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image_dir = out / "images"

    records = [
        {
            "kind": "meta",
            "version": 1,
            "vocab": list(dataset.vocab),
            "vocab_tags": list(dataset.vocab_tags),
            "domains": list(dataset.domains),
            "feature_dim": dataset.feature_dim,
            "ground_truth": "ground_truth.npz" if dataset.ground_truth else None,
        }
    ]
    for cid in sorted(dataset.contents):
        content = dataset.contents[cid]
        outcome = dataset.outcomes.get(cid)
        image_path = None
        if content.image is not None:
            image_dir.mkdir(exist_ok=True)
            image_path = f"images/{cid}.png"
            u8 = np.clip(np.rint(content.image * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(u8, mode="RGB").save(out / image_path)
        records.append(
            {
                "kind": "content",
                "id": cid,
                "domain": content.domain,
                "image": image_path,
                "text": None if content.tokens is None else " ".join(dataset.vocab[t] for t in content.tokens),
                "features": None if content.features is None else [int(v) for v in content.features],
                "n_total": None if outcome is None else outcome.n_total,
                "n_clicks": None if outcome is None else outcome.n_clicks,
            }
        )
    for pair in dataset.pairs:
        records.append(
            {
                "kind": "pair",
                "control": pair.control,
                "treatments": list(pair.treatments),
                "domain": pair.domain,
            }
        )
    if dataset.splits:
        records.append({"kind": "splits", "labels": {k: dataset.splits[k] for k in sorted(dataset.splits)}})

    manifest = out / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for record in records:
            fh.write(canonical_json(record) + "\n")

    if dataset.ground_truth:
        arrays = {}
        for cid in sorted(dataset.ground_truth):
            gt = dataset.ground_truth[cid]
            arrays[f"{cid}.scalars"] = np.array([gt.true_rate, gt.pre_clip_rate, gt.base_rate], dtype=np.float64)
            if gt.token_attr is not None:
                arrays[f"{cid}.token"] = np.asarray(gt.token_attr, dtype=np.float32)
            if gt.pixel_attr is not None:
                arrays[f"{cid}.pixel"] = gt.pixel_attr
            if gt.feature_attr is not None:
                arrays[f"{cid}.feature"] = gt.feature_attr
            if gt.cells:
                arrays[f"{cid}.cells"] = np.asarray(gt.cells, dtype=np.int32)
        np.savez(out / "ground_truth.npz", **arrays)
    return manifest


def load_dataset(manifest_path) -> Dataset:
    """Read a manifest back into a validated Dataset; errors list offenders."""
    path = Path(manifest_path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    validator = _validator()

    meta = None
    content_records = []
    pair_records = []
    split_record = None
    problems = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                problems.append(f"line {lineno}: not valid JSON ({err})")
                continue
            if validator is not None:
                for err in validator.iter_errors(record):
                    problems.append(f"line {lineno}: schema violation: {err.message}")
            kind = record.get("kind")
            if kind == "meta":
                if meta is not None:
                    problems.append(f"line {lineno}: duplicate meta record")
                meta = record
            elif kind == "content":
                content_records.append((lineno, record))
            elif kind == "pair":
                pair_records.append((lineno, record))
            elif kind == "splits":
                split_record = record
            else:
                problems.append(f"line {lineno}: unknown record kind {kind!r}")
    if meta is None:
        problems.append("manifest has no meta record")
    if problems:
        raise DataError("invalid manifest:\n  " + "\n  ".join(problems))

    vocab = tuple(meta["vocab"])
    word_to_id = {w: i for i, w in enumerate(vocab)}
    contents: dict[str, Content] = {}
    outcomes: dict[str, Outcome] = {}
    for lineno, record in content_records:
        cid = record["id"]
        if cid in contents:
            problems.append(f"line {lineno}: duplicate content id {cid!r}")
            continue
        tokens = None
        if record.get("text") is not None:
            words = record["text"].split()
            unknown = [w for w in words if w not in word_to_id]
            if unknown:
                problems.append(f"line {lineno}: {cid}: words outside vocabulary: {unknown}")
                continue
            tokens = tuple(word_to_id[w] for w in words)
        image = None
        if record.get("image") is not None:
            image_file = base / record["image"]
            if not image_file.exists():
                problems.append(f"line {lineno}: {cid}: missing image file {record['image']}")
                continue
            with Image.open(image_file) as img:
                image = np.asarray(img.convert("RGB"), dtype=np.uint8).astype(np.float32) / 255.0
        features = None
        if record.get("features") is not None:
            features = np.asarray(record["features"], dtype=np.float32)
        contents[cid] = Content(id=cid, domain=record.get("domain"), image=image,
                                tokens=tokens, features=features)
        if record.get("n_total") is not None:
            try:
                outcomes[cid] = Outcome(n_total=record["n_total"], n_clicks=record["n_clicks"] or 0)
            except DataError as err:
                problems.append(f"line {lineno}: {cid}: {err}")

    pairs = []
    for lineno, record in pair_records:
        missing = [m for m in [record["control"], *record["treatments"]] if m not in contents]
        if missing:
            problems.append(f"line {lineno}: pair references unknown content ids {missing}")
            continue
        try:
            pairs.append(ExperimentPair(control=record["control"],
                                        treatments=tuple(record["treatments"]),
                                        domain=record["domain"]))
        except DataError as err:
            problems.append(f"line {lineno}: {err}")

    splits = {}
    if split_record is not None:
        splits = dict(split_record["labels"])

    ground_truth = None
    if meta.get("ground_truth"):
        gt_path = base / meta["ground_truth"]
        if not gt_path.exists():
            problems.append(f"ground truth sidecar missing: {meta['ground_truth']}")
        else:
            ground_truth = _load_ground_truth(gt_path, contents)

    if problems:
        raise DataError("invalid manifest:\n  " + "\n  ".join(problems))

    return Dataset(
        contents=contents,
        outcomes=outcomes,
        pairs=pairs,
        vocab=vocab,
        vocab_tags=tuple(meta["vocab_tags"]),
        domains=tuple(meta["domains"]),
        feature_dim=meta["feature_dim"],
        splits=splits,
        ground_truth=ground_truth,
    )


def _load_ground_truth(path, contents) -> dict[str, GroundTruth]:
    truth = {}
    with np.load(path) as bundle:
        keys = set(bundle.files)
        for cid in contents:
            scalar_key = f"{cid}.scalars"
            if scalar_key not in keys:
                continue
            scalars = bundle[scalar_key]
            cells = ()
            if f"{cid}.cells" in keys:
                cells = tuple((int(r), int(c), int(m)) for r, c, m in bundle[f"{cid}.cells"])
            truth[cid] = GroundTruth(
                true_rate=float(scalars[0]),
                pre_clip_rate=float(scalars[1]),
                base_rate=float(scalars[2]),
                token_attr=tuple(float(v) for v in bundle[f"{cid}.token"]) if f"{cid}.token" in keys else None,
                pixel_attr=bundle[f"{cid}.pixel"] if f"{cid}.pixel" in keys else None,
                feature_attr=bundle[f"{cid}.feature"] if f"{cid}.feature" in keys else None,
                cells=cells,
            )
    return truth
