"""Model registry and artifact catalog backing the HTTP service.

An artifacts directory is the unit of deployment:

    artifacts/
      data/manifest.jsonl [+ images/, ground_truth.npz]
      model/config.json, model/model.ckpt
      insights/<domain>.json, insights/patches/*.png, insights/rank_*.json
      evals/<domain>__<modality>.json

The active model is swapped atomically under a lock; requests read a snapshot
reference so no request ever observes a half-updated registry.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..evaluation import EvalReport
from ..insights import RankTable
from ..model import ContentScorer, ModelConfig


class RegistryError(RuntimeError):
    pass


@dataclass
class Catalog:
    root: Path
    recommendations: dict = field(default_factory=dict)  # domain -> bundle dict
    rank_tables: dict = field(default_factory=dict)  # (domain, kind) -> RankTable
    eval_reports: dict = field(default_factory=dict)  # (domain, modality) -> EvalReport

    @classmethod
    def load(cls, root) -> "Catalog":
        root = Path(root)
        catalog = cls(root=root)
        insights_dir = root / "insights"
        if insights_dir.is_dir():
            for path in sorted(insights_dir.glob("*.json")):
                if path.name.startswith("rank_"):
                    table = RankTable.load(path)
                    catalog.rank_tables[(table.domain, table.kind)] = table
                else:
                    with open(path) as fh:
                        bundle = json.load(fh)
                    catalog.recommendations[bundle["domain"]] = bundle
        evals_dir = root / "evals"
        if evals_dir.is_dir():
            for path in sorted(evals_dir.glob("*.json")):
                domain, _, modality = path.stem.partition("__")
                catalog.eval_reports[(domain, modality)] = EvalReport.load(path)
        return catalog

    def patch_png(self, asset_id: str) -> bytes | None:
        path = self.root / "insights" / "patches" / f"{asset_id}.png"
        if not path.is_file() or ".." in asset_id or "/" in asset_id:
            return None
        return path.read_bytes()


@dataclass
class Snapshot:
    model: ContentScorer | None
    config: ModelConfig | None
    catalog: Catalog | None

    @property
    def digest(self) -> str | None:
        return self.config.digest() if self.config else None


class Registry:
    def __init__(self):
        self._lock = threading.Lock()
        self._snapshot = Snapshot(model=None, config=None, catalog=None)

    def snapshot(self) -> Snapshot:
        return self._snapshot

    def activate(self, model: ContentScorer | None, config: ModelConfig | None,
                 catalog: Catalog | None) -> None:
        if model is not None and config is not None and model.config.digest() != config.digest():
            raise RegistryError("model/config digest mismatch")
        with self._lock:
            self._snapshot = Snapshot(model=model, config=config, catalog=catalog)

    @classmethod
    def from_artifacts(cls, root) -> "Registry":
        root = Path(root)
        config_path = root / "model" / "config.json"
        ckpt_path = root / "model" / "model.ckpt"
        registry = cls()
        model = config = None
        if config_path.is_file() and ckpt_path.is_file():
            with open(config_path) as fh:
                config = ModelConfig.from_dict(json.load(fh))
            model = ContentScorer.load(ckpt_path, config)
        catalog = Catalog.load(root)
        registry.activate(model, config, catalog)
        return registry
