"""Insight quality from control/treatment pairs.

For every pair the harness builds the difference set (features present in
exactly one side), masks each side's attribution map to it, and compares the
signed attribution difference d_C against the observed success-rate change
d_Y. A trustworthy attributor makes the (d_C, d_Y) scatter linear, measured by
the Pearson correlation.

Three views share those semantics: generic bags of hashable feature keys,
token sequences (set semantics over token ids, positional indicator masks),
and images (locations whose best cross-image cosine similarity in feature
space falls under a threshold count as changed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..data.types import LARGE_IMAGE_CUTOFF
from ..imaging import bilinear_resize
from .metrics import ConstantInputError, EvalError, pearson, trust_score


def _sign(x: float) -> float:
    return 1.0 if x >= 0 else -1.0


@dataclass
class DiffResult:
    control: str
    treatment: str
    diff_keys: tuple
    attr_diff: float  # signed predicted attribution difference (d_C)
    rate_diff: float  # absolute observed success-rate change (d_Y)
    mask_control: np.ndarray | None = None
    mask_treatment: np.ndarray | None = None

    def __post_init__(self):
        if self.rate_diff < 0:
            raise EvalError("rate difference is an absolute value")
        if not self.diff_keys and abs(self.attr_diff) > 1e-12:
            raise EvalError("empty difference set must give zero attribution difference")


@dataclass
class EvalReport:
    modality: str
    samples: list = field(default_factory=list)
    rho: float | None = None  # None when undefined (too few or constant samples)
    n_pairs: int = 0
    trust: float = 0.0
    pairwise_accuracy: float | None = None
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "rho": None if self.rho is None else round(float(self.rho), 12),
            "trust": round(float(self.trust), 12),
            "n_pairs": self.n_pairs,
            "pairwise_accuracy": self.pairwise_accuracy,
            "skipped": self.skipped,
            "samples": [
                {
                    "control": s.control,
                    "treatment": s.treatment,
                    "diff_keys": [str(k) for k in s.diff_keys],
                    "attr_diff": round(float(s.attr_diff), 12),
                    "rate_diff": round(float(s.rate_diff), 12),
                }
                for s in self.samples
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        report = cls(modality=d["modality"], rho=d["rho"], n_pairs=d["n_pairs"],
                     trust=d["trust"], pairwise_accuracy=d.get("pairwise_accuracy"),
                     skipped=d.get("skipped", 0))
        report.samples = [
            DiffResult(control=s["control"], treatment=s["treatment"],
                       diff_keys=tuple(s["diff_keys"]), attr_diff=s["attr_diff"],
                       rate_diff=s["rate_diff"])
            for s in d.get("samples", [])
        ]
        return report

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _finish_report(modality: str, samples: list, skipped: int = 0) -> EvalReport:
    report = EvalReport(modality=modality, samples=samples, skipped=skipped,
                        n_pairs=len(samples))
    if len(samples) >= 2:
        try:
            report.rho = pearson([s.attr_diff for s in samples], [s.rate_diff for s in samples])
            report.trust = trust_score(report.rho)
        except ConstantInputError:
            report.rho = None  # degenerate pair set: every difference identical
            report.trust = 0.0
    return report


# ---------------------------------------------------------------------------
# generic bags


def eval_generic(pairs, bags, rates, attributions) -> EvalReport:
    """Bags are sets of hashable keys; attributions map key -> score per content."""
    samples = []
    for control, treatment in pairs:
        for cid in (control, treatment):
            if cid not in attributions:
                raise EvalError(f"no attribution scores for content {cid!r}")
        bag_c, bag_t = set(bags[control]), set(bags[treatment])
        diff = bag_c ^ bag_t
        attr_c = sum(attributions[control][k] for k in bag_c & diff)
        attr_t = sum(attributions[treatment][k] for k in bag_t & diff)
        sign = _sign(rates[treatment] - rates[control])
        samples.append(
            DiffResult(
                control=control,
                treatment=treatment,
                diff_keys=tuple(sorted(diff, key=str)),
                attr_diff=sign * (attr_t - attr_c) if diff else 0.0,
                rate_diff=abs(rates[treatment] - rates[control]),
            )
        )
    return _finish_report("generic", samples)


# ---------------------------------------------------------------------------
# token sequences


def eval_text(pairs, tokens, rates, maps) -> EvalReport:
    """Token-set difference; positional indicator masks pick scores out of the
    per-token attribution maps."""
    samples = []
    for control, treatment in pairs:
        for cid in (control, treatment):
            if cid not in maps or maps[cid] is None or maps[cid].text is None:
                raise EvalError(f"missing text attribution map for content {cid!r}")
        toks_c, toks_t = tuple(tokens[control]), tuple(tokens[treatment])
        diff = set(toks_c) ^ set(toks_t)
        masks = {}
        scores = {}
        for cid, toks in ((control, toks_c), (treatment, toks_t)):
            text_scores = maps[cid].text
            length = min(len(toks), len(text_scores))
            mask = np.array([1.0 if toks[pos] in diff else 0.0 for pos in range(length)])
            masks[cid] = mask
            scores[cid] = float((mask * text_scores[:length]).sum())
        sign = _sign(rates[treatment] - rates[control])
        samples.append(
            DiffResult(
                control=control,
                treatment=treatment,
                diff_keys=tuple(sorted(diff)),
                attr_diff=sign * (scores[treatment] - scores[control]) if diff else 0.0,
                rate_diff=abs(rates[treatment] - rates[control]),
                mask_control=masks[control],
                mask_treatment=masks[treatment],
            )
        )
    return _finish_report("text", samples)


# ---------------------------------------------------------------------------
# images


def _cosine_max(a: np.ndarray, b: np.ndarray):
    """Per-location best cosine similarity against the other image's locations."""
    eps = 1e-12
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), eps)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), eps)
    matrix = an @ bn.T
    return matrix.max(axis=1), matrix.max(axis=0)


def eval_image(pairs, images, rates, maps, feature_fn, sim_threshold: float = 0.8) -> EvalReport:
    """Feature-space difference masks against per-pixel attribution maps.

    Locations whose best match in the counterpart image stays under the
    similarity threshold count as changed. The similarity field is upsampled
    to pixel size before thresholding (thresholding an already-binary mask
    after a bilinear resize would clip isolated regions), so masks stay
    binary at full resolution. Oversized images are skipped and counted.
    """
    samples = []
    skipped = 0
    feature_cache: dict = {}

    def features(cid):
        if cid not in feature_cache:
            arr = feature_fn(images[cid])
            c, h, w = arr.shape
            feature_cache[cid] = (arr.reshape(c, h * w).T, (h, w))
        return feature_cache[cid]

    for control, treatment in pairs:
        for cid in (control, treatment):
            if cid not in maps or maps[cid] is None or maps[cid].image is None:
                raise EvalError(f"missing image attribution map for content {cid!r}")
        if any(images[cid].shape[0] * images[cid].shape[1] > LARGE_IMAGE_CUTOFF
               for cid in (control, treatment)):
            skipped += 1
            continue
        feat_c, grid_c = features(control)
        feat_t, grid_t = features(treatment)
        sims_c, sims_t = _cosine_max(feat_c, feat_t)
        masks = {}
        scores = {}
        for cid, sims, grid in ((control, sims_c, grid_c), (treatment, sims_t, grid_t)):
            h, w = maps[cid].image.shape
            field = bilinear_resize(sims.reshape(grid), h, w)
            mask = (field < sim_threshold).astype(np.float64)
            masks[cid] = mask
            scores[cid] = float((mask * maps[cid].image).sum())
        changed = bool(masks[control].any() or masks[treatment].any())
        sign = _sign(rates[treatment] - rates[control])
        samples.append(
            DiffResult(
                control=control,
                treatment=treatment,
                diff_keys=("image-regions",) if changed else (),
                attr_diff=sign * (scores[treatment] - scores[control]) if changed else 0.0,
                rate_diff=abs(rates[treatment] - rates[control]),
                mask_control=masks[control],
                mask_treatment=masks[treatment],
            )
        )
    return _finish_report("image", samples, skipped=skipped)


# ---------------------------------------------------------------------------
# pair routing


def pairs_differing(dataset, modality: str, pairs=None) -> list:
    """(control, best treatment) pairs whose contents differ in the modality."""
    chosen = pairs if pairs is not None else dataset.best_treatment_pairs()
    out = []
    for control, treatment in chosen:
        a, b = dataset.contents[control], dataset.contents[treatment]
        if modality == "text":
            if a.tokens != b.tokens:
                out.append((control, treatment))
        elif modality == "image":
            both = a.image is not None and b.image is not None
            if both and a.image.tobytes() != b.image.tobytes():
                out.append((control, treatment))
        elif modality == "features":
            both = a.features is not None and b.features is not None
            if both and not np.array_equal(a.features, b.features):
                out.append((control, treatment))
        else:
            raise EvalError(f"unknown modality {modality!r}")
    return out
