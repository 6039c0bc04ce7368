"""Content items, click outcomes, experiment pairs, and the dataset bundle."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

#: images above this pixel count are skipped by the image evaluation path
LARGE_IMAGE_CUTOFF = 5_000_000

MAX_IMAGE_SIDE = 4096

SPLITS = ("train", "val", "test_in", "test_out")


class DataError(ValueError):
    pass


def success_rate(n_clicks: int, n_total: int) -> float:
    """Clicks over impressions."""
    if n_total <= 0:
        raise DataError(f"success rate needs a positive impression count, got {n_total}")
    if n_clicks < 0 or n_clicks > n_total:
        raise DataError(f"click count {n_clicks} outside [0, {n_total}]")
    return n_clicks / n_total


@dataclass(frozen=True)
class Outcome:
    n_total: int
    n_clicks: int

    def __post_init__(self):
        if self.n_total < 0 or self.n_clicks < 0:
            raise DataError("outcome counts must be non-negative")
        if self.n_clicks > self.n_total:
            raise DataError(f"clicks {self.n_clicks} exceed impressions {self.n_total}")

    @property
    def success_rate(self) -> float:
        return success_rate(self.n_clicks, self.n_total)


@dataclass(frozen=True)
class Content:
    """One marketing item; any modality may be absent (None)."""

    id: str
    domain: str | None = None
    image: np.ndarray | None = None  # (H, W, 3) float32 in [0, 1]
    tokens: tuple[int, ...] | None = None
    features: np.ndarray | None = None  # (F,) float32

    @property
    def has_image(self) -> bool:
        return self.image is not None

    @property
    def has_text(self) -> bool:
        return self.tokens is not None and len(self.tokens) > 0

    @property
    def has_features(self) -> bool:
        return self.features is not None

    @property
    def has_domain(self) -> bool:
        return self.domain is not None

    def presence(self) -> dict:
        return {
            "image": self.has_image,
            "text": self.has_text,
            "domain": self.has_domain,
            "features": self.has_features,
        }


def validate_content(content: Content, vocab_size: int | None = None,
                     feature_dim: int | None = None) -> list[str]:
    """Returns a list of invariant violations (empty when valid)."""
    problems = []
    if not (content.has_image or content.has_text or content.has_domain or content.has_features):
        problems.append(f"{content.id}: every modality is absent")
    if content.image is not None:
        img = content.image
        if img.ndim != 3 or img.shape[2] != 3:
            problems.append(f"{content.id}: image must be (H, W, 3), got {img.shape}")
        else:
            h, w = img.shape[:2]
            if h < 1 or w < 1 or h > MAX_IMAGE_SIDE or w > MAX_IMAGE_SIDE:
                problems.append(f"{content.id}: image side out of bounds: {img.shape}")
            if not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0:
                problems.append(f"{content.id}: image values must be finite and inside [0, 1]")
    if content.tokens is not None:
        if vocab_size is not None and any(t < 0 or t >= vocab_size for t in content.tokens):
            problems.append(f"{content.id}: token id outside vocabulary of size {vocab_size}")
    if content.features is not None:
        if feature_dim is not None and content.features.shape != (feature_dim,):
            problems.append(f"{content.id}: feature vector must have length {feature_dim}, got {content.features.shape}")
        elif not np.isfinite(content.features).all():
            problems.append(f"{content.id}: feature vector holds non-finite values")
    return problems


@dataclass(frozen=True)
class ExperimentPair:
    """A control item plus the treatments tested against it."""

    control: str
    treatments: tuple[str, ...]
    domain: str

    def __post_init__(self):
        if not self.treatments:
            raise DataError(f"pair for {self.control} has no treatments")
        if self.control in self.treatments:
            raise DataError(f"pair for {self.control} lists the control as a treatment")


@dataclass(frozen=True)
class GroundTruth:
    """Planted contributions (synthetic data only)."""

    true_rate: float
    pre_clip_rate: float
    base_rate: float
    token_attr: tuple[float, ...] | None
    pixel_attr: np.ndarray | None  # (H, W) float32
    feature_attr: np.ndarray | None  # (F,) float32
    cells: tuple[tuple[int, int, int], ...] = ()  # (row, col, motif index)


@dataclass
class Dataset:
    contents: dict[str, Content]
    outcomes: dict[str, Outcome]
    pairs: list[ExperimentPair]
    vocab: tuple[str, ...] = ()
    vocab_tags: tuple[str, ...] = ()
    domains: tuple[str, ...] = ()
    feature_dim: int = 0
    splits: dict[str, str] = field(default_factory=dict)
    ground_truth: dict[str, GroundTruth] | None = None

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise DataError("invalid dataset:\n  " + "\n  ".join(problems))

    def validate(self) -> list[str]:
        problems = []
        for cid, content in self.contents.items():
            if content.id != cid:
                problems.append(f"{cid}: keyed under a different id than it carries ({content.id})")
            problems.extend(validate_content(content, len(self.vocab) or None, self.feature_dim or None))
            if content.domain is not None and self.domains and content.domain not in self.domains:
                problems.append(f"{cid}: unknown domain {content.domain!r}")
        for cid in self.outcomes:
            if cid not in self.contents:
                problems.append(f"outcome for unknown content {cid!r}")
        for pair in self.pairs:
            for member in (pair.control, *pair.treatments):
                if member not in self.contents:
                    problems.append(f"pair references missing content {member!r}")
                elif self.contents[member].domain != pair.domain:
                    problems.append(f"pair member {member!r} is not in domain {pair.domain!r}")
        for cid, label in self.splits.items():
            if cid not in self.contents:
                problems.append(f"split label for unknown content {cid!r}")
            if label not in SPLITS:
                problems.append(f"{cid}: unknown split label {label!r}")
        return problems

    # -- views ------------------------------------------------------------------

    def ids(self, split: str | None = None) -> list[str]:
        if split is None:
            return sorted(self.contents)
        return sorted(cid for cid, lab in self.splits.items() if lab == split)

    def ids_in_domain(self, domain: str, split: str | None = None) -> list[str]:
        pool = self.ids(split)
        return [cid for cid in pool if self.contents[cid].domain == domain]

    def rate(self, cid: str) -> float:
        return self.outcomes[cid].success_rate

    def true_rate(self, cid: str) -> float:
        if self.ground_truth is None or cid not in self.ground_truth:
            raise DataError(f"no ground truth recorded for {cid!r}")
        return self.ground_truth[cid].true_rate

    def with_splits(self, splits: dict[str, str]) -> "Dataset":
        return replace(self, splits=dict(splits))

    def best_treatment_pairs(self, split: str | None = None) -> list[tuple[str, str]]:
        """(control, best treatment) per experiment, ranked by observed rate."""
        chosen = []
        allowed = None if split is None else set(self.ids(split))
        for pair in self.pairs:
            members = [pair.control, *pair.treatments]
            if allowed is not None and any(m not in allowed for m in members):
                continue
            best = max(pair.treatments, key=lambda t: (self.rate(t), t))
            chosen.append((pair.control, best))
        return chosen
