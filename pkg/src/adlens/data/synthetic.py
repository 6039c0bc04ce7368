"""Synthetic dataset generator with planted, additive contributions.

Every generated item carries a known true success rate

    rate = clip(base(domain) + sum of token scores + sum of motif scores
                + sum of feature scores [+ pairwise feature bonuses] + noise)

so the per-token / per-pixel / per-dimension contribution maps are exact by
construction and can act as oracles. Motif contributions are spread uniformly
over the motif's pixels. Experiment groups mutate a single modality of a
control item, which keeps evaluation pairs cleanly attributable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..util import rng_for
from .types import Content, DataError, Dataset, ExperimentPair, GroundTruth, Outcome


@dataclass(frozen=True)
class TokenSpec:
    word: str
    tag: str  # ADJ | NOUN | VERB | ADV
    contribution: float


@dataclass(frozen=True)
class MotifSpec:
    name: str
    style: str  # solid | stripes | checker
    color: tuple[int, int, int]
    contribution: float


@dataclass(frozen=True)
class DomainSpec:
    name: str
    base_rate: float


@dataclass
class SyntheticSpec:
    tokens: tuple[TokenSpec, ...]
    motifs: tuple[MotifSpec, ...]
    domains: tuple[DomainSpec, ...]
    feature_contributions: tuple[float, ...]
    feature_interactions: tuple[tuple[int, int, float], ...] = ()
    image_size: int = 32
    grid: int = 4
    tokens_per_item: tuple[int, int] = (4, 8)
    motifs_per_item: tuple[int, int] = (2, 6)
    feature_on_prob: float = 0.5
    present_image: float = 1.0
    present_text: float = 1.0
    present_features: float = 1.0
    noise_std: float = 0.0
    # impressions start at 1e4: below that, click sampling noise alone caps
    # control-vs-treatment ordering near 0.93 even for a perfect predictor
    n_total_range: tuple[int, int] = (10_000, 100_000)
    exact_outcomes: bool = False
    max_clip_fraction: float = 0.01
    mutation_weights: tuple[float, float, float] = (0.45, 0.45, 0.10)  # text, image, features
    treatments_range: tuple[int, int] = (1, 3)
    mutations_range: tuple[int, int] = (1, 2)
    background: int = 128

    def __post_init__(self):
        if self.image_size % self.grid != 0:
            raise DataError("image size must be a multiple of the motif grid")
        values = [t.contribution for t in self.tokens] + [m.contribution for m in self.motifs]
        values += list(self.feature_contributions) + [d.base_rate for d in self.domains]
        if not np.isfinite(values).all():
            raise DataError("spec contributions must all be finite")
        peak = self.max_possible_rate()
        if peak > 1.0 + 1e-9:
            raise DataError(f"spec infeasible: base plus maximal contributions reaches {peak:.3f} > 1")

    @property
    def cell(self) -> int:
        return self.image_size // self.grid

    def max_possible_rate(self) -> float:
        base = max(d.base_rate for d in self.domains)
        top_token = max((t.contribution for t in self.tokens), default=0.0)
        top_motif = max((m.contribution for m in self.motifs), default=0.0)
        text = self.tokens_per_item[1] * max(top_token, 0.0) if self.present_text > 0 else 0.0
        image = self.motifs_per_item[1] * max(top_motif, 0.0) if self.present_image > 0 else 0.0
        feats = 0.0
        if self.present_features > 0:
            feats = sum(max(c, 0.0) for c in self.feature_contributions)
            feats += sum(max(b, 0.0) for _, _, b in self.feature_interactions)
        return base + text + image + feats

    def vocab(self) -> tuple[str, ...]:
        return tuple(t.word for t in self.tokens)

    def vocab_tags(self) -> tuple[str, ...]:
        return tuple(t.tag for t in self.tokens)

    def token_values(self) -> np.ndarray:
        return np.array([t.contribution for t in self.tokens])

    def motif_values(self) -> np.ndarray:
        return np.array([m.contribution for m in self.motifs])


# ---------------------------------------------------------------------------
# built-in specs

_ADJ = ["free", "instant", "premium", "exclusive", "easy", "secure", "extra",
        "smart", "fresh", "bold", "quick", "simple", "unlimited", "new",
        "digital", "favorite"]
_NOUN = ["trial", "deal", "offer", "shipping", "gift", "upgrade", "access",
         "rewards", "bundle", "discount", "support", "delivery", "music",
         "games", "member", "savings", "card", "credit", "taxes", "fees",
         "plan", "price", "account", "device"]
_VERB = ["buy", "join", "start", "save", "get", "shop"]
_ADV = ["now", "today"]

# hand-ordered from least to most appealing so the planted scores read naturally
_SENTIMENT_ORDER = [
    "taxes", "fees", "credit", "card", "price", "account", "device", "plan",
    "buy", "shop", "bold", "digital", "now", "today", "get", "join",
    "start", "member", "support", "delivery", "simple", "smart", "secure",
    "fresh", "quick", "easy", "new", "extra", "bundle", "music", "games",
    "access", "offer", "deal", "upgrade", "shipping", "save", "favorite",
    "exclusive", "instant", "premium", "savings", "discount", "rewards",
    "unlimited", "gift", "trial", "free",
]

_PALETTE = [
    (170, 40, 40), (40, 140, 60), (40, 80, 180), (200, 160, 40),
    (130, 60, 160), (40, 160, 160), (220, 110, 40), (90, 90, 90),
    (230, 70, 140), (110, 180, 40), (60, 50, 120), (180, 200, 210),
]

_MOTIF_ORDER = [
    "clutter", "smallprint", "watermark", "divider", "frame", "arrow",
    "banner", "icon", "badge", "ribbon", "medal", "starburst",
]


def _token_specs(max_abs: float = 0.035) -> tuple[TokenSpec, ...]:
    tags = {}
    for word in _ADJ:
        tags[word] = "ADJ"
    for word in _NOUN:
        tags[word] = "NOUN"
    for word in _VERB:
        tags[word] = "VERB"
    for word in _ADV:
        tags[word] = "ADV"
    values = np.linspace(-max_abs, max_abs, len(_SENTIMENT_ORDER))
    by_word = {w: float(v) for w, v in zip(_SENTIMENT_ORDER, values)}
    words = sorted(tags)  # vocabulary is alphabetical; contributions follow sentiment order
    return tuple(TokenSpec(w, tags[w], by_word[w]) for w in words)


def _motif_specs(max_abs: float = 0.045) -> tuple[MotifSpec, ...]:
    styles = ["solid", "stripes", "checker"]
    values = np.linspace(-max_abs, max_abs, len(_MOTIF_ORDER))
    return tuple(
        MotifSpec(name, styles[i % 3], _PALETTE[i], float(values[i]))
        for i, name in enumerate(_MOTIF_ORDER)
    )


def default_spec() -> SyntheticSpec:
    """The stock generator: additive signal in every modality, no noise.

    Motif cells are a quarter of the image (16px at the default size) so each
    one spans several locations of the conv encoder's final map. Treatments
    rewrite a meaningful chunk of one modality (three or four token swaps, or
    up to three motif changes) so pair deltas clear the click-count sampling
    noise; feature-vector mutations are off by default because their deltas
    sit below it.
    """
    domains = tuple(
        DomainSpec(name, float(base))
        for name, base in zip(
            ["books", "devices", "grocery", "music", "video", "wardrobe"],
            np.linspace(0.25, 0.45, 6),
        )
    )
    return SyntheticSpec(
        tokens=_token_specs(),
        motifs=_motif_specs(),
        domains=domains,
        feature_contributions=(0.012, -0.012, 0.008, -0.008, 0.004, -0.004, 0.010, -0.010),
        grid=2,
        motifs_per_item=(1, 3),
        mutation_weights=(0.5, 0.5, 0.0),
        mutations_range=(3, 4),
    )


def nonlinear_spec() -> SyntheticSpec:
    """Feature-only variant whose rate depends on pairwise feature ANDs.

    A linear bag-of-features model cannot express the interaction terms, so it
    sets the error floor a nonlinear scorer should beat.
    """
    base = default_spec()
    return SyntheticSpec(
        tokens=base.tokens,
        motifs=base.motifs,
        domains=base.domains,
        feature_contributions=(0.03, -0.03, 0.02, -0.02, 0.025, -0.025, 0.015, -0.015),
        feature_interactions=((0, 1, 0.16), (2, 3, -0.16), (4, 5, 0.12), (6, 7, -0.12)),
        present_image=0.0,
        present_text=0.0,
        mutation_weights=(0.0, 0.0, 1.0),
    )


def domain_only_spec() -> SyntheticSpec:
    """Only the domain carries signal; used to calibrate encoder pretraining."""
    base = default_spec()
    return SyntheticSpec(
        tokens=base.tokens,
        motifs=base.motifs,
        domains=base.domains,
        feature_contributions=(0.0,) * 8,
        present_image=0.0,
        present_text=0.0,
        present_features=0.0,
        mutation_weights=(0.0, 0.0, 1.0),
    )


def tiny_spec() -> SyntheticSpec:
    """Small images and short texts; keeps unit tests fast."""
    base = default_spec()
    return SyntheticSpec(
        tokens=base.tokens,
        motifs=base.motifs[:6],
        domains=base.domains[:3],
        feature_contributions=(0.012, -0.012, 0.008, -0.008),
        image_size=16,
        grid=4,
        tokens_per_item=(3, 5),
        motifs_per_item=(2, 4),
    )


# ---------------------------------------------------------------------------
# rendering


def render_cells(spec: SyntheticSpec, cells) -> np.ndarray:
    """Draw motif cells over the flat background; returns (H, W, 3) float32."""
    size, cell = spec.image_size, spec.cell
    img = np.full((size, size, 3), spec.background, dtype=np.uint8)
    for row, col, midx in cells:
        motif = spec.motifs[midx]
        tile = _render_motif(motif, cell)
        img[row * cell : (row + 1) * cell, col * cell : (col + 1) * cell] = tile
    return img.astype(np.float32) / 255.0


def _render_motif(motif: MotifSpec, cell: int) -> np.ndarray:
    color = np.array(motif.color, dtype=np.uint8)
    tile = np.empty((cell, cell, 3), dtype=np.uint8)
    if motif.style == "solid":
        tile[:] = color
    elif motif.style == "stripes":
        dark = (color * 0.45).astype(np.uint8)
        for r in range(cell):
            tile[r] = color if (r // 2) % 2 == 0 else dark
    else:  # checker
        light = np.minimum(color.astype(np.int32) + 80, 255).astype(np.uint8)
        for r in range(cell):
            for c in range(cell):
                tile[r, c] = color if ((r // 2) + (c // 2)) % 2 == 0 else light
    return tile


def pixel_truth(spec: SyntheticSpec, cells) -> np.ndarray:
    size, cell = spec.image_size, spec.cell
    attr = np.zeros((size, size), dtype=np.float32)
    per_pixel = 1.0 / (cell * cell)
    for row, col, midx in cells:
        attr[row * cell : (row + 1) * cell, col * cell : (col + 1) * cell] = (
            spec.motifs[midx].contribution * per_pixel
        )
    return attr


# ---------------------------------------------------------------------------
# generation


@dataclass
class _Draft:
    domain_idx: int
    tokens: tuple[int, ...] | None
    cells: tuple[tuple[int, int, int], ...] | None
    features: np.ndarray | None


def _draft_rate(spec: SyntheticSpec, draft: _Draft) -> float:
    rate = spec.domains[draft.domain_idx].base_rate
    if draft.tokens is not None:
        rate += float(spec.token_values()[list(draft.tokens)].sum())
    if draft.cells is not None:
        values = spec.motif_values()
        rate += float(sum(values[m] for _, _, m in draft.cells))
    if draft.features is not None:
        rate += float(np.dot(draft.features, spec.feature_contributions))
        for i, j, bonus in spec.feature_interactions:
            if draft.features[i] > 0.5 and draft.features[j] > 0.5:
                rate += bonus
    return rate


def _sample_draft(spec: SyntheticSpec, rng, domain_idx: int) -> _Draft:
    tokens = cells = features = None
    if rng.random() < spec.present_text:
        count = int(rng.integers(spec.tokens_per_item[0], spec.tokens_per_item[1] + 1))
        tokens = tuple(int(t) for t in rng.choice(len(spec.tokens), size=count, replace=False))
    if rng.random() < spec.present_image:
        hi = min(spec.motifs_per_item[1], len(spec.motifs))
        lo = min(spec.motifs_per_item[0], hi)
        count = int(rng.integers(lo, hi + 1))
        spots = rng.choice(spec.grid * spec.grid, size=count, replace=False)
        # motifs are unique within an image so pair difference sets stay identifiable
        picks = rng.choice(len(spec.motifs), size=count, replace=False)
        cells = tuple(
            (int(s) // spec.grid, int(s) % spec.grid, int(m))
            for s, m in sorted(zip((int(s) for s in spots), (int(m) for m in picks)))
        )
    if rng.random() < spec.present_features:
        features = (rng.random(len(spec.feature_contributions)) < spec.feature_on_prob).astype(np.float32)
    return _Draft(domain_idx, tokens, cells, features)


def _mutate(spec: SyntheticSpec, rng, draft: _Draft, modality: str, count: int) -> _Draft:
    if modality == "text" and draft.tokens:
        tokens = list(draft.tokens)
        positions = rng.choice(len(tokens), size=min(count, len(tokens)), replace=False)
        for pos in sorted(int(p) for p in positions):
            outside = [t for t in range(len(spec.tokens)) if t not in tokens]
            tokens[pos] = int(outside[int(rng.integers(len(outside)))])
        return _Draft(draft.domain_idx, tuple(tokens), draft.cells, draft.features)
    if modality == "image" and draft.cells:
        cells = list(draft.cells)
        picks = rng.choice(len(cells), size=min(count, len(cells)), replace=False)
        for pick in sorted(int(p) for p in picks):
            row, col, old = cells[pick]
            present = {m for _, _, m in cells}
            options = [m for m in range(len(spec.motifs)) if m not in present]
            if not options:
                continue
            cells[pick] = (row, col, int(options[int(rng.integers(len(options)))]))
        return _Draft(draft.domain_idx, draft.tokens, tuple(cells), draft.features)
    if modality == "features" and draft.features is not None:
        features = draft.features.copy()
        dims = rng.choice(len(features), size=min(count, len(features)), replace=False)
        for dim in sorted(int(d) for d in dims):
            features[dim] = 1.0 - features[dim]
        return _Draft(draft.domain_idx, draft.tokens, draft.cells, features)
    return draft


def generate_synthetic(spec: SyntheticSpec, n_items: int, n_pairs: int, seed: int) -> Dataset:
    """Build a dataset of ``n_items`` contents containing ``n_pairs`` experiments."""
    rng = rng_for(seed, "synthetic")
    modalities = ("text", "image", "features")
    weights = np.asarray(spec.mutation_weights, dtype=np.float64)
    if weights.sum() <= 0:
        raise DataError("mutation weights must not all be zero")
    weights = weights / weights.sum()

    plans: list[tuple[_Draft, list[_Draft]]] = []
    used = 0
    for _ in range(n_pairs):
        domain_idx = int(rng.integers(len(spec.domains)))
        control = _sample_draft(spec, rng, domain_idx)
        modality = modalities[int(rng.choice(3, p=weights))]
        n_treat = int(rng.integers(spec.treatments_range[0], spec.treatments_range[1] + 1))
        treatments = []
        for _ in range(n_treat):
            count = int(rng.integers(spec.mutations_range[0], spec.mutations_range[1] + 1))
            treatments.append(_mutate(spec, rng, control, modality, count))
        plans.append((control, treatments))
        used += 1 + n_treat
    if used > n_items:
        raise DataError(f"{n_pairs} experiments need {used} items but only {n_items} requested")
    singles = [
        _sample_draft(spec, rng, int(rng.integers(len(spec.domains))))
        for _ in range(n_items - used)
    ]

    contents: dict[str, Content] = {}
    outcomes: dict[str, Outcome] = {}
    truth: dict[str, GroundTruth] = {}
    pairs: list[ExperimentPair] = []
    clipped = 0
    counter = 0

    def realize(draft: _Draft) -> str:
        nonlocal counter, clipped
        counter += 1
        cid = f"c{counter:06d}"
        pre = _draft_rate(spec, draft)
        if spec.noise_std > 0:
            pre += float(rng.normal(0.0, spec.noise_std))
        rate = min(max(pre, 0.0), 1.0)
        if rate != pre:
            clipped += 1
        image = render_cells(spec, draft.cells) if draft.cells is not None else None
        lo, hi = spec.n_total_range
        n_total = int(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        if spec.exact_outcomes:
            n_clicks = int(round(rate * n_total))
        else:
            n_clicks = int(rng.binomial(n_total, rate))
        domain = spec.domains[draft.domain_idx].name
        contents[cid] = Content(
            id=cid,
            domain=domain,
            image=image,
            tokens=draft.tokens,
            features=None if draft.features is None else draft.features.copy(),
        )
        outcomes[cid] = Outcome(n_total=n_total, n_clicks=n_clicks)
        truth[cid] = GroundTruth(
            true_rate=rate,
            pre_clip_rate=pre,
            base_rate=spec.domains[draft.domain_idx].base_rate,
            token_attr=None if draft.tokens is None else tuple(
                float(spec.tokens[t].contribution) for t in draft.tokens
            ),
            pixel_attr=pixel_truth(spec, draft.cells) if draft.cells is not None else None,
            feature_attr=None if draft.features is None else (
                draft.features * np.asarray(spec.feature_contributions, dtype=np.float32)
            ),
            cells=draft.cells or (),
        )
        return cid

    for control, treatments in plans:
        control_id = realize(control)
        treatment_ids = tuple(realize(t) for t in treatments)
        pairs.append(ExperimentPair(control=control_id, treatments=treatment_ids,
                                    domain=spec.domains[control.domain_idx].name))
    for single in singles:
        realize(single)

    if n_items and clipped / n_items > spec.max_clip_fraction:
        raise DataError(
            f"spec infeasible: {clipped}/{n_items} rates left [0, 1] before clipping "
            f"(limit {spec.max_clip_fraction:.1%})"
        )

    return Dataset(
        contents=contents,
        outcomes=outcomes,
        pairs=pairs,
        vocab=spec.vocab(),
        vocab_tags=spec.vocab_tags(),
        domains=tuple(d.name for d in spec.domains),
        feature_dim=len(spec.feature_contributions),
        ground_truth=truth,
    )
