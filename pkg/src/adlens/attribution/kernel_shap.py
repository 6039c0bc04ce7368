"""Shapley value estimation by kernel-weighted linear regression.

The value of a coalition is the pre-sigmoid prediction with the off-coalition
groups replaced by their baselines. When the sample budget covers every proper
non-empty coalition the regression is solved exactly (enumeration); otherwise
coalitions are sampled with the kernel's size distribution. The efficiency
constraint (scores sum to full minus empty value) is eliminated analytically,
so it holds exactly in both branches.
"""

from __future__ import annotations

import numpy as np

from ..util import rng_for
from .groups import apply_off_groups, default_groups, validate_groups, write_group_scores
from .maps import AttributionError, BaselineSpec
from .methods import _EMB_NAME, _INPUT_KEY, _base_embeddings, _finish_map, _map_parts_template


def kernel_shap(model, content, baseline: BaselineSpec = BaselineSpec(),
                groups=None, n_samples: int | None = None, seed: int = 0,
                image_tile: int = 16):
    natural = model.input_arrays(content)
    if not natural:
        raise AttributionError(f"{content.id}: nothing to attribute")
    text_length = natural["text_emb"].shape[0] if "text_emb" in natural else None
    if groups is None:
        groups = default_groups(content, baseline, image_tile=image_tile, text_length=text_length)
    validate_groups(groups, content, text_length=text_length)
    m = len(groups)
    if n_samples is None:
        n_samples = max(2 * m + 2, 512)
    if n_samples < 2 * m + 2:
        raise AttributionError(f"kernel shap needs at least {2 * m + 2} samples for {m} groups")
    base = baseline.arrays_for(natural)

    embs = _base_embeddings(model, natural)
    v_full = float(model.head_pre_from_embeddings({k: v[None] for k, v in embs.items()}, 1)[0])
    v_empty = _coalition_values(model, content, natural, base, groups,
                                np.zeros((1, m), dtype=bool), embs)[0]
    delta = v_full - v_empty

    if m == 1:
        phi = np.array([delta])
    else:
        coalitions, weights = _draw_coalitions(m, n_samples, seed)
        values = _coalition_values(model, content, natural, base, groups, coalitions, embs)
        phi = _solve_constrained(coalitions, weights, values - v_empty, delta)

    template = _map_parts_template(content, natural)
    arrays = write_group_scores(template, groups, phi)
    arrays = {k: v for k, v in arrays.items() if v is not None}
    return _finish_map(content.id, "kernel_shap", natural, arrays, model)


def _kernel_weight(m: int, size: int) -> float:
    from math import comb

    return (m - 1) / (comb(m, size) * size * (m - size))


def _draw_coalitions(m: int, n_samples: int, seed: int):
    total_proper = 2**m - 2
    if total_proper <= n_samples:
        coalitions = np.zeros((total_proper, m), dtype=bool)
        weights = np.empty(total_proper)
        row = 0
        for code in range(1, 2**m - 1):
            bits = [(code >> b) & 1 for b in range(m)]
            coalitions[row] = np.array(bits, dtype=bool)
            weights[row] = _kernel_weight(m, sum(bits))
            row += 1
        return coalitions, weights
    rng = rng_for(seed, "kernel-shap")
    sizes = np.arange(1, m)
    size_p = (m - 1) / (sizes * (m - sizes))
    size_p = size_p / size_p.sum()
    coalitions = np.zeros((n_samples, m), dtype=bool)
    for i in range(n_samples):
        size = int(rng.choice(sizes, p=size_p))
        members = rng.choice(m, size=size, replace=False)
        coalitions[i, members] = True
    return coalitions, np.ones(n_samples)


def _coalition_values(model, content, natural, base, groups, coalitions, embs) -> np.ndarray:
    """Batched coalition evaluation with per-modality deduplication.

    Late fusion means a coalition's embedding for one modality depends only on
    which of that modality's groups are off, so each distinct off-pattern is
    encoded once.
    """
    n = coalitions.shape[0]
    by_modality: dict[str, list[int]] = {}
    for idx, group in enumerate(groups):
        by_modality.setdefault(group.modality, []).append(idx)

    emb_rows: dict[str, np.ndarray] = {}
    for emb_name, vec in embs.items():
        emb_rows[emb_name] = np.broadcast_to(vec, (n, vec.shape[0])).copy()

    for modality, idxs in sorted(by_modality.items()):
        input_key = _INPUT_KEY[modality]
        patterns: dict[tuple, int] = {}
        row_pattern = np.empty(n, dtype=np.int64)
        stacked = []
        for row in range(n):
            off = tuple(i for i in idxs if not coalitions[row, i])
            slot = patterns.get(off)
            if slot is None:
                slot = len(stacked)
                patterns[off] = slot
                stacked.append(apply_off_groups(natural, base, [groups[i] for i in off])[input_key])
            row_pattern[row] = slot
        variant_embs = model.embed_modality_batch(input_key, np.stack(stacked))
        emb_rows[_EMB_NAME[modality]] = variant_embs[row_pattern]

    return model.head_pre_from_embeddings(emb_rows, n).astype(np.float64)


def _solve_constrained(coalitions, weights, y, delta) -> np.ndarray:
    """Weighted least squares with the efficiency constraint eliminated."""
    z = coalitions.astype(np.float64)
    m = z.shape[1]
    design = z[:, : m - 1] - z[:, m - 1 :]
    target = y - z[:, m - 1] * delta
    sw = np.sqrt(weights)
    a = design * sw[:, None]
    b = target * sw
    solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < m - 1:
        raise AttributionError(
            "singular regression system: sampled coalitions do not separate the groups; increase n_samples")
    phi = np.empty(m)
    phi[: m - 1] = solution
    phi[m - 1] = delta - solution.sum()
    return phi
