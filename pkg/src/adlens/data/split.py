"""Deterministic train/val/test splitting with held-out domains.

Experiment groups (control plus treatments) always land in the same split so
evaluation pairs stay intact; items outside any experiment are their own unit.
Held-out domains go entirely to the out-of-domain test split; the remaining
units fill train/val/in-domain-test toward exact target counts.
"""

from __future__ import annotations

from ..util import rng_for
from .types import DataError, Dataset

_LABELS = ("train", "val", "test_in")


def split_dataset(dataset: Dataset, ratios=(0.5, 0.1, 0.4), held_out_domains=(), seed: int = 0) -> Dataset:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    held = set(held_out_domains)
    unknown = held - set(dataset.domains)
    if unknown:
        raise DataError(f"held-out domains not present in dataset: {sorted(unknown)}")

    grouped: dict[str, list[str]] = {}
    for pair in dataset.pairs:
        members = [pair.control, *pair.treatments]
        root = members[0]
        grouped.setdefault(root, [])
        for member in members:
            grouped[root].append(member)
    in_group = {cid for members in grouped.values() for cid in members}
    units = [sorted(set(members)) for _, members in sorted(grouped.items())]
    units.extend([[cid] for cid in dataset.ids() if cid not in in_group])

    labels: dict[str, str] = {}
    remaining_units = []
    for unit in units:
        domains = {dataset.contents[cid].domain for cid in unit}
        if domains & held:
            for cid in unit:
                labels[cid] = "test_out"
        else:
            remaining_units.append(unit)

    n_remaining = sum(len(u) for u in remaining_units)
    if ratios[0] > 0 and n_remaining == 0:
        raise DataError("held-out domains cover every item; nothing left to train on")

    targets = _integer_targets(n_remaining, ratios)
    order = rng_for(seed, "split").permutation(len(remaining_units))
    assigned = [0, 0, 0]
    for uidx in order:
        unit = remaining_units[int(uidx)]
        deficits = [targets[i] - assigned[i] for i in range(3)]
        pick = max(range(3), key=lambda i: (deficits[i], -i))
        for cid in unit:
            labels[cid] = _LABELS[pick]
        assigned[pick] += len(unit)

    return dataset.with_splits(labels)


def _integer_targets(n: int, ratios) -> list[int]:
    raw = [n * r for r in ratios]
    floors = [int(x) for x in raw]
    shortfall = n - sum(floors)
    order = sorted(range(3), key=lambda i: (floors[i] - raw[i], i))
    for i in order[:shortfall]:
        floors[i] += 1
    return floors
