"""Salient image patches: greedy NMS extraction, k-means grouping with an
elbow rule, and diversity-preserving recommendation sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from ..data.types import DataError
from ..util import rng_for


@dataclass(frozen=True)
class Patch:
    source_id: str
    row: int
    col: int
    size: int
    score: float
    embedding: np.ndarray | None = None
    cluster: int | None = None


def square_iou(r1: int, c1: int, r2: int, c2: int, size: int) -> float:
    inter = max(0, size - abs(r1 - r2)) * max(0, size - abs(c1 - c2))
    return inter / (2 * size * size - inter)


def extract_patches(attr_map: np.ndarray, k: int, patch_size: int,
                    overlap_threshold: float = 0.3, source_id: str = "") -> list[Patch]:
    """Greedy top-scoring windows with non-maximum suppression.

    Window score is the summed attribution inside it; ties break toward the
    smallest (row, col). Exact-zero windows carry no evidence and are never
    returned, which is what keeps a single spike from dragging in its flat
    neighborhood.
    """
    h, w = attr_map.shape
    if patch_size > min(h, w):
        raise DataError(f"patch size {patch_size} exceeds map dims {attr_map.shape}")
    if not (0.0 <= overlap_threshold < 1.0):
        raise DataError("overlap threshold must lie in [0, 1)")
    scores = kernels.window_sums(attr_map.astype(np.float64), patch_size)
    alive = scores != 0.0
    chosen: list[Patch] = []
    rows, cols = scores.shape
    while len(chosen) < k and alive.any():
        masked = np.where(alive, scores, -np.inf)
        flat = int(np.argmax(masked))  # first occurrence = smallest (row, col)
        r, c = divmod(flat, cols)
        chosen.append(Patch(source_id=source_id, row=int(r), col=int(c),
                            size=patch_size, score=float(scores[r, c])))
        for rr in range(max(0, r - patch_size + 1), min(rows, r + patch_size)):
            for cc in range(max(0, c - patch_size + 1), min(cols, c + patch_size)):
                if alive[rr, cc] and square_iou(r, c, rr, cc, patch_size) > overlap_threshold:
                    alive[rr, cc] = False
    return chosen


# ---------------------------------------------------------------------------
# k-means with elbow selection


def _kmeans_once(points: np.ndarray, k: int, rng, max_iter: int = 100, tol: float = 1e-4):
    """One k-means++ / Lloyd run; returns (labels, centers, inertia, history)."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(n))]
    for j in range(1, k):
        _, d2 = kernels.kmeans_assign(points, centers[:j])
        total = d2.sum()
        if total <= 0:
            centers[j] = points[int(rng.integers(n))]
        else:
            centers[j] = points[int(rng.choice(n, p=d2 / total))]
    prev = np.inf
    labels = np.zeros(n, dtype=np.int64)
    history = []
    for _ in range(max_iter):
        labels, d2 = kernels.kmeans_assign(points, centers)
        inertia = float(d2.sum())
        history.append(inertia)
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
        if prev - inertia <= tol * max(prev, 1e-12):
            break
        prev = inertia
    labels, d2 = kernels.kmeans_assign(points, centers)
    history.append(float(d2.sum()))
    return labels, centers, float(d2.sum()), history


def cluster_patches(embeddings: np.ndarray, k_range=(2, 8), seed: int = 0,
                    max_iter: int = 100, tol: float = 1e-4):
    """Pick k by the elbow rule and return (labels, chosen_k, inertia per k).

    The elbow: the reduction from moving one below the range's smallest k sets
    the yardstick; the first k whose marginal inertia reduction drops under
    10% of it ends the scan, and the k just before it wins.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    k_min, k_max = k_range
    if k_min < 1 or k_max < k_min:
        raise DataError(f"bad cluster range {k_range}")
    if points.shape[0] < k_min:
        raise DataError(f"{points.shape[0]} patches cannot fill {k_min} clusters")
    k_max = min(k_max, points.shape[0])

    first = max(k_min - 1, 1)
    results = {}
    for k in range(first, k_max + 1):
        results[k] = _kmeans_once(points, k, rng_for(seed, "kmeans", k), max_iter, tol)
    inertia = {k: results[k][2] for k in results}

    chosen = k_max
    if k_max > first:
        baseline = inertia[first] - inertia[first + 1]
        if baseline <= 1e-12:
            chosen = k_min
        else:
            for k in range(first + 2, k_max + 1):
                reduction = inertia[k - 1] - inertia[k]
                if reduction < 0.1 * baseline:
                    chosen = k - 1
                    break
    chosen = max(chosen, k_min)
    labels = results[chosen][0]
    return labels, chosen, inertia


def attach_clusters(patches, labels) -> list:
    return [replace(p, cluster=int(c)) for p, c in zip(patches, labels)]


def rank_clusters(patches) -> list:
    """Cluster ids sorted by mean member attribution, best first."""
    sums: dict = {}
    counts: dict = {}
    for p in patches:
        if p.cluster is None:
            raise DataError("patches must be clustered before ranking")
        sums[p.cluster] = sums.get(p.cluster, 0.0) + p.score
        counts[p.cluster] = counts.get(p.cluster, 0) + 1
    means = {c: sums[c] / counts[c] for c in sums}
    return sorted(means, key=lambda c: (-means[c], c)), means


def recommend_patches(patches, n: int, seed: int = 0, top: int = 10) -> dict:
    """Equal round-robin samples from the best- and worst-ranked clusters."""
    if not patches:
        raise DataError("no patches to recommend from")
    order, means = rank_clusters(patches)
    positive_clusters = order[:top]
    negative_clusters = list(reversed(order))[:top]
    rng = rng_for(seed, "patch-recommend")

    def draw(cluster_ids):
        pools = {}
        for c in cluster_ids:
            members = [p for p in patches if p.cluster == c]
            idx = rng.permutation(len(members))
            pools[c] = [members[int(i)] for i in idx]
        out = []
        while len(out) < n and any(pools[c] for c in cluster_ids):
            for c in cluster_ids:
                if pools[c] and len(out) < n:
                    out.append(pools[c].pop())
        return out

    return {
        "positive": draw(positive_clusters),
        "negative": draw(negative_clusters),
        "cluster_scores": means,
        "low_diversity": len(positive_clusters) == 1,
    }
