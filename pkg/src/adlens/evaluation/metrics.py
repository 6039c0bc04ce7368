"""Correlation, pairwise ordering accuracy, and the trust score."""

from __future__ import annotations

import numpy as np


class EvalError(ValueError):
    pass


class ConstantInputError(EvalError):
    """A correlation over a constant series is undefined (not a data bug)."""


def pearson(xs, ys) -> float:
    """Sample correlation: covariance over the product of standard deviations."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise EvalError(f"paired samples required, got shapes {xs.shape} and {ys.shape}")
    if xs.size < 2:
        raise EvalError(f"correlation needs at least 2 samples, got {xs.size}")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise ConstantInputError("correlation undefined: a series is constant")
    return float(np.clip((dx * dy).sum() / (sx * sy), -1.0, 1.0))


def _sign(x: float) -> float:
    # ties count as agreement, matching the documented sign(0) = +1 rule
    return 1.0 if x >= 0 else -1.0


def pairwise_accuracy(predictions, truths, pairs=None) -> float:
    """Fraction of pairs whose predicted ordering matches the observed one.

    ``pairs`` holds index tuples (control-vs-best-treatment protocol); without
    it every distinct index pair is compared.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape:
        raise EvalError("predictions and truths must align")
    if pairs is None:
        n = predictions.size
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    pairs = list(pairs)
    if not pairs:
        raise EvalError("no comparable pairs")
    hits = 0
    for i, j in pairs:
        if np.sign(predictions[i] - predictions[j]) == np.sign(truths[i] - truths[j]):
            hits += 1
    return hits / len(pairs)


def trust_score(rho: float) -> float:
    """Clamp of the insight correlation: negative correlation earns no trust."""
    if not -1.0 <= rho <= 1.0:
        raise EvalError(f"correlation {rho} outside [-1, 1]")
    return max(float(rho), 0.0)
