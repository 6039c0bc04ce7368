"""Central finite differences: the independent oracle for backward()."""

from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError


def finite_diff_grad(f, x, h: float = 1e-3) -> np.ndarray:
    """Estimate df/dx elementwise as (f(x+h*e_i) - f(x-h*e_i)) / (2h).

    ``f`` maps an ndarray shaped like ``x`` to a python float. Evaluations
    happen on copies, so ``f`` may not mutate its argument persistently.
    """
    if h <= 0:
        raise ValueError("finite_diff_grad needs h > 0")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for i in range(x.size):
        up = x.copy()
        up.reshape(-1)[i] += h
        down = x.copy()
        down.reshape(-1)[i] -= h
        fp = float(f(up))
        fm = float(f(down))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError("function evaluated to a non-finite value during finite differences")
        flat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(got, want, floor: float = 1e-6) -> float:
    """Max over coordinates of |got-want| / max(|got|, |want|, floor)."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(got), np.abs(want)), floor)
    return float((np.abs(got - want) / denom).max()) if got.size else 0.0
