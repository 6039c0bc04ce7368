"""Hot numeric kernels, each with a numba-compiled and a pure-numpy implementation.

The numba path is the default whenever numba imports cleanly. Setting the
environment variable ``ADLENS_NO_NUMBA=1`` (checked once, at import) forces the
numpy fallback for every kernel. Both implementations of a kernel agree up to
float rounding; ``benchmarks/bench_kernels.py`` times them against each other.

Convolutions are expressed as im2col + BLAS matmul, so the kernels here are the
gather/scatter halves (the part where plain numpy either copies too much or,
for the scatter, would need the very slow ``np.add.at``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = NUMBA_AVAILABLE and not _env_flag("ADLENS_NO_NUMBA")


# ---------------------------------------------------------------------------
# im2col / col2im


def im2col_numpy(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Unfold padded images (N,C,Hp,Wp) into columns (N, C*kh*kw, Ho*Wo)."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, c * kh * kw, ho * wo)


@njit(cache=True)
def im2col_numba(xp, kh, kw, stride):  # pragma: no cover - exercised via dispatch
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((n, c * kh * kw, ho * wo), dtype=xp.dtype)
    for b in range(n):
        for cc in range(c):
            for u in range(kh):
                for v in range(kw):
                    row = (cc * kh + u) * kw + v
                    for i in range(ho):
                        base = i * wo
                        for j in range(wo):
                            cols[b, row, base + j] = xp[b, cc, i * stride + u, j * stride + v]
    return cols


def col2im_numpy(cols: np.ndarray, xp_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    """Scatter-add columns back into padded image gradients.

    For a fixed kernel offset (u, v) the destination windows never overlap, so
    the accumulation is kh*kw strided adds instead of np.add.at.
    """
    n, c, hp, wp = xp_shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros(xp_shape, dtype=cols.dtype)
    grid = cols.reshape(n, c, kh, kw, ho, wo)
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + ho * stride : stride, v : v + wo * stride : stride] += grid[:, :, u, v]
    return out


@njit(cache=True)
def col2im_numba(cols, n, c, hp, wp, kh, kw, stride):  # pragma: no cover
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for b in range(n):
        for cc in range(c):
            for u in range(kh):
                for v in range(kw):
                    row = (cc * kh + u) * kw + v
                    for i in range(ho):
                        base = i * wo
                        for j in range(wo):
                            out[b, cc, i * stride + u, j * stride + v] += cols[b, row, base + j]
    return out


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # the gather is a pure strided copy; numpy's memcpy beats the jitted loop
    # by ~3x here (see benchmarks/bench_kernels.py), so numpy serves both paths
    return im2col_numpy(xp, kh, kw, stride)


def col2im(cols: np.ndarray, xp_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    if USE_NUMBA:
        n, c, hp, wp = xp_shape
        return col2im_numba(cols, n, c, hp, wp, kh, kw, stride)
    return col2im_numpy(cols, xp_shape, kh, kw, stride)


# ---------------------------------------------------------------------------
# k-means assignment


def kmeans_assign_numpy(points: np.ndarray, centers: np.ndarray):
    """Nearest-center assignment. Returns (labels, squared distances)."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


@njit(cache=True)
def kmeans_assign_numba(points, centers):  # pragma: no cover
    n, d = points.shape
    k = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=points.dtype)
    for i in range(n):
        best = 0
        best_d = np.inf
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = points[i, t] - centers[j, t]
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best = j
        labels[i] = best
        dists[i] = best_d
    return labels, dists


def kmeans_assign(points: np.ndarray, centers: np.ndarray):
    if USE_NUMBA:
        return kmeans_assign_numba(points, centers)
    return kmeans_assign_numpy(points, centers)


# ---------------------------------------------------------------------------
# sliding-window sums (patch scoring)


def window_sums_numpy(values: np.ndarray, size: int) -> np.ndarray:
    """Sum of every size x size window of a 2-D map, windows fully inside."""
    windows = np.lib.stride_tricks.sliding_window_view(values, (size, size))
    return windows.sum(axis=(2, 3))


@njit(cache=True)
def window_sums_numba(values, size):  # pragma: no cover
    h, w = values.shape
    ho = h - size + 1
    wo = w - size + 1
    out = np.empty((ho, wo), dtype=values.dtype)
    for i in range(ho):
        for j in range(wo):
            acc = 0.0
            for u in range(size):
                for v in range(size):
                    acc += values[i + u, j + v]
            out[i, j] = acc
    return out


def window_sums(values: np.ndarray, size: int) -> np.ndarray:
    if USE_NUMBA:
        return window_sums_numba(values, size)
    return window_sums_numpy(values, size)


BACKEND = "numba" if USE_NUMBA else "numpy"
