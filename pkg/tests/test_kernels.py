"""Both kernel backends must agree up to float rounding."""

import numpy as np
import pytest

from adlens import kernels


@pytest.mark.parametrize("stride,k", [(1, 3), (2, 3), (1, 1), (2, 1)])
def test_im2col_backends_agree(stride, k):
    rng = np.random.default_rng(0)
    xp = rng.standard_normal((2, 3, 9, 8)).astype(np.float32)
    a = kernels.im2col_numpy(xp, k, k, stride)
    b = kernels.im2col_numba(xp, k, k, stride)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("stride", [1, 2])
def test_col2im_backends_agree(stride):
    rng = np.random.default_rng(1)
    xp_shape = (2, 3, 9, 9)
    k = 3
    ho = (9 - k) // stride + 1
    cols = rng.standard_normal((2, 3 * k * k, ho * ho)).astype(np.float64)
    a = kernels.col2im_numpy(cols, xp_shape, k, k, stride)
    b = kernels.col2im_numba(cols, *xp_shape, k, k, stride)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_col2im_is_adjoint_of_im2col():
    # <im2col(x), c> == <x, col2im(c)> characterizes the scatter exactly
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 6, 6))
    cols = kernels.im2col_numpy(x, 3, 3, 1)
    c = rng.standard_normal(cols.shape)
    lhs = float((cols * c).sum())
    rhs = float((x * kernels.col2im_numpy(c, x.shape, 3, 3, 1)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_kmeans_assign_backends_agree():
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((50, 4))
    centers = rng.standard_normal((5, 4))
    la, da = kernels.kmeans_assign_numpy(pts, centers)
    lb, db = kernels.kmeans_assign_numba(pts, centers)
    np.testing.assert_array_equal(la, lb)
    np.testing.assert_allclose(da, db, rtol=1e-9)


def test_window_sums_backends_agree():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((17, 13))
    a = kernels.window_sums_numpy(m, 4)
    b = kernels.window_sums_numba(m, 4)
    assert a.shape == (14, 10)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_dispatch_uses_configured_backend():
    assert kernels.BACKEND in ("numba", "numpy")
    xp = np.ones((1, 1, 4, 4), dtype=np.float32)
    out = kernels.im2col(xp, 2, 2, 1)
    assert out.shape == (1, 4, 9)
