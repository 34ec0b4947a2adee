"""Parity between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from gcl._kernels import load_backend

numpy_backend = load_backend("numpy")
try:
    native = load_backend("native")
except ImportError:
    native = None

needs_native = pytest.mark.skipif(native is None, reason="extension not built")


def _rand(rng, *shape):
    return np.ascontiguousarray(rng.standard_normal(shape))


@needs_native
@pytest.mark.parametrize("act", [0, 1, 2])
@pytest.mark.parametrize("rows,inner,cols", [(1, 1, 1), (5, 7, 3), (64, 32, 16)])
def test_dense_forward_parity(act, rows, inner, cols):
    rng = np.random.default_rng(rows * 1000 + inner * 10 + cols + act)
    x, w = _rand(rng, rows, inner), _rand(rng, inner, cols)
    b = np.ascontiguousarray(rng.standard_normal(cols))
    a = native.dense_forward(x, w, b, act)
    e = numpy_backend.dense_forward(x, w, b, act)
    np.testing.assert_allclose(a, e, rtol=1e-12, atol=1e-14)


@needs_native
@pytest.mark.parametrize("act", [0, 1, 2])
@pytest.mark.parametrize("need_dx", [True, False])
def test_dense_backward_parity(act, need_dx):
    rng = np.random.default_rng(42 + act)
    x, w = _rand(rng, 9, 6), _rand(rng, 6, 4)
    b = np.ascontiguousarray(rng.standard_normal(4))
    a = numpy_backend.dense_forward(x, w, b, act)
    da = _rand(rng, 9, 4)
    got = native.dense_backward(da, x, w, a, act, need_dx)
    want = numpy_backend.dense_backward(da, x, w, a, act, need_dx)
    if need_dx:
        np.testing.assert_allclose(got[0], want[0], rtol=1e-12, atol=1e-14)
    else:
        assert got[0] is None and want[0] is None
    np.testing.assert_allclose(got[1], want[1], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(got[2], want[2], rtol=1e-11, atol=1e-13)


@needs_native
def test_rmsprop_update_parity():
    rng = np.random.default_rng(3)
    p1 = _rand(rng, 4, 5)
    p2 = p1.copy()
    sq1, mom1 = np.zeros_like(p1), np.zeros_like(p1)
    sq2, mom2 = np.zeros_like(p1), np.zeros_like(p1)
    for _ in range(25):
        g = _rand(rng, 4, 5)
        native.rmsprop_update(p1, g, sq1, mom1, 0.01, 0.6, 0.99, 1e-8)
        numpy_backend.rmsprop_update(p2, g, sq2, mom2, 0.01, 0.6, 0.99, 1e-8)
    np.testing.assert_allclose(p1, p2, rtol=1e-12)
    np.testing.assert_allclose(sq1, sq2, rtol=1e-12)
    np.testing.assert_allclose(mom1, mom2, rtol=1e-12)


@needs_native
def test_row_l2_parity():
    rng = np.random.default_rng(8)
    x, t = _rand(rng, 32, 17), _rand(rng, 32, 17)
    np.testing.assert_allclose(
        native.row_l2(x, t), numpy_backend.row_l2(x, t), rtol=1e-12
    )


def test_unknown_backend_rejected():
    with pytest.raises(ValueError, match="unknown backend"):
        load_backend("cuda")
