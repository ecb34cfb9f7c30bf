"""The two kernel backends must agree: bit-for-bit wherever the strict
accumulation order is promised, and to float64 tolerance elsewhere."""
import numpy as np
import pytest

from oracles import naive_conv2d, naive_matmul


def _random_conv_instance(dtype, seed=3):
    rng = np.random.default_rng(seed)
    xpad = rng.standard_normal((2, 3, 8, 7)).astype(dtype)
    w = rng.standard_normal((4, 3, 3, 3)).astype(dtype)
    bias = rng.standard_normal(4).astype(dtype)
    return xpad, w, bias


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_matmul_equals_naive_oracle(each_backend, dtype):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 13)).astype(dtype)
    b = rng.standard_normal((13, 5)).astype(dtype)
    assert np.array_equal(each_backend.matmul(a, b), naive_matmul(a, b))


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_matmul_rowinit_starts_from_init(each_backend, dtype):
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 9)).astype(dtype)
    b = rng.standard_normal((9, 6)).astype(dtype)
    init = rng.standard_normal(4).astype(dtype)
    got = each_backend.matmul_rowinit(a, b, init)
    expect = np.empty_like(got)
    for i in range(4):
        for j in range(6):
            acc = init[i]
            for p in range(9):
                acc = acc + a[i, p] * b[p, j]
            expect[i, j] = acc
    assert np.array_equal(got, expect)


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_conv_forward_equals_naive_oracle(each_backend, dtype):
    xpad, w, bias = _random_conv_instance(dtype)
    assert np.array_equal(each_backend.conv2d_forward(xpad, w, bias), naive_conv2d(xpad, w, bias))


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_forward_kernels_bitwise_identical_across_backends(compiled_and_numpy, dtype):
    compiled, fallback = compiled_and_numpy
    xpad, w, bias = _random_conv_instance(dtype, seed=8)
    assert np.array_equal(
        compiled.conv2d_forward(xpad, w, bias), fallback.conv2d_forward(xpad, w, bias)
    )
    rng = np.random.default_rng(9)
    a = rng.standard_normal((7, 21)).astype(dtype)
    b = rng.standard_normal((21, 11)).astype(dtype)
    assert np.array_equal(compiled.matmul(a, b), fallback.matmul(a, b))


def test_conv_backward_agrees_across_backends_to_tolerance(compiled_and_numpy):
    # backward has no fixed-order promise; the numpy side uses reassociating
    # BLAS contractions, so agreement is near machine epsilon, not bitwise
    compiled, fallback = compiled_and_numpy
    xpad, w, _ = _random_conv_instance(np.float64, seed=12)
    rng = np.random.default_rng(13)
    gy = rng.standard_normal((2, 4, 6, 5))
    gx1, gw1 = compiled.conv2d_backward(xpad, w, gy)
    gx2, gw2 = fallback.conv2d_backward(xpad, w, gy)
    np.testing.assert_allclose(gx1, gx2, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(gw1, gw2, rtol=1e-12, atol=1e-13)


def test_conv_backward_gradient_shapes(each_backend):
    xpad, w, _ = _random_conv_instance(np.float64)
    gy = np.ones((2, 4, 6, 5))
    gx, gw = each_backend.conv2d_backward(xpad, w, gy)
    assert gx.shape == xpad.shape
    assert gw.shape == w.shape
