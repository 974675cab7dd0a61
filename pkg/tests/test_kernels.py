import numpy as np
import pytest

from mofill import kernels as K
from oracles import (conv2d_direct, convtranspose2d_direct, maxpool_backward_direct,
                     maxpool_direct, numeric_grad)


def rng(seed=0):
    return np.random.default_rng(seed)


# conv2d ------------------------------------------------------------------------

def test_conv2d_all_ones_overlap_counts():
    out = K.conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    np.testing.assert_array_equal(out[0, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


def test_conv2d_delta_kernel_is_identity():
    x = rng().standard_normal((2, 1, 5, 7))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(K.conv2d_forward(x, w, np.zeros(1)), x)


@pytest.mark.parametrize("stride", [(1, 1), (2, 2), (1, 2)])
def test_conv2d_matches_direct_loops(stride):
    r = rng(1)
    x = r.standard_normal((2, 3, 5, 7))
    w = r.standard_normal((4, 3, 3, 3))
    b = r.standard_normal(4)
    np.testing.assert_allclose(K.conv2d_forward(x, w, b, stride), conv2d_direct(x, w, b, stride), atol=1e-6)


def test_conv2d_output_size_is_ceil():
    x = np.zeros((1, 2, 69, 240))
    w = np.zeros((3, 2, 3, 3))
    assert K.conv2d_forward(x, w, None, 2).shape == (1, 3, 35, 120)
    assert K.conv2d_forward(x, w, None, 1).shape == (1, 3, 69, 240)


def test_conv2d_channel_mismatch_names_both_shapes():
    with pytest.raises(K.ShapeError, match=r"\(1, 2, 4, 4\).*\(1, 3, 3, 3\)"):
        K.conv2d_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))


def test_conv2d_backward_zero_grad():
    r = rng(2)
    x = r.standard_normal((1, 2, 4, 5))
    w = r.standard_normal((3, 2, 3, 3))
    gx, gw, gb = K.conv2d_backward(np.zeros((1, 3, 4, 5)), x, w)
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv2d_backward_requires_cached_input():
    with pytest.raises(ValueError, match="cached"):
        K.conv2d_backward(np.zeros((1, 1, 4, 4)), None, np.zeros((1, 1, 3, 3)))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_backward_finite_differences(stride):
    r = rng(3)
    x = r.standard_normal((1, 1, 4, 4))
    w = r.standard_normal((2, 1, 3, 3))
    b = r.standard_normal(2)
    y = K.conv2d_forward(x, w, b, stride)
    g = r.standard_normal(y.shape)
    gx, gw, gb = K.conv2d_backward(g, x, w, stride)
    np.testing.assert_allclose(gx, numeric_grad(lambda v: np.sum(g * K.conv2d_forward(v, w, b, stride)), x.copy()),
                               rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(gw, numeric_grad(lambda v: np.sum(g * K.conv2d_forward(x, v, b, stride)), w.copy()),
                               rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(gb, numeric_grad(lambda v: np.sum(g * K.conv2d_forward(x, w, v, stride)), b.copy()),
                               rtol=1e-4, atol=1e-8)


def test_conv2d_backward_single_pixel_stamps_kernel():
    r = rng(4)
    x = r.standard_normal((1, 1, 6, 6))
    w = r.standard_normal((1, 1, 3, 3))
    g = np.zeros((1, 1, 6, 6))
    g[0, 0, 2, 3] = 1.0
    gx, _, _ = K.conv2d_backward(g, x, w)
    # brute force: d out[2,3] / d x[a,b]
    expected = np.zeros((6, 6))
    for a in range(6):
        for b in range(6):
            e = np.zeros_like(x)
            e[0, 0, a, b] = 1.0
            expected[a, b] = conv2d_direct(e, w)[0, 0, 2, 3]
    np.testing.assert_allclose(gx[0, 0], expected, atol=1e-12)
    # a true convolution of the delta with the flipped kernel puts w[i, j] at (2-1+i, 3-1+j)
    np.testing.assert_allclose(gx[0, 0, 1:4, 2:5], w[0, 0], atol=1e-12)


# transposed conv ---------------------------------------------------------------

@pytest.mark.parametrize("shape", [(5, 15), (9, 30), (69, 240), (4, 8), (3, 1)])
def test_convtranspose_is_adjoint_of_strided_conv(shape):
    r = rng(5)
    h, w = shape
    x = r.standard_normal((2, 3, h, w))
    wt = r.standard_normal((4, 3, 3, 3))
    cx = K.conv2d_forward(x, wt, None, 2)
    y = r.standard_normal(cx.shape)
    lhs = np.sum(cx * y)
    rhs = np.sum(x * K.convtranspose2d_forward(y, wt, None, (h, w), 2))
    assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))


def test_convtranspose_declared_target_shape():
    y = np.ones((1, 1, 3, 8))
    w = np.ones((1, 2, 3, 3))
    assert K.convtranspose2d_forward(y, w, np.zeros(2), (5, 15)).shape == (1, 2, 5, 15)


def test_convtranspose_rejects_incompatible_target():
    with pytest.raises(K.ShapeError, match="incompatible"):
        K.convtranspose2d_forward(np.ones((1, 1, 3, 8)), np.ones((1, 1, 3, 3)), None, (7, 15))


def test_convtranspose_matches_direct_loops():
    r = rng(6)
    y = r.standard_normal((2, 3, 3, 4))
    w = r.standard_normal((3, 2, 3, 3))
    b = r.standard_normal(2)
    for target in [(5, 7), (6, 8)]:
        np.testing.assert_allclose(K.convtranspose2d_forward(y, w, b, target),
                                   convtranspose2d_direct(y, w, b, target), atol=1e-6)


def test_convtranspose_backward_finite_differences():
    r = rng(7)
    y = r.standard_normal((1, 2, 3, 2))
    w = r.standard_normal((2, 3, 3, 3))
    b = r.standard_normal(3)
    target = (5, 4)
    out = K.convtranspose2d_forward(y, w, b, target)
    g = r.standard_normal(out.shape)
    gy, gw, gb = K.convtranspose2d_backward(g, y, w)
    f = lambda yy, ww, bb: np.sum(g * K.convtranspose2d_forward(yy, ww, bb, target))
    np.testing.assert_allclose(gy, numeric_grad(lambda v: f(v, w, b), y.copy()), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(gw, numeric_grad(lambda v: f(y, v, b), w.copy()), rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(gb, numeric_grad(lambda v: f(y, w, v), b.copy()), rtol=1e-4, atol=1e-8)


# max-pool ----------------------------------------------------------------------

def test_maxpool_ceil_shape():
    out, idx = K.maxpool2d_forward(np.zeros((1, 1, 69, 240)))
    assert out.shape == idx.shape == (1, 1, 35, 120)


def test_maxpool_constant_input_routes_to_first_element():
    x = np.full((1, 1, 4, 4), 3.0)
    out, idx = K.maxpool2d_forward(x)
    g = K.maxpool2d_backward(np.ones_like(out), idx, x.shape)
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1
    np.testing.assert_array_equal(g[0, 0], expected)


@pytest.mark.parametrize("shape", [(2, 3, 5, 7), (1, 2, 4, 6), (1, 1, 1, 1)])
def test_maxpool_matches_direct_scan(shape):
    r = rng(8)
    x = r.standard_normal(shape)
    out, idx = K.maxpool2d_forward(x)
    ref, ref_idx = maxpool_direct(x)
    np.testing.assert_array_equal(out, ref)
    np.testing.assert_array_equal(idx, ref_idx)
    g = r.standard_normal(out.shape)
    np.testing.assert_allclose(K.maxpool2d_backward(g, idx, x.shape), maxpool_backward_direct(g, x))


def test_maxpool_backward_conserves_mass():
    r = rng(9)
    x = r.standard_normal((2, 3, 9, 11))
    out, idx = K.maxpool2d_forward(x)
    g = r.standard_normal(out.shape)
    assert np.isclose(K.maxpool2d_backward(g, idx, x.shape).sum(), g.sum())


def test_maxpool_backward_rejects_inconsistent_index():
    out, idx = K.maxpool2d_forward(np.zeros((1, 1, 4, 4)))
    with pytest.raises(K.ShapeError):
        K.maxpool2d_backward(out, idx, (1, 1, 6, 6))


# activation and loss -------------------------------------------------------------

def test_leaky_relu_values():
    out = K.leaky_relu_forward(np.array([2.0, -2.0]), 0.2)
    np.testing.assert_allclose(out, [2.0, -0.4])


def test_leaky_relu_gradient():
    x = np.array([-1.5, -0.3, 0.7, 2.0])
    g = K.leaky_relu_backward(np.ones(4), x, 0.2)
    np.testing.assert_allclose(g, numeric_grad(lambda v: K.leaky_relu_forward(v, 0.2).sum(), x.copy()), rtol=1e-6)


def test_leaky_relu_rejects_bad_slope():
    with pytest.raises(ValueError):
        K.leaky_relu_forward(np.zeros(2), 1.5)


def test_l1_loss_values():
    a = rng(10).standard_normal((1, 1, 3, 4))
    assert K.l1_loss(a, a) == 0.0
    assert K.l1_loss(a + 0.5, a) == pytest.approx(0.5)
    b = rng(11).standard_normal(a.shape)
    assert K.l1_loss(a, b) == pytest.approx(sum(abs(p - q) for p, q in zip(a.ravel(), b.ravel())) / a.size)


def test_l1_loss_backward_is_sign_over_count():
    a = np.array([[[[1.0, -2.0], [0.5, 3.0]]]])
    b = np.zeros_like(a)
    np.testing.assert_allclose(K.l1_loss_backward(a, b), np.sign(a) / 4)


def test_l1_loss_shape_mismatch():
    with pytest.raises(K.ShapeError):
        K.l1_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


# finite-difference helper --------------------------------------------------------

def test_fd_check_linear_op_is_exact():
    a = rng(12).standard_normal(20)
    err = K.finite_difference_check(lambda x: (float(a @ x), a.copy()), rng(13).standard_normal(20), eps=1e-5)
    assert err < 1e-7


def test_fd_check_leaky_relu_away_from_kink():
    x = rng(14).uniform(0.2, 1.0, 30) * rng(15).choice([-1, 1], 30)
    err = K.finite_difference_check(
        lambda v: (float(K.leaky_relu_forward(v, 0.2).sum()), K.leaky_relu_backward(np.ones_like(v), v, 0.2)), x)
    assert err < 1e-6


def test_fd_check_two_conv_stack():
    r = rng(16)
    w1, w2 = r.standard_normal((3, 1, 3, 3)), r.standard_normal((2, 3, 3, 3))
    g = r.standard_normal((1, 2, 5, 6))

    def f(x):
        h = K.conv2d_forward(x, w1)
        a = K.leaky_relu_forward(h, 0.2)
        y = K.conv2d_forward(a, w2)
        ga, _, _ = K.conv2d_backward(g, a, w2)
        gx, _, _ = K.conv2d_backward(K.leaky_relu_backward(ga, h, 0.2), x, w1)
        return float(np.sum(g * y)), gx

    assert K.finite_difference_check(f, r.standard_normal((1, 1, 5, 6))) < 1e-4


def test_fd_check_rejects_bad_epsilon_and_precision():
    f = lambda x: (float(x.sum()), np.ones_like(x))
    with pytest.raises(ValueError):
        K.finite_difference_check(f, np.zeros(3), eps=0.0)
    with pytest.raises(TypeError):
        K.finite_difference_check(f, np.zeros(3, dtype=np.float32))


def test_kernels_are_deterministic():
    r = rng(17)
    x = r.standard_normal((2, 3, 9, 10)).astype(np.float32)
    w = r.standard_normal((4, 3, 3, 3)).astype(np.float32)
    a = K.conv2d_forward(x, w, None, 2)
    b = K.conv2d_forward(x.copy(), w.copy(), None, 2)
    assert a.tobytes() == b.tobytes()
    assert K.is_finite(a)
