import numpy as np
import pytest

from forgekit.errors import DimensionError
from forgekit.nn import (conv2d, conv2d_backward, silu, silu_grad,
                         transpose_conv2d, transpose_conv2d_backward)

from conftest import finite_diff_grad, max_rel_error


def conv_loop_oracle(x, w, stride, padding):
    """Naive quadruple-loop cross-correlation for one sample."""
    b, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    y = np.zeros((b, f, ho, wo))
    for n in range(b):
        for ff in range(f):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for cc in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[ff, cc, u, v] * xp[n, cc, i * stride + u, j * stride + v]
                    y[n, ff, i, j] = acc
    return y


class TestConv2d:
    def test_identity_1x1_kernel(self, rng):
        x = rng.random((2, 3, 5, 5))
        w = np.eye(3).reshape(3, 3, 1, 1)
        assert np.array_equal(conv2d(x, w), x)

    def test_all_ones_3x3_sums_to_nine(self):
        x = np.ones((1, 1, 3, 3))
        w = np.ones((1, 1, 3, 3))
        y = conv2d(x, w)
        assert y.shape == (1, 1, 1, 1)
        assert y[0, 0, 0, 0] == 9.0

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_matches_loop_oracle(self, rng, stride, padding):
        x = rng.random((2, 3, 5, 5))
        w = rng.random((4, 3, 3, 3))
        got = conv2d(x, w, stride=stride, padding=padding)
        want = conv_loop_oracle(x, w, stride, padding)
        assert got.shape == want.shape
        assert np.max(np.abs(got - want)) < 1e-12

    def test_output_size_formula(self, rng):
        x = rng.random((1, 2, 11, 11))
        w = rng.random((3, 2, 4, 4))
        y = conv2d(x, w, stride=3, padding=2)
        assert y.shape[2] == (11 + 4 - 4) // 3 + 1

    def test_channel_mismatch_raises(self, rng):
        with pytest.raises(DimensionError):
            conv2d(rng.random((1, 2, 5, 5)), rng.random((3, 4, 3, 3)))

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1)])
    def test_backward_matches_fd(self, rng, stride, padding):
        x = rng.random((2, 2, 6, 6))
        w = rng.random((3, 2, 3, 3))
        b = rng.random(3)
        cot = rng.random(conv2d(x, w, b, stride, padding).shape)

        def loss_x(xv):
            return float(np.sum(conv2d(xv, w, b, stride, padding) * cot))

        def loss_w(wv):
            return float(np.sum(conv2d(x, wv, b, stride, padding) * cot))

        dx, dw, db = conv2d_backward(x, w, cot, stride, padding)
        assert max_rel_error(dx, finite_diff_grad(loss_x, x)) < 1e-4
        assert max_rel_error(dw, finite_diff_grad(loss_w, w)) < 1e-4
        assert np.allclose(db, cot.sum(axis=(0, 2, 3)))


class TestTransposeConv2d:
    def test_doubles_spatial_dims(self, rng):
        x = rng.random((1, 4, 6, 6))
        w = rng.random((4, 2, 4, 4))
        y = transpose_conv2d(x, w, stride=2, padding=1)
        assert y.shape == (1, 2, 12, 12)

    def test_delta_input_stamps_kernel(self, rng):
        w = rng.random((1, 1, 3, 3))
        x = np.zeros((1, 1, 4, 4))
        x[0, 0, 1, 2] = 1.0
        y = transpose_conv2d(x, w, stride=2, padding=0)
        assert np.array_equal(y[0, 0, 2:5, 4:7], w[0, 0])
        y[0, 0, 2:5, 4:7] = 0.0
        assert np.all(y == 0.0)

    @pytest.mark.parametrize("stride,padding,k", [(2, 1, 4), (2, 0, 2), (1, 1, 3)])
    def test_adjoint_of_conv(self, rng, stride, padding, k):
        # <conv(x), y> == <x, tconv(y)> with a shared kernel
        x = rng.random((2, 3, 8, 8))
        w = rng.random((5, 3, k, k))
        cx = conv2d(x, w, stride=stride, padding=padding)
        y = rng.random(cx.shape)
        ty = transpose_conv2d(y, w, stride=stride, padding=padding)
        assert ty.shape == x.shape
        lhs = float(np.sum(cx * y))
        rhs = float(np.sum(x * ty))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_backward_matches_fd(self, rng):
        x = rng.random((1, 3, 4, 4))
        w = rng.random((3, 2, 4, 4))
        b = rng.random(2)
        cot = rng.random(transpose_conv2d(x, w, b, 2, 1).shape)

        def loss_x(xv):
            return float(np.sum(transpose_conv2d(xv, w, b, 2, 1) * cot))

        def loss_w(wv):
            return float(np.sum(transpose_conv2d(x, wv, b, 2, 1) * cot))

        dx, dw, db = transpose_conv2d_backward(x, w, cot, 2, 1)
        assert max_rel_error(dx, finite_diff_grad(loss_x, x)) < 1e-4
        assert max_rel_error(dw, finite_diff_grad(loss_w, w)) < 1e-4
        assert np.allclose(db, cot.sum(axis=(0, 2, 3)))


class TestSilu:
    def test_gradient_matches_fd(self, rng):
        x = rng.standard_normal((4, 4)) * 3
        fd = finite_diff_grad(lambda v: float(np.sum(silu(v))), x)
        assert max_rel_error(silu_grad(x), fd) < 1e-6

    def test_extremes_stable(self):
        x = np.array([-800.0, -40.0, 0.0, 40.0, 800.0])
        y = silu(x)
        assert np.all(np.isfinite(y))
        assert y[0] == 0.0
        assert y[-1] == 800.0
