import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incepkit.errors import ShapeError
from incepkit.ops import (
    ConvSpec,
    conv2d_backward,
    conv2d_direct,
    conv2d_forward,
    finite_difference_gradient,
    output_size,
    pad_amounts,
    relative_error,
)


def test_padding_arithmetic_exhaustive():
    for h in range(1, 65):
        for k in range(1, 8):
            for s in range(1, 4):
                assert output_size(h, k, s, "same") == math.ceil(h / s)
                before, after = pad_amounts(h, k, s, "same")
                total = max((math.ceil(h / s) - 1) * s + k - h, 0)
                assert (before, after) == (total // 2, total - total // 2)
                if h >= k:
                    assert output_size(h, k, s, "valid") == (h - k) // s + 1
                else:
                    with pytest.raises(ShapeError):
                        output_size(h, k, s, "valid")


def test_stem_grid_examples():
    assert output_size(299, 3, 2, "valid") == 149
    assert output_size(35, 3, 1, "same") == 35


def test_one_by_one_affine():
    spec = ConvSpec(1, 1, out_channels=1)
    y = conv2d_forward(np.array([[[[3.0]]]]), np.full((1, 1, 1, 1), 2.0), np.array([0.5]), spec)
    assert y.item() == 2 * 3.0 + 0.5


def _random_case(rng, relu=None):
    kh, kw = rng.integers(1, 6, size=2)
    sh, sw = rng.integers(1, 4, size=2)
    padding = rng.choice(["same", "valid"])
    h = int(rng.integers(kh if padding == "valid" else 1, 10))
    w = int(rng.integers(kw if padding == "valid" else 1, 10))
    cin, cout, n = (int(v) for v in rng.integers(1, 5, size=3))
    act = rng.choice(["none", "relu"]) if relu is None else relu
    spec = ConvSpec(int(kh), int(kw), int(sh), int(sw), str(padding), cout, str(act))
    x = rng.standard_normal((n, h, w, cin))
    wts = rng.standard_normal((kh, kw, cin, cout))
    b = rng.standard_normal(cout)
    return x, wts, b, spec


def test_im2col_matches_direct_over_many_shapes():
    rng = np.random.default_rng(7)
    for _ in range(220):
        x, w, b, spec = _random_case(rng)
        fast = conv2d_forward(x, w, b, spec)
        ref = conv2d_direct(x, w, b, spec)
        assert fast.shape == ref.shape
        assert np.max(np.abs(fast - ref)) <= 1e-12


def test_direct_example_2x7x7x3():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 7, 7, 3))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    spec = ConvSpec(3, 3, out_channels=4)
    assert np.max(np.abs(conv2d_forward(x, w, b, spec) - conv2d_direct(x, w, b, spec))) <= 1e-12


def test_backward_zero_grad():
    rng = np.random.default_rng(1)
    x, w, b, spec = _random_case(rng, relu="none")
    y = conv2d_forward(x, w, b, spec)
    for g in conv2d_backward(np.zeros_like(y), x, w, spec):
        assert not np.any(g)


def test_backward_single_pixel_outer_product():
    x = np.array([1.0, -2.0, 0.5]).reshape(1, 1, 1, 3)
    w = np.ones((1, 1, 3, 2))
    g = np.array([0.3, -4.0]).reshape(1, 1, 1, 2)
    _, gw, gb = conv2d_backward(g, x, w, ConvSpec(1, 1, out_channels=2))
    np.testing.assert_allclose(gw[0, 0], np.outer(x.ravel(), g.ravel()))
    np.testing.assert_allclose(gb, g.ravel())


def test_backward_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(25):
        x, w, b, spec = _random_case(rng, relu="none")
        probe = rng.standard_normal(conv2d_forward(x, w, b, spec).shape)
        loss = lambda *_: float(np.sum(probe * conv2d_forward(x, w, b, spec)))
        gx, gw, gb = conv2d_backward(probe, x, w, spec)
        for analytic, arr in ((gx, x), (gw, w), (gb, b)):
            assert relative_error(analytic, finite_difference_gradient(loss, arr)) <= 1e-4


def test_backward_shape_mismatch():
    x = np.zeros((1, 5, 5, 2))
    with pytest.raises(ShapeError):
        conv2d_backward(np.zeros((1, 4, 4, 3)), x, np.zeros((3, 3, 2, 3)), ConvSpec(3, 3, out_channels=3))


@pytest.mark.parametrize("shape, wshape, spec", [
    ((1, 5, 5, 2), (3, 3, 3, 4), ConvSpec(3, 3, out_channels=4)),
    ((1, 2, 2, 3), (3, 3, 3, 4), ConvSpec(3, 3, padding="valid", out_channels=4)),
])
def test_forward_errors(shape, wshape, spec):
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros(shape), np.zeros(wshape), np.zeros(wshape[-1]), spec)


def test_spec_rejects_nonpositive():
    with pytest.raises(ShapeError):
        ConvSpec(0, 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_forward_is_deterministic(seed):
    x, w, b, spec = _random_case(np.random.default_rng(seed))
    assert np.array_equal(conv2d_forward(x, w, b, spec), conv2d_forward(x.copy(), w.copy(), b.copy(), spec))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_forward_is_linear_in_input(seed):
    x, w, b, spec = _random_case(np.random.default_rng(seed), relu="none")
    x2 = np.random.default_rng(seed + 1).standard_normal(x.shape)
    zero = np.zeros_like(b)
    lhs = conv2d_forward(x + x2, w, zero, spec)
    rhs = conv2d_forward(x, w, zero, spec) + conv2d_forward(x2, w, zero, spec)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
