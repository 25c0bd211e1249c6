"""Engine convolutions vs the naive direct-loop oracle, single and double
precision, over a small exhaustive grid."""

import itertools

import numpy as np
import pytest

from oracles import conv2d_naive, conv_transpose2d_naive
from simvp.engine import ConvSpec, Tensor, conv2d, conv_transpose2d
from simvp.errors import ConfigurationError

GRID = [
    (H, k, s, g, p)
    for H, k, s, g in itertools.product((5, 8), (1, 3, 5), (1, 2), (1, 2))
    for p in sorted({0, k // 2})
    if k <= H
]


def _tensors(rng, shapes, dtype):
    return [Tensor(rng.standard_normal(s).astype(dtype), dtype=dtype) for s in shapes]


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
def test_conv2d_matches_naive_grid(dtype, tol, rng):
    for H, k, s, g, p in GRID:
        ci, co = 2 * g, 4
        spec = ConvSpec(ci, co, (k, k), (s, s), (p, p), groups=g)
        x, w, b = _tensors(rng, [(2, ci, H, H), (co, ci // g, k, k), (co,)], dtype)
        got = conv2d(x, w, b, spec).data
        want = conv2d_naive(x.data, w.data, b.data, (s, s), (p, p), g)
        assert np.abs(got - want).max() < tol, (H, k, s, g, p, dtype)


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
def test_conv_transpose2d_matches_naive_grid(dtype, tol, rng):
    for H, k, s, g, p in GRID:
        ci, co = 2 * g, 4
        spec = ConvSpec(ci, co, (k, k), (s, s), (p, p), groups=g, transposed=True)
        op = (s - 1 if s > 1 else 0, s - 1 if s > 1 else 0)
        x, w, b = _tensors(rng, [(2, ci, H, H), (ci, co // g, k, k), (co,)], dtype)
        want = conv_transpose2d_naive(x.data, w.data, b.data, (s, s), (p, p), g, op)
        if want.shape[2] < 1 or want.shape[3] < 1:
            continue
        got = conv_transpose2d(x, w, b, spec).data
        assert got.shape == want.shape
        assert np.abs(got - want).max() < tol, (H, k, s, g, p, dtype)


def test_zero_input_conv_leaves_bias(rng):
    spec = ConvSpec(1, 1, (3, 3), padding=(1, 1))
    x = Tensor(np.zeros((1, 1, 3, 3)))
    w = Tensor(rng.standard_normal((1, 1, 3, 3)))
    out = conv2d(x, w, Tensor([0.5]), spec)
    assert np.allclose(out.data, 0.5)


def test_1x1_scalar_product():
    spec = ConvSpec(1, 1, (1, 1))
    out = conv2d(Tensor([[[[2.0]]]]), Tensor([[[[3.0]]]]), Tensor([0.0]), spec)
    assert out.data.reshape(()) == pytest.approx(6.0)


def test_random_case_vs_naive(rng):
    # the 1x2x5x5 / 3x2x3x3 stride-1 pad-1 case, elementwise within 1e-5
    spec = ConvSpec(2, 3, (3, 3), (1, 1), (1, 1))
    x, w, b = _tensors(rng, [(1, 2, 5, 5), (3, 2, 3, 3), (3,)], np.float32)
    got = conv2d(x, w, b, spec).data
    want = conv2d_naive(x.data, w.data, b.data, (1, 1), (1, 1), 1)
    assert np.abs(got - want).max() < 1e-5


def test_transpose_stride2_doubles_spatial(rng):
    spec = ConvSpec(1, 1, (3, 3), (2, 2), (1, 1), transposed=True)
    x = Tensor(rng.standard_normal((1, 1, 4, 4)))
    out = conv_transpose2d(x, Tensor(rng.standard_normal((1, 1, 3, 3))),
                           Tensor([0.0]), spec)
    assert out.shape == (1, 1, 8, 8)


def test_transpose_zero_input_is_bias(rng):
    spec = ConvSpec(2, 3, (3, 3), (2, 2), (1, 1), transposed=True)
    x = Tensor(np.zeros((1, 2, 4, 4)))
    w = Tensor(rng.standard_normal((2, 3, 3, 3)))
    out = conv_transpose2d(x, w, Tensor([1.0, 2.0, 3.0]), spec)
    assert np.allclose(out.data, np.array([1.0, 2.0, 3.0])[None, :, None, None])


def test_groups_must_divide_channels():
    with pytest.raises(ConfigurationError):
        ConvSpec(3, 4, groups=2)
    with pytest.raises(ConfigurationError):
        ConvSpec(4, 3, groups=2)


def test_shape_mismatch_names_axis(rng):
    spec = ConvSpec(2, 3, (3, 3))
    x = Tensor(rng.standard_normal((1, 4, 5, 5)))
    w = Tensor(rng.standard_normal((3, 2, 3, 3)))
    with pytest.raises(ConfigurationError, match="channel"):
        conv2d(x, w, Tensor(np.zeros(3)), spec)
