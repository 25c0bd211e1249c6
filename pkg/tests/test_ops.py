import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import t64
from simvp.engine import (ConvSpec, Tape, Tensor, add, batch_norm,
                          concat_channels, conv2d, group_norm, layer_norm,
                          leaky_relu, merge_time, mse_loss, split_time, tsum)
from simvp.errors import ConfigurationError, NumericsError, UsageError


# -- leaky_relu --------------------------------------------------------------

def test_leaky_relu_values():
    out = leaky_relu(Tensor([-2.0, 0.0, 3.0]), slope=0.01)
    assert np.allclose(out.data, [-0.02, 0.0, 3.0])


def test_leaky_relu_zero_slope_is_relu(rng):
    x = rng.standard_normal(50).astype(np.float32)
    out = leaky_relu(Tensor(x), slope=0.0)
    assert np.array_equal(out.data, np.maximum(x, 0.0))


def test_leaky_relu_slope_range():
    with pytest.raises(ConfigurationError):
        leaky_relu(Tensor([1.0]), slope=1.0)


# -- layer/group/batch norm --------------------------------------------------

def test_layer_norm_constant_input_is_zero():
    x = Tensor(np.full((2, 3, 4, 4), 7.0))
    out = layer_norm(x, 3, Tensor(np.ones((3, 1, 1))), Tensor(np.zeros((3, 1, 1))))
    assert np.allclose(out.data, 0.0)


def test_layer_norm_two_point_standardization():
    out = layer_norm(t64([[1.0, 3.0]]), 1, t64([1.0]), t64([0.0]), eps=1e-14)
    assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-6)


def test_layer_norm_rejects_zero_slab():
    with pytest.raises(ConfigurationError):
        layer_norm(Tensor(np.zeros((2, 0))), 1, Tensor([1.0]), Tensor([0.0]))


def test_group_norm_per_channel_constant_is_zero(rng):
    x = rng.standard_normal((2, 4, 3, 3)).astype(np.float32)
    x[:, 1] = 5.0  # constant channel
    out = group_norm(Tensor(x), 4, Tensor(np.ones(4)), Tensor(np.zeros(4)))
    assert np.allclose(out.data[:, 1], 0.0, atol=1e-4)


def test_group_norm_one_group_equals_layer_norm(rng):
    x = rng.standard_normal((2, 4, 3, 3))
    a = group_norm(t64(x), 1, t64(np.ones(4)), t64(np.zeros(4)))
    b = layer_norm(t64(x), 3, t64(np.ones((4, 1, 1))), t64(np.zeros((4, 1, 1))))
    assert np.abs(a.data - b.data).max() < 1e-6


def test_group_norm_indivisible_groups():
    with pytest.raises(ConfigurationError):
        group_norm(Tensor(np.zeros((1, 3, 2, 2))), 2,
                   Tensor(np.ones(3)), Tensor(np.zeros(3)))


def test_batch_norm_train_statistics(rng):
    x = rng.standard_normal((8, 4, 5, 5))
    rm, rv = Tensor(np.zeros(4)), Tensor(np.ones(4))
    out = batch_norm(t64(x), t64(np.ones(4)), t64(np.zeros(4)), rm, rv,
                     training=True, eps=1e-12)
    assert np.abs(out.data.mean(axis=(0, 2, 3))).max() < 1e-4
    assert np.abs(out.data.var(axis=(0, 2, 3)) - 1.0).max() < 1e-4


def test_batch_norm_constant_batch_is_zero():
    rm, rv = Tensor(np.zeros(2)), Tensor(np.ones(2))
    out = batch_norm(Tensor(np.full((4, 2, 3, 3), 2.5)), Tensor(np.ones(2)),
                     Tensor(np.zeros(2)), rm, rv, training=True)
    assert np.allclose(out.data, 0.0, atol=1e-2)


def test_batch_norm_eval_before_train_uses_initial_stats(rng):
    x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
    rm, rv = Tensor(np.zeros(3)), Tensor(np.ones(3))
    out = batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                     rm, rv, training=False, eps=1e-12)
    assert np.allclose(out.data, x, atol=1e-5)


def test_batch_norm_running_stats_update(rng):
    x = rng.standard_normal((8, 2, 4, 4)) + 3.0
    rm, rv = Tensor(np.zeros(2)), Tensor(np.ones(2))
    batch_norm(t64(x), t64(np.ones(2)), t64(np.zeros(2)), rm, rv, training=True)
    want_m = 0.1 * x.mean(axis=(0, 2, 3))
    assert np.allclose(rm.data, want_m, atol=1e-5)


# -- layout ops --------------------------------------------------------------

def test_merge_split_round_trip(rng):
    x = rng.standard_normal((2, 10, 64, 16, 16)).astype(np.float32)
    merged = merge_time(Tensor(x))
    assert merged.shape == (2, 640, 16, 16)
    back = split_time(merged, 10)
    assert np.array_equal(back.data, x)


@settings(max_examples=30, deadline=None)
@given(b=st.integers(1, 3), t=st.integers(1, 4), c=st.integers(1, 4),
       h=st.integers(1, 5), w=st.integers(1, 5))
def test_merge_split_bit_exact_property(b, t, c, h, w):
    x = np.arange(b * t * c * h * w, dtype=np.float32).reshape(b, t, c, h, w)
    assert np.array_equal(split_time(merge_time(Tensor(x)), t).data, x)


def test_merge_needs_five_axes():
    with pytest.raises(ConfigurationError):
        merge_time(Tensor(np.zeros((2, 3, 4, 4))))


def test_concat_channels(rng):
    a = Tensor(rng.standard_normal((1, 3, 4, 4)).astype(np.float32))
    b = Tensor(rng.standard_normal((1, 5, 4, 4)).astype(np.float32))
    out = concat_channels([a, b])
    assert out.shape == (1, 8, 4, 4)
    assert np.array_equal(out.data[:, :3], a.data)


def test_concat_rejects_mismatched_spatial():
    with pytest.raises(ConfigurationError):
        concat_channels([Tensor(np.zeros((1, 2, 4, 4))),
                         Tensor(np.zeros((1, 2, 5, 4)))])


def test_add_shape_mismatch():
    with pytest.raises(ConfigurationError):
        add(Tensor([1.0]), Tensor([1.0, 2.0]))


# -- loss and backward -------------------------------------------------------

def test_mse_values():
    assert mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
    assert mse_loss(Tensor([0.0, 0.0]), Tensor([1.0, 3.0])).item() == pytest.approx(5.0)


def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.standard_normal((3, 4)).astype(np.float32), requires_grad=True)
    with Tape() as tape:
        tape.backward(tsum(x))
    assert np.array_equal(x.grad, np.ones((3, 4), dtype=np.float32))


def test_backward_scalar_closed_form():
    # loss = mse(w*x, y) with scalars via a 1x1 conv: grad_w = 2x(wx - y)
    xv, wv, yv = 1.5, 0.7, 2.0
    w = t64([[[[wv]]]], requires_grad=True)
    spec = ConvSpec(1, 1, (1, 1))
    with Tape() as tape:
        pred = conv2d(t64([[[[xv]]]]), w, None, spec)
        tape.backward(mse_loss(pred, t64([[[[yv]]]])))
    assert w.grad.reshape(()) == pytest.approx(2 * xv * (wv * xv - yv))


def test_second_backward_sums_leaf_grads():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = tsum(x)
        tape.backward(loss)
        tape.backward(loss)
    assert np.allclose(x.grad, [2.0, 2.0])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = leaky_relu(x)
        with pytest.raises(UsageError):
            tape.backward(y)


def test_detached_tensor_is_constant(rng):
    x = Tensor(rng.standard_normal(4).astype(np.float32), requires_grad=True)
    with Tape() as tape:
        y = add(leaky_relu(x).detach(), x)
        tape.backward(tsum(y))
    assert np.allclose(x.grad, 1.0)  # only the direct branch contributes


def test_non_finite_forward_is_an_error():
    big = Tensor(np.array([1e38], dtype=np.float32))
    with np.errstate(over="ignore"):  # the overflow is the point
        with pytest.raises(NumericsError):
            mse_loss(big, Tensor(np.array([-1e38], dtype=np.float32)))


def test_mse_gradient_formula(rng):
    p = t64(rng.standard_normal(6), requires_grad=True)
    tgt = t64(rng.standard_normal(6))
    with Tape() as tape:
        tape.backward(mse_loss(p, tgt))
    assert np.allclose(p.grad, 2 * (p.data - tgt.data) / 6, atol=1e-12)
