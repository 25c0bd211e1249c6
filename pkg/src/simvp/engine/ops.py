"""Differentiable operator set: conv, transposed conv, norms, activations,
layout ops, and the MSE objective.

Every op validates shapes up front, computes the forward with numpy (convs
go through the im2col backend), and registers a backward closure on the
active tape.
"""

import numpy as np

from ..errors import ConfigurationError, UsageError
from . import conv as _conv
from .tensor import Tensor, accumulate_grad, make_result

ConvSpec = _conv.ConvSpec


def _reduce_to_shape(g, shape):
    """Sum g down to a broadcastable target shape (for affine params)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / layout

def add(a, b):
    if a.shape != b.shape:
        raise ConfigurationError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def build(out):
        def bw(g):
            if a.requires_grad:
                accumulate_grad(a, g)
            if b.requires_grad:
                accumulate_grad(b, g)
        return bw

    return make_result(a.data + b.data, (a, b), build)


def mul(a, b):
    """Elementwise (Hadamard) product."""
    if a.shape != b.shape:
        raise ConfigurationError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def build(out):
        def bw(g):
            if a.requires_grad:
                accumulate_grad(a, g * b.data)
            if b.requires_grad:
                accumulate_grad(b, g * a.data)
        return bw

    return make_result(a.data * b.data, (a, b), build)


def leaky_relu(x, slope=0.01):
    """x if x >= 0 else slope*x; subgradient at 0 is 1."""
    if not 0.0 <= slope < 1.0:
        raise ConfigurationError(f"leaky_relu slope must be in [0,1), got {slope}")
    mask = x.data >= 0
    y = np.where(mask, x.data, x.data * slope)

    def build(out):
        def bw(g):
            if x.requires_grad:
                accumulate_grad(x, np.where(mask, g, g * slope))
        return bw

    return make_result(y.astype(x.dtype), (x,), build)


def reshape(x, shape):
    data = np.ascontiguousarray(x.data.reshape(shape))

    def build(out):
        def bw(g):
            if x.requires_grad:
                accumulate_grad(x, g.reshape(x.shape))
        return bw

    return make_result(data, (x,), build)


def merge_time(x):
    """(B,T,C,H,W) -> (B,T*C,H,W); pure layout change, bit-exact inverse of split_time."""
    if x.data.ndim != 5:
        raise ConfigurationError(f"merge_time needs a 5-axis tensor, got {x.data.ndim} axes")
    B, T, C, H, W = x.shape
    return reshape(x, (B, T * C, H, W))


def split_time(x, T):
    """(B,T*C,H,W) -> (B,T,C,H,W), inverse of merge_time."""
    if x.data.ndim != 4:
        raise ConfigurationError(f"split_time needs a 4-axis tensor, got {x.data.ndim} axes")
    B, TC, H, W = x.shape
    if TC % T:
        raise ConfigurationError(f"channel axis {TC} not divisible by T={T}")
    return reshape(x, (B, T, TC // T, H, W))


def concat_channels(tensors):
    """Concatenate 4-axis tensors along the channel axis."""
    tensors = list(tensors)
    ref = tensors[0]
    for t in tensors[1:]:
        if t.data.ndim != ref.data.ndim or \
                t.shape[:1] + t.shape[2:] != ref.shape[:1] + ref.shape[2:]:
            raise ConfigurationError(
                f"concat_channels non-channel axes differ: {ref.shape} vs {t.shape}")
    data = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def build(out):
        def bw(g):
            for t, gpart in zip(tensors, np.split(g, splits, axis=1)):
                if t.requires_grad:
                    accumulate_grad(t, gpart)
        return bw

    return make_result(data, tuple(tensors), build)


def tsum(x):
    """Sum of all elements, as a scalar tensor."""

    def build(out):
        def bw(g):
            if x.requires_grad:
                accumulate_grad(x, np.broadcast_to(g, x.shape))
        return bw

    return make_result(x.data.sum(dtype=x.dtype), (x,), build)


def mse_loss(pred, target):
    """Mean of squared differences over all elements."""
    if pred.shape != target.shape:
        raise ConfigurationError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    loss = np.asarray((diff * diff).mean(), dtype=pred.dtype)

    def build(out):
        def bw(g):
            scaled = (2.0 / n) * diff * g
            if pred.requires_grad:
                accumulate_grad(pred, scaled)
            if target.requires_grad:
                accumulate_grad(target, -scaled)
        return bw

    return make_result(loss, (pred, target), build)


# ---------------------------------------------------------------------------
# convolutions

def _check_conv_shapes(x, w, b, spec):
    if x.data.ndim != 4:
        raise ConfigurationError(f"conv input must have 4 axes (B,C,H,W), got {x.data.ndim}")
    if x.shape[1] != spec.in_channels:
        raise ConfigurationError(
            f"input channel axis is {x.shape[1]}, spec expects {spec.in_channels}")
    kh, kw = spec.kernel
    if spec.transposed:
        expect_w = (spec.in_channels, spec.out_channels // spec.groups, kh, kw)
    else:
        expect_w = (spec.out_channels, spec.in_channels // spec.groups, kh, kw)
    if w.shape != expect_w:
        raise ConfigurationError(f"weight shape {w.shape}, spec expects {expect_w}")
    if b is not None and b.shape != (spec.out_channels,):
        raise ConfigurationError(f"bias shape {b.shape}, spec expects ({spec.out_channels},)")


def conv2d(x, w, b, spec):
    """Grouped 2-d cross-correlation with optional bias."""
    if spec.transposed:
        raise ConfigurationError("conv2d called with a transposed ConvSpec")
    _check_conv_shapes(x, w, b, spec)
    y = _conv.conv_forward(x.data, w.data, spec.stride, spec.padding, spec.groups)
    if b is not None:
        y += b.data[None, :, None, None]
    in_hw = x.shape[2:]

    def build(out):
        def bw(g):
            g = np.ascontiguousarray(g)
            if x.requires_grad:
                accumulate_grad(x, _conv.conv_grad_input(
                    g, w.data, in_hw, spec.stride, spec.padding, spec.groups))
            if w.requires_grad:
                accumulate_grad(w, _conv.conv_grad_weight(
                    g, x.data, spec.kernel, spec.stride, spec.padding, spec.groups))
            if b is not None and b.requires_grad:
                accumulate_grad(b, g.sum(axis=(0, 2, 3)))
        return bw

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(y, inputs, build)


def conv_transpose2d(x, w, b, spec):
    """Transposed grouped convolution.

    Forward equals the input-gradient of the matching conv2d (adjoint
    identity); weight layout is (Cin, Cout/groups, kh, kw). Output size is
    (H-1)*s - 2p + k + output_padding with output_padding fixed to s-1 for
    s > 1, so stride-2 exactly doubles the spatial size.
    """
    if not spec.transposed:
        raise ConfigurationError("conv_transpose2d needs a transposed ConvSpec")
    _check_conv_shapes(x, w, b, spec)
    out_hw = spec.out_hw(*x.shape[2:])
    if out_hw[0] < 1 or out_hw[1] < 1:
        raise ConfigurationError(f"transposed conv output size {out_hw} is empty")
    y = _conv.conv_grad_input(x.data, w.data, out_hw, spec.stride, spec.padding, spec.groups)
    if b is not None:
        y = y + b.data[None, :, None, None]

    def build(out):
        def bw(g):
            g = np.ascontiguousarray(g)
            if x.requires_grad:
                accumulate_grad(x, _conv.conv_forward(
                    g, w.data, spec.stride, spec.padding, spec.groups))
            if w.requires_grad:
                # roles swap under the adjoint: x acts as the output-grad
                accumulate_grad(w, _conv.conv_grad_weight(
                    x.data, g, spec.kernel, spec.stride, spec.padding, spec.groups))
            if b is not None and b.requires_grad:
                accumulate_grad(b, g.sum(axis=(0, 2, 3)))
        return bw

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(y, inputs, build)


# ---------------------------------------------------------------------------
# normalizations

def _norm_core(xd, axes, eps):
    mu = xd.mean(axis=axes, keepdims=True)
    var = xd.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return (xd - mu) * inv, inv


def _norm_backward_input(g_hat, xhat, inv, axes):
    # d/dx of (x - mu) / sqrt(var + eps) with mean/var over `axes`
    return inv * (g_hat
                  - g_hat.mean(axis=axes, keepdims=True)
                  - xhat * (g_hat * xhat).mean(axis=axes, keepdims=True))


def layer_norm(x, num_axes, gamma, beta, eps=1e-5):
    """Standardize over the trailing `num_axes` axes, then affine.

    gamma/beta must broadcast against the normalized slab.
    """
    if not 1 <= num_axes < x.data.ndim:
        raise ConfigurationError(f"num_axes={num_axes} invalid for {x.data.ndim}-axis input")
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    axes = tuple(range(x.data.ndim - num_axes, x.data.ndim))
    slab = int(np.prod([x.shape[a] for a in axes]))
    if slab == 0:
        raise ConfigurationError("zero-size normalized slab")
    xhat, inv = _norm_core(x.data, axes, eps)
    y = gamma.data * xhat + beta.data

    def build(out):
        def bw(g):
            if x.requires_grad:
                accumulate_grad(x, _norm_backward_input(g * gamma.data, xhat, inv, axes))
            if gamma.requires_grad:
                accumulate_grad(gamma, _reduce_to_shape(g * xhat, gamma.shape))
            if beta.requires_grad:
                accumulate_grad(beta, _reduce_to_shape(g, beta.shape))
        return bw

    return make_result(y.astype(x.dtype), (x, gamma, beta), build)


def group_norm(x, num_groups, gamma, beta, eps=1e-5):
    """Standardize each (C/num_groups, H, W) slab per sample; per-channel affine."""
    if x.data.ndim != 4:
        raise ConfigurationError("group_norm expects (B,C,H,W)")
    B, C, H, W = x.shape
    if C % num_groups:
        raise ConfigurationError(f"num_groups={num_groups} does not divide C={C}")
    grouped = x.data.reshape(B, num_groups, (C // num_groups) * H * W)
    xhat_g, inv = _norm_core(grouped, (2,), eps)
    xhat = xhat_g.reshape(B, C, H, W)
    gam = gamma.data.reshape(1, C, 1, 1)
    bet = beta.data.reshape(1, C, 1, 1)
    y = gam * xhat + bet

    def build(out):
        def bw(g):
            if x.requires_grad:
                g_hat = (g * gam).reshape(grouped.shape)
                gx = _norm_backward_input(g_hat, xhat_g, inv, (2,))
                accumulate_grad(x, gx.reshape(B, C, H, W))
            if gamma.requires_grad:
                accumulate_grad(gamma, (g * xhat).sum(axis=(0, 2, 3)).reshape(gamma.shape))
            if beta.requires_grad:
                accumulate_grad(beta, g.sum(axis=(0, 2, 3)).reshape(beta.shape))
        return bw

    return make_result(y.astype(x.dtype), (x, gamma, beta), build)


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.1, eps=1e-5):
    """Per-channel normalization over (B,H,W).

    Train mode uses batch statistics (biased variance) and updates the
    running stats in place with the fixed momentum; eval mode uses running
    stats. Before any train step the running stats are (0, 1).
    """
    if x.data.ndim != 4:
        raise ConfigurationError("batch_norm expects (B,C,H,W)")
    B, C, H, W = x.shape
    gam = gamma.data.reshape(1, C, 1, 1)
    bet = beta.data.reshape(1, C, 1, 1)
    if training:
        axes = (0, 2, 3)
        xhat, inv = _norm_core(x.data, axes, eps)
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean.data[...] = (1 - momentum) * running_mean.data + momentum * mu
        running_var.data[...] = (1 - momentum) * running_var.data + momentum * var
    else:
        inv = 1.0 / np.sqrt(running_var.data.reshape(1, C, 1, 1) + eps)
        xhat = (x.data - running_mean.data.reshape(1, C, 1, 1)) * inv
    y = gam * xhat + bet

    def build(out):
        def bw(g):
            if x.requires_grad:
                if training:
                    gx = _norm_backward_input(g * gam, xhat, inv, (0, 2, 3))
                else:
                    gx = g * gam * inv
                accumulate_grad(x, gx)
            if gamma.requires_grad:
                accumulate_grad(gamma, (g * xhat).sum(axis=(0, 2, 3)).reshape(gamma.shape))
            if beta.requires_grad:
                accumulate_grad(beta, g.sum(axis=(0, 2, 3)).reshape(beta.shape))
        return bw

    return make_result(y.astype(x.dtype), (x, gamma, beta), build)
