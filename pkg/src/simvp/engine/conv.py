"""Convolution primitives: forward, input-gradient, weight-gradient.

All three are expressed as im2col/col2im plus a grouped matmul. The
gather/scatter kernels come either from the compiled extension or the
pure-numpy fallback, chosen at import (override with SIMVP_CONV_BACKEND=
python|cython). Transposed convolution reuses the same primitives through
the adjoint identity: its forward IS the input-gradient of the matching
convolution.

Reduction order is fixed per backend (single matmul per group), so repeated
runs on the same build are bit-identical.
"""

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

_requested = os.environ.get("SIMVP_CONV_BACKEND", "auto")
if _requested not in ("auto", "python", "cython"):
    raise ConfigurationError(f"SIMVP_CONV_BACKEND must be auto|python|cython, got {_requested!r}")

if _requested in ("auto", "cython"):
    try:
        from . import _im2col as _kern
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _backend_np as _kern
        BACKEND = "python"
else:
    from . import _backend_np as _kern
    BACKEND = "python"


def get_backend():
    """Name of the active im2col backend, 'cython' or 'python'."""
    return BACKEND


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    groups: int = 1
    transposed: bool = False

    def __post_init__(self):
        if self.in_channels <= 0 or self.out_channels <= 0:
            raise ConfigurationError("channel counts must be positive")
        if self.groups <= 0:
            raise ConfigurationError("groups must be positive")
        if self.in_channels % self.groups:
            raise ConfigurationError(
                f"groups={self.groups} does not divide in_channels={self.in_channels}")
        if self.out_channels % self.groups:
            raise ConfigurationError(
                f"groups={self.groups} does not divide out_channels={self.out_channels}")

    @classmethod
    def same(cls, in_channels, out_channels, k, stride=1, groups=1, transposed=False):
        """Same-size padding floor(k/2); requires an odd kernel."""
        if k % 2 == 0:
            raise ConfigurationError(f"same-size padding needs an odd kernel, got {k}")
        return cls(in_channels, out_channels, (k, k), (stride, stride),
                   (k // 2, k // 2), groups, transposed)

    def out_hw(self, H, W):
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        if self.transposed:
            oph = sh - 1 if sh > 1 else 0
            opw = sw - 1 if sw > 1 else 0
            return (H - 1) * sh - 2 * ph + kh + oph, (W - 1) * sw - 2 * pw + kw + opw
        return (H + 2 * ph - kh) // sh + 1, (W + 2 * pw - kw) // sw + 1


def conv_forward(x, w, stride, padding, groups):
    """y[b,co,oh,ow] = sum x[b,ci,oh*s-p+i,ow*s-p+j] * w[co,ci_g,i,j].

    x: (B,Cin,H,W), w: (Cout, Cin/groups, kh, kw) -> (B,Cout,OH,OW).
    Cross-correlation, no kernel flip.
    """
    B, C, H, W = x.shape
    Cout, Cg, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (W + 2 * pw - kw) // sw + 1
    if OH < 1 or OW < 1:
        raise ConfigurationError(f"kernel {kh}x{kw} does not fit input {H}x{W} with padding {padding}")
    cols = _kern.im2col(x, kh, kw, sh, sw, ph, pw)
    colsg = cols.reshape(B, groups, Cg * kh * kw, OH * OW)
    wm = w.reshape(groups, Cout // groups, Cg * kh * kw)
    y = np.matmul(wm[None], colsg)
    return np.ascontiguousarray(y.reshape(B, Cout, OH, OW))


def conv_grad_input(gy, w, in_hw, stride, padding, groups):
    """Input gradient of conv_forward; also the forward map of transposed conv."""
    B, Cout, OH, OW = gy.shape
    _, Cg, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    H, W = in_hw
    C = Cg * groups
    wm = w.reshape(groups, Cout // groups, Cg * kh * kw)
    gyg = gy.reshape(B, groups, Cout // groups, OH * OW)
    cols = np.matmul(wm.transpose(0, 2, 1)[None], gyg)
    cols = np.ascontiguousarray(cols.reshape(B, C * kh * kw, OH * OW))
    return _kern.col2im(cols, C, H, W, kh, kw, sh, sw, ph, pw)


def conv_grad_weight(gy, x, kernel, stride, padding, groups):
    """Weight gradient of conv_forward, shape (Cout, Cin/groups, kh, kw)."""
    B, C, H, W = x.shape
    Cout = gy.shape[1]
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    OH, OW = gy.shape[2], gy.shape[3]
    cols = _kern.im2col(x, kh, kw, sh, sw, ph, pw)
    colsg = cols.reshape(B, groups, (C // groups) * kh * kw, OH * OW)
    gyg = gy.reshape(B, groups, Cout // groups, OH * OW)
    gw = np.matmul(gyg, colsg.transpose(0, 1, 3, 2)).sum(axis=0)
    return np.ascontiguousarray(gw.reshape(Cout, C // groups, kh, kw))
