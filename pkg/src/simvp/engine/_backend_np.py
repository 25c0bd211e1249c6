"""Pure-numpy im2col/col2im, the fallback for the compiled extension.

Same contract as simvp.engine._im2col: im2col gathers (B,C,H,W) into
(B, C*kh*kw, OH*OW) columns with zero padding, col2im scatter-adds back.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_hw(H, W, kh, kw, sh, sw, ph, pw):
    return (H + 2 * ph - kh) // sh + 1, (W + 2 * pw - kw) // sw + 1


def im2col(x, kh, kw, sh, sw, ph, pw):
    B, C, H, W = x.shape
    OH, OW = _out_hw(H, W, kh, kw, sh, sw, ph, pw)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # windows: (B, C, OH, OW, kh, kw) view, then reorder to row layout
    # (c, i, j) varying fastest over (i, j), matching the compiled kernel.
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * kh * kw, OH * OW)
    return np.ascontiguousarray(cols)


def col2im(cols, C, H, W, kh, kw, sh, sw, ph, pw):
    B = cols.shape[0]
    OH, OW = _out_hw(H, W, kh, kw, sh, sw, ph, pw)
    cols = cols.reshape(B, C, kh, kw, OH, OW)
    out = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + OH * sh:sh, j:j + OW * sw:sw] += cols[:, :, i, j]
    return np.ascontiguousarray(out[:, :, ph:ph + H, pw:pw + W])
