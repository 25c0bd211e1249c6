# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col/col2im gather-scatter kernels.

These two loops dominate convolution runtime outside the matmul itself;
everything else in the engine is plain numpy. A pure-numpy fallback with
identical semantics lives in _backend_np.py and is selected at import when
this extension is unavailable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int sh, int sw, int ph, int pw):
    """Gather (B,C,H,W) into columns (B, C*kh*kw, OH*OW), zero padding."""
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - kw) // sw + 1
    cdef cnp.ndarray out_arr = np.zeros((B, C * kh * kw, OH * OW),
                                        dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, c, i, j, oh, ow, ih, iw, row
    for b in range(B):
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for oh in range(OH):
                        ih = oh * sh - ph + i
                        if ih < 0 or ih >= H:
                            continue
                        for ow in range(OW):
                            iw = ow * sw - pw + j
                            if iw < 0 or iw >= W:
                                continue
                            out[b, row, oh * OW + ow] = x[b, c, ih, iw]
    return out_arr


def col2im(real[:, :, ::1] cols, int C, int H, int W,
           int kh, int kw, int sh, int sw, int ph, int pw):
    """Scatter-add columns (B, C*kh*kw, OH*OW) back to (B,C,H,W)."""
    cdef Py_ssize_t B = cols.shape[0]
    cdef Py_ssize_t OH = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - kw) // sw + 1
    cdef cnp.ndarray out_arr = np.zeros((B, C, H, W),
                                        dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, c, i, j, oh, ow, ih, iw, row
    for b in range(B):
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for oh in range(OH):
                        ih = oh * sh - ph + i
                        if ih < 0 or ih >= H:
                            continue
                        for ow in range(OW):
                            iw = ow * sw - pw + j
                            if iw < 0 or iw >= W:
                                continue
                            out[b, c, ih, iw] += cols[b, row, oh * OW + ow]
    return out_arr
