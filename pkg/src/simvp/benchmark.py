"""Benchmark the compiled im2col/col2im kernels against the pure-numpy
fallback on convolution shapes the model actually uses."""

import importlib
import time

import numpy as np

from .engine import _backend_np
from .engine import conv as conv_mod

# (label, B, C, H, W, k, stride, pad)
SHAPES = [
    ("encoder 3x3 s1", 8, 16, 16, 16, 3, 1, 1),
    ("encoder 3x3 s2", 8, 64, 64, 64, 3, 2, 1),
    ("inception 3x3", 2, 256, 16, 16, 3, 1, 1),
    ("inception 11x11", 2, 256, 16, 16, 11, 1, 5),
]


def _load_cython():
    try:
        return importlib.import_module("simvp.engine._im2col")
    except ImportError:
        return None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_conv_benchmark(repeats=5, out=print):
    cython = _load_cython()
    backends = [("python", _backend_np)]
    if cython is not None:
        backends.append(("cython", cython))
    else:
        out("compiled extension not available; benchmarking python backend only")
    out(f"active engine backend: {conv_mod.get_backend()}")
    out(f"{'shape':<18} {'op':<8} " + " ".join(f"{n:>10}" for n, _ in backends))
    rng = np.random.default_rng(0)
    for label, B, C, H, W, k, s, p in SHAPES:
        x = rng.standard_normal((B, C, H, W)).astype(np.float32)
        OH = (H + 2 * p - k) // s + 1
        cols = rng.standard_normal((B, C * k * k, OH * OH)).astype(np.float32)
        row = []
        for _, mod in backends:
            row.append(_time(lambda m=mod: m.im2col(x, k, k, s, s, p, p), repeats))
        out(f"{label:<18} {'im2col':<8} " + " ".join(f"{t * 1e3:9.2f}ms" for t in row))
        row = []
        for _, mod in backends:
            row.append(_time(lambda m=mod: m.col2im(cols, C, H, W, k, k, s, s, p, p),
                             repeats))
        out(f"{label:<18} {'col2im':<8} " + " ".join(f"{t * 1e3:9.2f}ms" for t in row))


if __name__ == "__main__":
    run_conv_benchmark()
