#!/usr/bin/env python3
"""Compare the compiled conv gather/scatter kernels with the numpy fallback.

Run: python3 benchmarks/bench_conv.py  (or `simvp bench`)
"""

import argparse

from simvp.benchmark import run_conv_benchmark

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    run_conv_benchmark(repeats=ap.parse_args().repeats)
