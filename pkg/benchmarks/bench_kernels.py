#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure NumPy fallback.

Times the four hot kernels and a full decoder forward pass on both
backends, prints a table with the speedup, and cross-checks that matmul
results are bit-identical between the two.

Usage:
    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from ttfr import model, tensor
from ttfr._kernels import load_backend
from ttfr.model import ModelConfig


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(impl):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((256, 256)).astype(np.float32)
    b = rng.standard_normal((256, 256)).astype(np.float32)
    out = np.zeros((256, 256), np.float32)
    gain = rng.standard_normal(256).astype(np.float32)
    bias = rng.standard_normal(256).astype(np.float32)
    flat = np.ascontiguousarray(a.reshape(-1))
    gout = np.empty_like(flat)
    sout = np.empty_like(a)

    def run_matmul():
        out[:] = 0
        impl.matmul(a, b, out)

    return [
        ("matmul 256x256x256", run_matmul),
        ("softmax_rows 256x256", lambda: impl.softmax_rows(a, sout)),
        ("layer_norm_rows 256x256",
         lambda: impl.layer_norm_rows(a, gain, bias, np.float32(1e-5), sout)),
        ("gelu 65536", lambda: impl.gelu(flat, gout)),
    ]


def forward_case():
    cfg = ModelConfig(arch=model.ARCH_DECODER, vocab_size=256, max_seq_len=64,
                      d_model=128, n_layers=4, n_heads=8, d_head=16,
                      d_ff=512).validate()
    w = model.init_weights(cfg, seed=0, std=0.02)
    tokens = list(np.random.default_rng(1).integers(0, 256, size=64))
    return cfg, w, tokens


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = {"python": load_backend("python")}
    try:
        backends["cython"] = load_backend("cython")
    except ImportError:
        print("compiled core not built; benchmarking the fallback only")

    results = {}
    for name, impl in backends.items():
        for label, fn in kernel_cases(impl):
            results.setdefault(label, {})[name] = timeit(fn, args.repeat)

    cfg, w, tokens = forward_case()
    for name, impl in backends.items():
        tensor.impl = impl
        results.setdefault("forward d128 L4 T64", {})[name] = timeit(
            lambda: model.forward(cfg, w, tokens), args.repeat)
    tensor.impl = backends.get("cython", backends["python"])

    width = max(len(k) for k in results)
    print(f"{'kernel':<{width}}  {'python':>10}  {'cython':>10}  {'speedup':>8}")
    for label, times in results.items():
        py = times["python"]
        cy = times.get("cython")
        if cy is None:
            print(f"{label:<{width}}  {py * 1e3:>8.2f}ms  {'-':>10}  {'-':>8}")
        else:
            print(f"{label:<{width}}  {py * 1e3:>8.2f}ms  {cy * 1e3:>8.2f}ms  "
                  f"{py / cy:>7.1f}x")

    if "cython" in backends:
        rng = np.random.default_rng(2)
        a = rng.standard_normal((64, 96)).astype(np.float32)
        b = rng.standard_normal((96, 32)).astype(np.float32)
        o1 = np.zeros((64, 32), np.float32)
        o2 = np.zeros((64, 32), np.float32)
        backends["cython"].matmul(a, b, o1)
        backends["python"].matmul(a, b, o2)
        match = "bit-identical" if o1.tobytes() == o2.tobytes() else "MISMATCH"
        print(f"\nmatmul cross-backend check: {match}")


if __name__ == "__main__":
    main()
