#!/usr/bin/env python3
"""Compare the compiled (numba) and pure-numpy kernel backends.

Times the hot kernels on model-scale shapes and a full tiny-model decode
loop under each backend, then prints a side-by-side table.

Usage:
    python3 benchmarks/compare_backends.py [--rows 1536] [--cols 4096] [--iters 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from danube import kernels
from danube.config import ModelConfig
from danube.quant import QuantType, quantize_rows


def _best_of(fn, iters: int) -> float:
    best = float("inf")
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_benchmarks(backend, rows: int, cols: int, iters: int):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((1, cols)).astype(np.float32)  # single-token decode row
    w = rng.standard_normal((rows, cols)).astype(np.float32)
    w_q8 = quantize_rows(w, QuantType.Q8_0)
    w_q4 = quantize_rows(w, QuantType.Q4_0)
    x = rng.standard_normal((64, cols)).astype(np.float32)
    norm_w = rng.standard_normal(cols).astype(np.float32)
    scores = rng.standard_normal((64, 512)).astype(np.float32)

    return {
        "matmul f32 (1xK @ KxN)": _best_of(lambda: backend.matmul_f32(a, w), iters),
        "matmul q8_0": _best_of(
            lambda: backend.matmul_quant(a, w_q8, QuantType.Q8_0, cols), iters
        ),
        "matmul q4_0": _best_of(
            lambda: backend.matmul_quant(a, w_q4, QuantType.Q4_0, cols), iters
        ),
        "rms_norm (64xK)": _best_of(lambda: backend.rms_norm(x, norm_w, 1e-5), iters),
        "softmax (64x512)": _best_of(lambda: backend.softmax_rows(scores), iters),
        "silu (64xK)": _best_of(lambda: backend.silu(x), iters),
    }


def decode_benchmark(backend_name: str, iters: int) -> float:
    """Tokens/s over a short greedy decode on a random small model."""
    import danube.kernels as k

    mod = __import__(f"danube.kernels.{backend_name}_backend", fromlist=["*"])
    saved = {}
    names = (
        "rms_norm", "softmax_rows", "silu", "rope_rotate",
        "matmul_f32", "matmul_quant", "set_num_threads",
    )
    for name in names:
        saved[name] = getattr(k, name)
        setattr(k, name, getattr(mod, name))
    try:
        from danube.runtime import Model, forward
        from danube.tensor import Tensor

        cfg = ModelConfig(
            n_layers=4, hidden_size=256, intermediate_size=512, n_heads=4,
            n_kv_heads=2, head_size=64, vocab_size=1024, rope_theta=10000.0,
            max_context=256,
        )
        rng = np.random.default_rng(1)
        tensors = {
            name: Tensor.from_f32(
                (rng.standard_normal(shape) * 0.2).astype(np.float32),
                QuantType.Q8_0 if len(shape) == 2 else QuantType.F32,
            )
            for name, shape in cfg.weight_shapes()
        }
        model = Model.from_weights(cfg, tensors)
        cache = model.new_cache()
        forward(model, [1, 2, 3, 4], cache)  # prefill + compile warm-up
        n = 64
        t0 = time.perf_counter()
        tok = 5
        for _ in range(n):
            logits = forward(model, [tok], cache)
            tok = int(np.argmax(logits[-1]))
        return n / (time.perf_counter() - t0)
    finally:
        for name, fn in saved.items():
            setattr(k, name, fn)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=1536)
    ap.add_argument("--cols", type=int, default=4096)
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args()

    from danube.kernels import numpy_backend

    backends = {"numpy": numpy_backend}
    try:
        from danube.kernels import numba_backend

        backends["numba"] = numba_backend
    except ImportError:
        print("numba backend unavailable; timing numpy only")

    results = {}
    for name, mod in backends.items():
        # warm-up triggers JIT compilation so it isn't billed to the timings
        kernel_benchmarks(mod, 64, 128, 1)
        results[name] = kernel_benchmarks(mod, args.rows, args.cols, args.iters)

    cols = list(backends)
    width = max(len(k) for r in results.values() for k in r)
    header = f"{'kernel':<{width}}" + "".join(f" {c:>12}" for c in cols)
    if len(cols) == 2:
        header += f" {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for key in next(iter(results.values())):
        line = f"{key:<{width}}"
        times = [results[c][key] for c in cols]
        for t in times:
            line += f" {t * 1e3:>10.3f}ms"
        if len(times) == 2:
            line += f" {times[0] / times[1]:>8.2f}x"
        print(line)

    print()
    for name in backends:
        tps = decode_benchmark(name, args.iters)
        print(f"greedy decode ({name:>5}): {tps:8.1f} tok/s  (4-layer Q8_0 toy model)")


if __name__ == "__main__":
    main()
