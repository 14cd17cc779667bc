#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

The dispatch path is fixed at import time by INDICLM_NUMBA, so this script
re-runs itself in a subprocess with the flag flipped and prints both
timings side by side:

    python benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeats=20):
    fn()  # warm up / compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e3


def run_current_path():
    from indiclm import kernels

    rng = np.random.default_rng(1)
    flat = rng.integers(0, 300, 1_000_000).astype(np.int32)
    flat[rng.choice(flat.size, 100_000, replace=False)] = kernels.SENTINEL
    x = rng.normal(size=(64, 256)).astype(np.float32)
    w = rng.integers(-127, 128, (256, 1024)).astype(np.int8)
    scales = rng.uniform(0.001, 0.1, 1024).astype(np.float32)
    x1 = x[:1]

    if kernels.USING_NUMBA:
        impls = {
            "pair_counts": lambda: kernels._pair_counts_nb(flat),
            "apply_pair": lambda: kernels._apply_pair_nb(
                flat, np.int32(3), np.int32(7), np.int32(999)),
            "matmul_int8": lambda: kernels._matmul_int8_nb(x, w, scales),
            "matmul_int8_t1": lambda: kernels._matmul_int8_nb(x1, w, scales),
        }
    else:
        impls = {
            "pair_counts": lambda: kernels._pair_counts_np(flat),
            "apply_pair": lambda: kernels._apply_pair_np(flat, 3, 7, 999),
            "matmul_int8": lambda: kernels._matmul_int8_np(x, w, scales),
            "matmul_int8_t1": lambda: kernels._matmul_int8_np(x1, w, scales),
        }
    result = {"path": "numba" if kernels.USING_NUMBA else "numpy"}
    for name, fn in impls.items():
        result[name + "_ms"] = _time(fn)
    return result


def main():
    if os.environ.get("_BENCH_CHILD"):
        print(json.dumps(run_current_path()))
        return

    results = []
    for flag in ("1", "0"):
        env = dict(os.environ, INDICLM_NUMBA=flag, _BENCH_CHILD="1")
        proc = subprocess.run([sys.executable, __file__], env=env,
                              capture_output=True, text=True, check=True)
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    print(f"{'kernel':<18}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    numba_r, numpy_r = results
    for key in ("pair_counts_ms", "apply_pair_ms", "matmul_int8_ms",
                "matmul_int8_t1_ms"):
        ratio = numpy_r[key] / numba_r[key]
        print(f"{key[:-3]:<18}{numba_r[key]:>12.3f}{numpy_r[key]:>12.3f}{ratio:>9.2f}x")


if __name__ == "__main__":
    main()
