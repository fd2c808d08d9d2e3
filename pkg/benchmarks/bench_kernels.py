#!/usr/bin/env python3
"""Compare the compiled and pure-numpy kernel backends.

Times the three hot paths (greedy term extraction via decompose, the
deterministic dense matmul, and the compressed series matmul) on a few
representative shapes, then prints a table with the numba speedup. Run
after any kernel change:

    python3 benchmarks/bench_kernels.py --repeats 5
"""

import argparse
import os
import statistics
import time

from tasd import TasdConfig, decompose, matmul, random_matrix, tasd_matmul
from tasd._kernels import HAS_NUMBA, active_backend

CASES = [
    ("decompose 128x128 2:4+2:8", "decompose", (128, 128), "2:4+2:8"),
    ("decompose 512x512 4:8+2:8", "decompose", (512, 512), "4:8+2:8"),
    ("matmul 128x128 @ 128x128", "matmul", (128, 128), None),
    ("matmul 256x256 @ 256x256", "matmul", (256, 256), None),
    ("series matmul 256x256 2:4+2:8", "series", (256, 256), "2:4+2:8"),
]


def build_inputs(kind, dims, cfg_name):
    rows, cols = dims
    a = random_matrix(rows, cols, 0.6, "normal", seed=(rows, cols, 0))
    if kind == "matmul":
        b = random_matrix(cols, cols, 1.0, "uniform", seed=(rows, cols, 1))
        return lambda: matmul(a, b)
    cfg = TasdConfig.parse(cfg_name)
    if kind == "decompose":
        return lambda: decompose(a, cfg)
    b = random_matrix(cols, cols, 1.0, "uniform", seed=(rows, cols, 1))
    d = decompose(a, cfg)
    return lambda: tasd_matmul(d, b)


def time_case(fn, repeats):
    fn()  # warm caches (and the JIT, on the compiled side)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not HAS_NUMBA:
        print("numba is not importable; nothing to compare against")
        return 1

    results = []
    for label, kind, dims, cfg_name in CASES:
        timings = {}
        for backend in ("numpy", "numba"):
            os.environ["TASD_BACKEND"] = backend
            assert active_backend() == backend
            timings[backend] = time_case(build_inputs(kind, dims, cfg_name), args.repeats)
        results.append((label, timings["numpy"], timings["numba"]))
    os.environ.pop("TASD_BACKEND", None)

    width = max(len(label) for label, _, _ in results)
    print(f"{'case':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>7}")
    for label, t_np, t_nb in results:
        print(
            f"{label:<{width}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  "
            f"{t_np / t_nb:>6.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
