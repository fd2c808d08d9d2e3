"""Shared test fixtures and independent reference implementations.

The reference implementations here deliberately use different algorithms
than the package (pure-Python loops, exhaustive subset search) so that
agreement between the two is meaningful evidence of correctness.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from tasd import TasdConfig, new_dense

# hand matrix with mixed block occupancy: 37.5% sparse, entry sum 25,
# lossless under 2:4 followed by 2:8
EXAMPLE_2X8 = new_dense(
    2,
    8,
    [
        [1, 2, 3, 1, 0, 4, 0, 2],
        [5, 0, 2, 2, 3, 0, 0, 0],
    ],
)

# valid series for randomized tests: single and multi term, same and
# mixed m, partial-block-friendly
CONFIG_POOL = [
    "1:4",
    "2:4",
    "3:4",
    "4:4",
    "1:4+1:4",
    "2:4+1:4",
    "2:4+2:4",
    "1:8",
    "2:8",
    "4:8",
    "2:8+1:8",
    "4:8+1:8",
    "4:8+2:8",
    "4:8+3:8+1:8",
    "8:8",
    "2:4+2:8",
    "2:4+2:8+2:16",
    "1:2+1:4+1:8",
    "2:16",
]

# same-m series whose term capacities sum to m: always lossless
LOSSLESS_POOL = [
    "4:4",
    "2:4+2:4",
    "3:4+1:4",
    "1:4+1:4+2:4",
    "8:8",
    "4:8+4:8",
    "4:8+2:8+2:8",
    "2:2",
    "1:2+1:2",
]


@pytest.fixture
def example_2x8():
    return EXAMPLE_2X8


def pool_configs():
    return [TasdConfig.parse(s) for s in CONFIG_POOL]


def lossless_configs():
    return [TasdConfig.parse(s) for s in LOSSLESS_POOL]


# ---------------------------------------------------------------------------
# reference implementations


def py_matmul(a, b) -> np.ndarray:
    """Triple-loop product accumulating in ascending-k order.

    Matches the package kernels' pinned summation order, so results must
    agree to the last bit.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rows, kk = a.shape
    cols = b.shape[1]
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(kk):
            v = float(a[i, k])
            for j in range(cols):
                out[i][j] += v * float(b[k, j])
    return np.array(out, dtype=np.float64).reshape(rows, cols)


def py_extract(mat, n: int, m: int):
    """Greedy per-block reference: keep the largest-magnitude non-zeros,
    at most n per m-wide block, ties to the lowest column."""
    arr = np.asarray(mat, dtype=np.float64)
    term = np.zeros_like(arr)
    residual = arr.copy()
    rows, cols = arr.shape
    for r in range(rows):
        for start in range(0, cols, m):
            block = range(start, min(start + m, cols))
            nonzero = [c for c in block if arr[r, c] != 0.0]
            nonzero.sort(key=lambda c: (-abs(arr[r, c]), c))
            for c in nonzero[:n]:
                term[r, c] = arr[r, c]
                residual[r, c] = 0.0
    return term, residual


def max_subset_magnitude(values, k: int) -> float:
    """Largest total magnitude any k non-zeros of ``values`` can reach,
    found by exhaustive enumeration (use on blocks of width <= 8)."""
    magnitudes = [abs(float(v)) for v in values if v != 0.0]
    k = min(k, len(magnitudes))
    if k == 0:
        return 0.0
    return max(sum(combo) for combo in itertools.combinations(magnitudes, k))


def nnz(arr) -> int:
    return int(np.count_nonzero(np.asarray(arr)))
