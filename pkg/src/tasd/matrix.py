"""Dense matrices, N:M sparsity patterns, series configurations, the packed
structured-sparse format, and matrix file IO.

A dense matrix is a read-only, C-contiguous float64 ndarray; ``new_dense``
is the validating constructor. N:M blocks run along rows (contiguous
columns). When the column count is not a multiple of m, the trailing
partial block is held to the same at-most-n bound.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    BadHeader,
    BadMagic,
    CorruptIndices,
    DimensionMismatch,
    NonFiniteEntry,
    NotCompliant,
)

DenseMatrix = np.ndarray

MAGIC = b"TASDMAT1"
_HEADER = struct.Struct("<QQ")
_PATTERN_RE = re.compile(r"^\s*(\d+)\s*:\s*(\d+)\s*$")


def new_dense(rows: int, cols: int, data) -> DenseMatrix:
    """Build a validated rows x cols matrix from flat or 2-D data."""
    if rows <= 0 or cols <= 0:
        raise DimensionMismatch(f"matrix dims must be positive, got {rows}x{cols}")
    arr = np.asarray(data, dtype=np.float64)
    if arr.size != rows * cols:
        raise DimensionMismatch(
            f"need {rows * cols} entries for a {rows}x{cols} matrix, got {arr.size}"
        )
    if arr.ndim == 2 and arr.shape != (rows, cols):
        raise DimensionMismatch(f"data shaped {arr.shape}, expected ({rows}, {cols})")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntry("matrix entries must be finite")
    out = np.array(arr, dtype=np.float64, order="C").reshape(rows, cols)
    out.setflags(write=False)
    return out


def as_matrix(mat) -> DenseMatrix:
    """Coerce an array-like to a 2-D float64 ndarray (no copy if possible)."""
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={arr.ndim}")
    return arr


def freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def sparsity(mat) -> float:
    """Fraction of entries that are exactly zero."""
    arr = as_matrix(mat)
    return float(arr.size - np.count_nonzero(arr)) / arr.size


@dataclass(frozen=True)
class NmPattern:
    """At most ``n`` non-zeros in each block of ``m`` consecutive columns."""

    n: int
    m: int

    def __post_init__(self):
        if not (isinstance(self.n, int) and isinstance(self.m, int)):
            raise ValueError("pattern n and m must be integers")
        if not 1 <= self.n <= self.m:
            raise ValueError(f"pattern needs 1 <= n <= m, got {self.n}:{self.m}")

    @property
    def density(self) -> float:
        return self.n / self.m

    @property
    def is_dense(self) -> bool:
        return self.n == self.m

    def __str__(self) -> str:
        return f"{self.n}:{self.m}"

    @classmethod
    def parse(cls, text: str) -> "NmPattern":
        match = _PATTERN_RE.match(text)
        if not match:
            raise ValueError(f"cannot parse pattern {text!r}, expected 'N:M'")
        return cls(int(match.group(1)), int(match.group(2)))


@dataclass(frozen=True)
class TasdConfig:
    """An ordered series of N:M patterns applied term by term."""

    terms: tuple[NmPattern, ...]
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("a config needs at least one term")
        for term in self.terms:
            if not isinstance(term, NmPattern):
                raise ValueError(f"config terms must be NmPattern, got {term!r}")
        if self.same_m and sum(t.n for t in self.terms) > self.terms[0].m:
            raise ValueError(
                f"same-m config {self.canonical()} has sum(n) > m"
            )

    @property
    def same_m(self) -> bool:
        return len({t.m for t in self.terms}) == 1

    @property
    def coverage(self) -> float:
        return min(1.0, sum(t.n / t.m for t in self.terms))

    @property
    def approximated_sparsity(self) -> float:
        return 1.0 - self.coverage

    @property
    def is_dense(self) -> bool:
        return len(self.terms) == 1 and self.terms[0].is_dense

    @property
    def sum_n(self) -> int:
        return sum(t.n for t in self.terms)

    def canonical(self) -> str:
        return "+".join(str(t) for t in self.terms)

    def __str__(self) -> str:
        return self.label or self.canonical()

    @classmethod
    def parse(cls, text: str) -> "TasdConfig":
        parts = text.split("+")
        if not parts or not text.strip():
            raise ValueError("empty config string")
        return cls(tuple(NmPattern.parse(p) for p in parts))


def config_of(spec) -> TasdConfig:
    """Accept a TasdConfig, a pattern, or a config string like '4:8+1:8'."""
    if isinstance(spec, TasdConfig):
        return spec
    if isinstance(spec, NmPattern):
        return TasdConfig((spec,))
    if isinstance(spec, str):
        return TasdConfig.parse(spec)
    raise ValueError(f"cannot interpret {spec!r} as a config")


@dataclass(frozen=True, eq=False)
class NmCompressed:
    """One structured term: packed values plus intra-block column indices.

    values:  (rows, blocks_per_row, n) float64, zero-padded.
    indices: (rows, blocks_per_row, n) int64; -1 marks an unused slot.
    Valid slots within a block carry strictly increasing indices.
    """

    pattern: NmPattern
    rows: int
    cols: int
    values: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise DimensionMismatch("compressed dims must be positive")
        shape = (self.rows, self.blocks_per_row, self.pattern.n)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if values.shape != shape or indices.shape != shape:
            raise DimensionMismatch(
                f"packed arrays must be shaped {shape}, got "
                f"{values.shape} and {indices.shape}"
            )
        values.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "indices", indices)

    @property
    def blocks_per_row(self) -> int:
        return -(-self.cols // self.pattern.m)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.indices >= 0))


def is_compliant(mat, pattern: NmPattern) -> bool:
    """True iff every m-block of every row holds at most n non-zeros."""
    arr = as_matrix(mat)
    rows, cols = arr.shape
    blocks = -(-cols // pattern.m)
    padded = np.zeros((rows, blocks * pattern.m))
    padded[:, :cols] = arr
    per_block = np.count_nonzero(padded.reshape(rows, blocks, pattern.m), axis=2)
    return bool(np.all(per_block <= pattern.n))


def encode(mat, pattern: NmPattern) -> NmCompressed:
    """Pack a pattern-compliant matrix; decode(encode(mat)) == mat exactly."""
    arr = as_matrix(mat)
    if not is_compliant(arr, pattern):
        raise NotCompliant(f"matrix is not {pattern} compliant")
    rows, cols = arr.shape
    blocks = -(-cols // pattern.m)
    padded = np.zeros((rows, blocks * pattern.m))
    padded[:, :cols] = arr
    values = np.zeros((rows, blocks, pattern.n))
    indices = np.full((rows, blocks, pattern.n), -1, dtype=np.int64)
    _kernels.extract_term_blocks(padded, values, indices, pattern.n, pattern.m)
    # a compliant matrix is consumed whole: nothing may remain
    assert not padded.any()
    return NmCompressed(pattern, rows, cols, values, indices)


def decode(c: NmCompressed) -> DenseMatrix:
    """Expand a packed term back to its dense form."""
    m = c.pattern.m
    valid = c.indices >= 0
    stray = c.indices[valid]
    if stray.size and (int(stray.min()) < 0 or int(stray.max()) >= m):
        raise CorruptIndices("block index out of range")
    if np.any(c.indices < -1):
        raise CorruptIndices("negative index is not the padding sentinel")
    # strictly increasing across the valid slots of each block
    last = np.full((c.rows, c.blocks_per_row), -1, dtype=np.int64)
    for s in range(c.pattern.n):
        cur = c.indices[:, :, s]
        here = cur >= 0
        if np.any(cur[here] <= last[here]):
            raise CorruptIndices("block indices must be strictly increasing")
        last = np.where(here, cur, last)
    r, blk, _ = np.nonzero(valid)
    cols = blk * m + c.indices[valid]
    if cols.size and int(cols.max()) >= c.cols:
        raise CorruptIndices("index lands beyond the final partial block")
    out = np.zeros((c.rows, c.cols))
    out[r, cols] = c.values[valid]
    return freeze(out)


# ---------------------------------------------------------------------------
# file IO


def save_matrix(mat, path) -> None:
    """Write the binary matrix format (magic, u64 dims, f64 payload)."""
    arr = as_matrix(mat)
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(rows, cols))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_matrix(path) -> DenseMatrix:
    """Read a matrix file; binary by magic sniff, CSV otherwise."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] == MAGIC:
        return _parse_binary(raw)
    return _parse_csv(raw, path)


def _parse_binary(raw: bytes) -> DenseMatrix:
    head = len(MAGIC) + _HEADER.size
    if len(raw) < head:
        raise BadHeader("truncated header")
    rows, cols = _HEADER.unpack_from(raw, len(MAGIC))
    if rows == 0 or cols == 0:
        raise BadHeader(f"degenerate dims {rows}x{cols}")
    expected = head + rows * cols * 8
    if len(raw) != expected:
        raise BadHeader(
            f"payload is {len(raw) - head} bytes, expected {expected - head}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=head).reshape(rows, cols)
    return new_dense(rows, cols, data.copy())


def _parse_csv(raw: bytes, path) -> DenseMatrix:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise BadMagic(f"{path}: neither a matrix binary nor CSV") from None
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise BadMagic(f"{path}: empty file")
    table = []
    for line in lines:
        try:
            table.append([float(cell) for cell in line.split(",")])
        except ValueError:
            raise BadMagic(f"{path}: neither a matrix binary nor CSV") from None
    width = len(table[0])
    if any(len(row) != width for row in table):
        raise BadHeader(f"{path}: ragged CSV rows")
    return new_dense(len(table), width, table)
