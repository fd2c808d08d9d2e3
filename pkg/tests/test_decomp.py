"""Greedy series decomposition, its loss metrics, and the synthetic
drop-rate sweep."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tasd import (
    NmPattern,
    TasdConfig,
    approximate,
    decode,
    decompose,
    drop_metrics,
    extract_term,
    is_compliant,
    random_matrix,
    sparsity,
    sweep_synthetic,
)
from tasd.decomp import SWEEP_CSV_HEADER, render_sweep_csv

from conftest import (
    lossless_configs,
    max_subset_magnitude,
    nnz,
    pool_configs,
    py_extract,
)

finite_entries = st.one_of(
    st.integers(-4, 4).map(float),
    st.floats(-100, 100, allow_nan=False, allow_infinity=False, width=64),
)


def matrices(max_side=16):
    return st.integers(1, max_side).flatmap(
        lambda r: st.integers(1, max_side).flatmap(
            lambda c: hnp.arrays(np.float64, (r, c), elements=finite_entries)
        )
    )


small_patterns = st.integers(1, 8).flatmap(
    lambda m: st.integers(1, m).map(lambda n: NmPattern(n, m))
)


# ---------------------------------------------------------------------------
# single-term extraction


class TestExtractTerm:
    def test_keeps_two_largest(self):
        term, residual = extract_term(np.array([[4.0, 3.0, 2.0, 1.0]]), NmPattern(2, 4))
        assert decode(term).tolist() == [[4.0, 3.0, 0.0, 0.0]]
        assert residual.tolist() == [[0.0, 0.0, 2.0, 1.0]]

    def test_compliant_block_is_taken_whole(self):
        term, residual = extract_term(np.array([[5.0, 0.0, 3.0, 0.0]]), NmPattern(2, 4))
        assert decode(term).tolist() == [[5.0, 0.0, 3.0, 0.0]]
        assert not residual.any()

    def test_magnitude_is_absolute_value(self):
        term, residual = extract_term(
            np.array([[-9.0, 1.0, 2.0, 3.0]]), NmPattern(1, 4)
        )
        assert decode(term).tolist() == [[-9.0, 0.0, 0.0, 0.0]]
        assert residual.tolist() == [[0.0, 1.0, 2.0, 3.0]]

    def test_ties_keep_lowest_column(self):
        term, _ = extract_term(np.array([[2.0, -2.0, 2.0, 1.0]]), NmPattern(2, 4))
        assert decode(term).tolist() == [[2.0, -2.0, 0.0, 0.0]]

    def test_zeros_are_never_extracted(self):
        term, residual = extract_term(np.array([[0.0, 0.0, 1.0, 0.0]]), NmPattern(2, 4))
        assert term.nnz == 1
        assert decode(term).tolist() == [[0.0, 0.0, 1.0, 0.0]]
        assert not residual.any()

    @given(matrices(), small_patterns)
    @settings(max_examples=120, deadline=None)
    def test_matches_pure_python_reference(self, mat, pattern):
        term, residual = extract_term(mat, pattern)
        ref_term, ref_residual = py_extract(mat, pattern.n, pattern.m)
        assert np.array_equal(decode(term), ref_term)
        assert np.array_equal(residual, ref_residual)

    @given(matrices(max_side=10), small_patterns)
    @settings(max_examples=80, deadline=None)
    def test_extracted_set_beats_every_subset(self, mat, pattern):
        term, _ = extract_term(mat, pattern)
        dense = decode(term)
        for r in range(mat.shape[0]):
            for start in range(0, mat.shape[1], pattern.m):
                block = np.asarray(mat)[r, start : start + pattern.m]
                kept = dense[r, start : start + pattern.m]
                kept_total = float(np.abs(kept).sum())
                best = max_subset_magnitude(block, nnz(kept))
                assert kept_total == pytest.approx(best, abs=1e-12)
                assert nnz(kept) == min(pattern.n, nnz(block))


# ---------------------------------------------------------------------------
# series decomposition


class TestDecompose:
    def test_mixed_blocks_lossless_series(self, example_2x8):
        d = decompose(example_2x8, "2:4+2:8")
        assert not d.residual.any()
        total = decode(d.terms[0]) + decode(d.terms[1])
        assert np.array_equal(total, example_2x8)

    def test_first_term_coverage(self, example_2x8):
        d = decompose(example_2x8, "2:4")
        metrics = drop_metrics(d)
        # 7 of 10 non-zeros kept, 21 of 25 magnitude kept
        assert metrics.dropped_nnz_fraction == pytest.approx(0.3)
        assert metrics.dropped_magnitude_fraction == pytest.approx(0.16)
        assert metrics.retained_magnitude_fraction == pytest.approx(0.84)

    def test_zero_matrix_everything_zero(self):
        d = decompose(np.zeros((4, 8)), "4:8+1:8")
        assert all(t.nnz == 0 for t in d.terms)
        assert not d.residual.any()
        metrics = drop_metrics(d)
        assert metrics.dropped_nnz_fraction == 0.0
        assert metrics.dropped_magnitude_fraction == 0.0
        assert metrics.mse == 0.0

    def test_full_capacity_always_lossless(self):
        rng = np.random.default_rng(3)
        mat = rng.normal(size=(8, 8))
        d = decompose(mat, "4:8+3:8+1:8")
        assert not d.residual.any()

    def test_terms_are_pattern_compliant(self):
        rng = np.random.default_rng(5)
        mat = rng.normal(size=(6, 13))
        d = decompose(mat, "2:4+1:4")
        for term, pattern in zip(d.terms, d.config.terms):
            assert is_compliant(decode(term), pattern)

    @given(matrices(), st.sampled_from(pool_configs()))
    @settings(max_examples=120, deadline=None)
    def test_exact_additivity(self, mat, config):
        mat = mat + 0.0  # normalize -0.0 so bitwise comparison is fair
        d = decompose(mat, config)
        total = np.zeros_like(mat)
        for term in d.terms:
            total += decode(term)
        total += d.residual
        assert total.tobytes() == mat.tobytes()

    @given(matrices(), st.sampled_from(lossless_configs()))
    @settings(max_examples=60, deadline=None)
    def test_capacity_sum_m_is_lossless(self, mat, config):
        assert not decompose(mat, config).residual.any()

    @given(matrices(), st.sampled_from(pool_configs()), small_patterns)
    @settings(max_examples=60, deadline=None)
    def test_appending_a_term_shrinks_residual(self, mat, config, extra):
        terms = config.terms + (extra,)
        if len({t.m for t in terms}) == 1:
            assume(sum(t.n for t in terms) <= terms[0].m)
        base = decompose(mat, config)
        extended = decompose(mat, TasdConfig(terms))
        assert np.abs(extended.residual).sum() <= np.abs(base.residual).sum()
        assert nnz(extended.residual) <= nnz(base.residual)

    @given(matrices(max_side=10))
    @settings(max_examples=40, deadline=None)
    def test_same_m_order_does_not_change_approximation(self, mat):
        fwd = approximate(mat, "4:8+2:8")
        rev = approximate(mat, "2:8+4:8")
        assert np.array_equal(fwd, rev)

    def test_supports_are_disjoint(self):
        rng = np.random.default_rng(11)
        mat = rng.normal(size=(5, 17))
        d = decompose(mat, "2:8+1:8")
        masks = [decode(t) != 0.0 for t in d.terms] + [d.residual != 0.0]
        for i in range(len(masks)):
            for j in range(i + 1, len(masks)):
                assert not (masks[i] & masks[j]).any()


class TestApproximate:
    def test_single_term(self):
        out = approximate(np.array([[4.0, 3.0, 2.0, 1.0]]), "2:4")
        assert out.tolist() == [[4.0, 3.0, 0.0, 0.0]]

    def test_compliant_matrix_unchanged(self):
        mat = np.array([[5.0, 0.0, 3.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
        assert np.array_equal(approximate(mat, "2:4"), mat)

    def test_repeated_pattern_recovers_everything(self):
        out = approximate(np.array([[4.0, 3.0, 2.0, 1.0]]), "2:4+2:4")
        assert out.tolist() == [[4.0, 3.0, 2.0, 1.0]]

    def test_equals_source_minus_residual(self):
        rng = np.random.default_rng(2)
        mat = rng.normal(size=(7, 19))
        d = decompose(mat, "2:4+2:8")
        assert np.array_equal(approximate(mat, "2:4+2:8"), mat - d.residual)


class TestDropMetrics:
    def test_half_dropped(self):
        metrics = drop_metrics(decompose(np.array([[4.0, 3.0, 2.0, 1.0]]), "2:4"))
        assert metrics.dropped_nnz_fraction == 0.5
        assert metrics.dropped_magnitude_fraction == pytest.approx(0.3)
        assert metrics.mse == pytest.approx((4.0 + 1.0) / 4.0)
        assert metrics.retained_magnitude_fraction == pytest.approx(0.7)

    def test_full_density_single_term_drop_is_exact(self):
        mat = random_matrix(64, 64, 1.0, "uniform", seed=9)
        metrics = drop_metrics(decompose(mat, "2:4"))
        assert metrics.dropped_nnz_fraction == 0.5

    def test_lossless_metrics_are_zero(self, example_2x8):
        metrics = drop_metrics(decompose(example_2x8, "2:4+2:8"))
        assert metrics.dropped_nnz_fraction == 0.0
        assert metrics.dropped_magnitude_fraction == 0.0
        assert metrics.mse == 0.0
        assert metrics.retained_magnitude_fraction == 1.0


# ---------------------------------------------------------------------------
# synthetic matrices


class TestRandomMatrix:
    def test_deterministic_per_seed(self):
        a = random_matrix(32, 32, 0.5, "normal", seed=42)
        b = random_matrix(32, 32, 0.5, "normal", seed=42)
        assert a.tobytes() == b.tobytes()
        c = random_matrix(32, 32, 0.5, "normal", seed=43)
        assert a.tobytes() != c.tobytes()

    def test_tuple_seeds_split_streams(self):
        a = random_matrix(16, 16, 0.5, "uniform", seed=(0, 1))
        b = random_matrix(16, 16, 0.5, "uniform", seed=(1, 0))
        assert a.tobytes() != b.tobytes()

    def test_density_zero_and_one(self):
        assert not random_matrix(8, 8, 0.0, "uniform", seed=1).any()
        assert sparsity(random_matrix(64, 64, 1.0, "uniform", seed=1)) == 0.0

    def test_density_is_respected_statistically(self):
        mat = random_matrix(256, 256, 0.3, "uniform", seed=5)
        assert 1.0 - sparsity(mat) == pytest.approx(0.3, abs=0.02)

    def test_normal_spread(self):
        mat = random_matrix(256, 256, 1.0, "normal", seed=5)
        assert np.std(mat) == pytest.approx(1.0 / 3.0, abs=0.01)
        assert np.mean(mat) == pytest.approx(0.0, abs=0.01)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            random_matrix(4, 4, 1.5, "uniform", seed=0)
        with pytest.raises(ValueError):
            random_matrix(4, 4, 0.5, "cauchy", seed=0)


class TestSweepSynthetic:
    GRID = dict(
        dims=(32, 32),
        densities=(0.25, 0.75),
        distributions=("uniform", "normal"),
        configs=("2:4", "2:4+2:8"),
        seeds=range(3),
    )

    def test_row_count_and_order(self):
        table = sweep_synthetic(**self.GRID)
        assert len(table) == 2 * 2 * 2 * 3
        keys = [
            (r["density"], r["distribution"], r["config"], r["seed"]) for r in table
        ]
        assert keys == sorted(
            keys,
            key=lambda k: (
                self.GRID["densities"].index(k[0]),
                self.GRID["distributions"].index(k[1]),
                ("2:4", "2:4+2:8").index(k[2]),
                k[3],
            ),
        )

    def test_deterministic_and_worker_independent(self):
        one = sweep_synthetic(**self.GRID, workers=1)
        four = sweep_synthetic(**self.GRID, workers=4)
        assert one == four
        assert render_sweep_csv(one) == render_sweep_csv(four)

    def test_master_seed_shifts_the_stream(self):
        base = sweep_synthetic(**self.GRID)
        other = sweep_synthetic(**self.GRID, master_seed=123)
        assert base != other

    def test_full_density_single_term_cells_exact(self):
        table = sweep_synthetic(
            (32, 32), (1.0,), ("uniform",), ("2:4",), seeds=range(2)
        )
        assert all(r["dropped_nnz"] == 0.5 for r in table)

    def test_csv_shape(self):
        table = sweep_synthetic(
            (16, 16), (0.5,), ("uniform",), ("2:4",), seeds=range(2)
        )
        text = render_sweep_csv(table)
        lines = text.strip().split("\n")
        assert lines[0] == SWEEP_CSV_HEADER
        assert len(lines) == 1 + len(table)
        first = lines[1].split(",")
        assert first[0] == "0.5"
        assert first[1] == "uniform"
        assert first[2] == "2:4"
        # floats render in shortest round-trip form
        assert float(first[4]) == table[0]["dropped_nnz"]
