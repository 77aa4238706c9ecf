import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from moss import stats
from moss.stats import ScoreMatrix

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_hand_values():
    assert stats.iqm(np.arange(1, 9)) == 4.5
    assert stats.trimmed_mean(np.arange(1, 11), 0.1) == 5.5
    assert stats.optimality_gap([0.5, 1.5]) == 0.25
    assert stats.optimality_gap([1.0, 2.0]) == 0.0
    assert stats.optimality_gap([0.0, 0.0]) == 1.0
    assert stats.trimmed_mean([1.0, 2.0, 6.0], 0.0) == 3.0


def test_iqm_needs_four():
    with pytest.raises(ValueError):
        stats.iqm([1, 2, 3])
    with pytest.raises(ValueError):
        stats.trimmed_mean([], 0.1)
    with pytest.raises(ValueError):
        stats.trimmed_mean([1, 2], 0.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=4, max_size=40))
def test_iqm_properties(values):
    v = np.array(values)
    assert stats.iqm(v) == pytest.approx(oracles.iqm_by_hand(v), rel=1e-9, abs=1e-9)
    assert v.min() - 1e-9 <= stats.iqm(v) <= v.max() + 1e-9
    perm = np.random.default_rng(0).permutation(len(v))
    assert stats.iqm(v[perm]) == pytest.approx(stats.iqm(v), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=1, max_size=40), st.sampled_from([0.0, 0.1, 0.2, 0.25]))
def test_trimmed_mean_properties(values, fraction):
    v = np.array(values)
    got = stats.trimmed_mean(v, fraction)
    assert got == pytest.approx(oracles.trimmed_by_hand(v, fraction), rel=1e-9, abs=1e-9)
    assert v.min() - 1e-9 <= got <= v.max() + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 3), min_size=1, max_size=20), st.integers(0, 19), st.floats(0, 1))
def test_optimality_gap_properties(values, i, bump):
    v = np.array(values)
    og = stats.optimality_gap(v)
    assert 0.0 <= og <= 1.0
    w = v.copy()
    w[i % len(w)] += bump
    assert stats.optimality_gap(w) <= og + 1e-12


def test_constant_vectors():
    assert stats.iqm([3.0] * 9) == 3.0
    assert stats.trimmed_mean([2.5] * 7, 0.1) == 2.5


def test_bootstrap_ci(rng):
    m = ScoreMatrix(rng.uniform(0, 2, (8, 3)), np.ones(3))
    lo, hi = stats.stratified_bootstrap_ci(m, stats.iqm, 500, seed=3)
    assert lo <= stats.iqm(m.normalized) <= hi
    assert (lo, hi) == stats.stratified_bootstrap_ci(m, stats.iqm, 500, seed=3)
    const = ScoreMatrix(np.full((5, 2), 0.7), np.ones(2))
    lo, hi = stats.stratified_bootstrap_ci(const, stats.optimality_gap, 200, seed=0)
    assert lo == hi == pytest.approx(0.3)


def test_bootstrap_stratification_keeps_task_columns():
    # column 0 always 1, column 1 always 3: every resample has mean 2
    m = np.column_stack([np.ones(6), np.full(6, 3.0)])
    lo, hi = stats.stratified_bootstrap_ci(m, lambda x: float(np.mean(x)), 100, seed=1)
    assert lo == hi == 2.0


def test_score_matrix_validation():
    with pytest.raises(ValueError):
        ScoreMatrix(np.ones((2, 2)), np.ones(3))
    with pytest.raises(ValueError):
        ScoreMatrix(np.ones((2, 2)), np.array([1.0, 0.0]))
    np.testing.assert_array_equal(ScoreMatrix([[2.0, 4.0]], [2.0, 8.0]).normalized, [[1.0, 0.5]])


def test_performance_profile():
    assert stats.performance_profile([0.2, 0.6, 1.2], [0.5, 1.0]) == [(0.5, 2 / 3), (1.0, 1 / 3)]


def test_csv_pipeline(tmp_path):
    res = tmp_path / "results.csv"
    with open(res, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(stats.RESULT_FIELDS)
        for seed in range(4):
            w.writerow(("moss", "a", seed, 10.0 + seed))
            w.writerow(("moss", "b", seed, 5.0))
            w.writerow(("cic", "a", seed, 8.0))
            w.writerow(("cic", "b", seed, 4.0))
    exp = tmp_path / "expert.csv"
    exp.write_text("task,score\na,10\nb,5\n")
    matrices = stats.score_matrices(stats.read_results([res]), stats.read_expert(exp))
    assert set(matrices) == {"moss", "cic"}
    assert matrices["moss"].scores.shape == (4, 2)
    report = stats.summarize(matrices, resamples=100)
    by = {r["method"]: r for r in report}
    assert by["cic"]["optimality_gap"] == pytest.approx(0.2)
    assert by["moss"]["optimality_gap"] == 0.0
    table = stats.format_table(report)
    assert "moss" in table and "IQM" in table
