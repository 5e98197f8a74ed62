import time

import numpy as np
import pytest
from scipy import stats as sps

from complex_stiffness.errors import DegenerateFitError, IncompleteGridError
from complex_stiffness.model import ModelKind
from complex_stiffness.stats import (
    Comparison,
    RssTable,
    Scope,
    aggregate_rss,
    betainc,
    degrees_of_freedom,
    f_cdf,
    f_critical,
    f_statistic,
    f_test_suite,
)

KINDS = (ModelKind.M1, ModelKind.M2, ModelKind.M3)


def uniform_table(n_sub, n_exp, values):
    t = RssTable(n=10)
    for s in range(n_sub):
        for e in range(1, n_exp + 1):
            for kind, v in zip(KINDS, values):
                t.add(f"S{s}", e, kind, v)
    return t


@pytest.mark.parametrize(
    "d1,d2,expected",
    [(9, 144, 1.9454501904), (10, 160, 1.8903051710), (90, 1440, 1.2680543104)],
)
def test_critical_values_match_reference(d1, d2, expected):
    # expected values frozen from scipy.stats.f.isf
    assert f_critical(0.05, d1, d2) == pytest.approx(expected, abs=1e-6)


def test_critical_value_runtime():
    f_critical.cache_clear()
    t0 = time.perf_counter()
    for d in [(9, 144), (10, 160), (90, 1440)]:
        f_critical(0.05, *d)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.parametrize("p", [0.001, 0.01, 0.05, 0.2, 0.5, 0.9])
@pytest.mark.parametrize("d1,d2", [(1, 1), (1, 10), (3, 7), (9, 144), (90, 1440), (200, 5)])
def test_cdf_quantile_round_trip(p, d1, d2):
    x = f_critical(p, d1, d2)
    assert f_cdf(x, d1, d2) == pytest.approx(1 - p, abs=1e-6)
    assert x == pytest.approx(sps.f.isf(p, d1, d2), rel=1e-6)


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.9), (45.0, 720.0, 0.05), (5.0, 72.0, 0.12)])
def test_incomplete_beta_against_reference(a, b, x):
    assert betainc(a, b, x) == pytest.approx(sps.beta.cdf(x, a, b), abs=1e-12)


def test_aggregation():
    assert aggregate_rss(uniform_table(1, 1, (4.0, 3.0, 2.0)), ModelKind.M2, Scope.ALL) == 3.0
    t = uniform_table(10, 9, (1.0, 1.0, 1.0))
    assert aggregate_rss(t, ModelKind.M1, Scope.SUBJECT, "S3") == pytest.approx(9.0)
    assert aggregate_rss(t, ModelKind.M1, Scope.EXPERIMENT, 4) == pytest.approx(10.0)
    assert aggregate_rss(t, ModelKind.M1, Scope.ALL) == pytest.approx(90.0)


def test_aggregation_matches_direct_loop(rng):
    t = RssTable()
    vals = rng.uniform(0.1, 5, size=(4, 5, 3))
    for s in range(4):
        for e in range(5):
            for k, kind in enumerate(KINDS):
                t.add(s, e, kind, vals[s, e, k])
    for k, kind in enumerate(KINDS):
        assert aggregate_rss(t, kind, Scope.ALL) == pytest.approx(vals[:, :, k].sum())
        for s in range(4):
            assert aggregate_rss(t, kind, Scope.SUBJECT, s) == pytest.approx(vals[s, :, k].sum())
        for e in range(5):
            assert aggregate_rss(t, kind, Scope.EXPERIMENT, e) == pytest.approx(vals[:, e, k].sum())


def test_incomplete_grid_names_cell():
    t = uniform_table(2, 2, (1.0, 1.0, 1.0))
    del t.cells[("S1", 2, ModelKind.M2)]
    with pytest.raises(IncompleteGridError, match="S1"):
        aggregate_rss(t, ModelKind.M1, Scope.ALL)


def test_degrees_of_freedom():
    t = uniform_table(10, 9, (2.0, 1.0, 1.0))
    assert degrees_of_freedom(t, Scope.SUBJECT) == (9, 144)
    assert degrees_of_freedom(t, Scope.EXPERIMENT) == (10, 160)
    assert degrees_of_freedom(t, Scope.ALL) == (90, 1440)


def test_f_statistic_examples():
    t = uniform_table(10, 9, (2.0, 1.0, 1.0))
    rep = f_statistic(t, Scope.SUBJECT, Comparison.M1_M3, key="S0")
    assert rep.F == pytest.approx(16.0)
    assert rep.significant
    assert f_statistic(t, Scope.SUBJECT, Comparison.M2_M3, key="S0").F == 0.0
    t.cells[("S0", 1, ModelKind.M3)] = 0.0
    for e in range(2, 10):
        t.cells[("S0", e, ModelKind.M3)] = 0.0
    with pytest.raises(DegenerateFitError):
        f_statistic(t, Scope.SUBJECT, Comparison.M1_M3, key="S0")


def test_hand_fixture():
    # 2 subjects x 2 experiments, n = 5 samples: d2 = 6 per fit
    t = RssTable(n=5)
    cells = {("A", 1): (3.0, 1.5, 1.0), ("A", 2): (5.0, 2.5, 2.0), ("B", 1): (4.0, 1.2, 1.0), ("B", 2): (2.0, 1.1, 1.0)}
    for (s, e), v in cells.items():
        for kind, r in zip(KINDS, v):
            t.add(s, e, kind, r)
    rep = f_statistic(t, Scope.ALL, Comparison.M1_M3)
    # R1 = 14, R3 = 5, d1 = 4, d2 = 24: F = 9/5 * 6
    assert rep.df == (4, 24)
    assert rep.F == pytest.approx(10.8)
    rep = f_statistic(t, Scope.SUBJECT, Comparison.M2_M3, key="A")
    # R2 = 4, R3 = 3, d = (2, 12): F = 1/3 * 6
    assert rep.F == pytest.approx(2.0)
    assert len(f_test_suite(t)) == 2 * (2 + 2 + 1)


def test_f_strictly_increasing_in_reduced_rss():
    Fs = []
    for r in np.linspace(1.0, 3.0, 25):
        Fs.append(f_statistic(uniform_table(3, 3, (r, 1.0, 1.0)), Scope.ALL, Comparison.M1_M3).F)
    assert np.all(np.diff(Fs) > 0)


def test_table_round_trip():
    t = uniform_table(2, 3, (3.0, 2.0, 1.0))
    back = RssTable.from_dict(t.to_dict())
    assert back.cells == t.cells and back.n == t.n


# --- statistical behaviour on synthetic M2 cohorts -------------------------


@pytest.mark.slow
def test_pooled_m1_comparison_is_significant(cohort_f_values):
    F, _, _ = cohort_f_values
    assert np.mean(F[:, 0] > 1.27) >= 0.95


@pytest.mark.slow
def test_pooled_m2_comparison_stays_below_1_5(cohort_f_values):
    F, _, _ = cohort_f_values
    frac = np.mean(F[:, 1] < 1.5)
    assert frac >= 0.95, f"F_all(M2-vs-M3) < 1.5 in only {frac:.0%} of seeds; values {np.round(np.sort(F[:, 1]), 2)}"
