import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from complex_stiffness.errors import DomainError
from complex_stiffness.scaling import PowerLaw, fit_power_law, geometric_average, predict_H

from .conftest import TABLE_AVERAGES

EXP1_K_COLUMN = [12.68, 28.67, 17.76, 16.88, 11.55, 13.41, 17.95, 17.37, 18.85, 13.77]


def test_table_average_fit():
    law = fit_power_law(TABLE_AVERAGES)
    # frozen from an independent linregress on log10 values
    assert law.beta0 == pytest.approx(-0.229399176, abs=1e-8)
    assert law.beta1 == pytest.approx(0.901731232, abs=1e-8)
    assert law.r2 == pytest.approx(0.954882357, abs=1e-8)


def test_exact_line_and_two_points():
    K = np.array([2.0, 5.0, 40.0, 300.0])
    law = fit_power_law(zip(K, 10**-0.5 * K))
    assert (law.beta0, law.beta1, law.r2) == pytest.approx((-0.5, 1.0, 1.0), abs=1e-12)
    two = fit_power_law([(3.0, 1.0), (30.0, 5.0)])
    assert two.r2 == pytest.approx(1.0)
    assert predict_H(two, 3.0) == pytest.approx(1.0)
    assert predict_H(two, 30.0) == pytest.approx(5.0)


def test_fit_rejects_bad_input():
    with pytest.raises(DomainError):
        fit_power_law([(1.0, 1.0), (2.0, -1.0)])
    with pytest.raises(DomainError):
        fit_power_law([(1.0, 1.0)])
    with pytest.raises(DomainError):
        fit_power_law([(2.0, 1.0), (2.0, 3.0)])


def test_geometric_average():
    assert geometric_average([10, 1000]) == pytest.approx(100.0)
    assert geometric_average([7.5] * 4) == pytest.approx(7.5)
    assert geometric_average(EXP1_K_COLUMN) == pytest.approx(16.351149, abs=1e-6)
    with pytest.raises(DomainError):
        geometric_average([1.0, 0.0])


def test_predict_h():
    assert predict_H(PowerLaw(-0.23, 0.90), 32.96) == pytest.approx(13.683225, abs=1e-6)
    assert predict_H(PowerLaw(0.0, 1.0), 17.0) == pytest.approx(17.0)


def test_serialization_round_trip():
    law = fit_power_law(TABLE_AVERAGES, provenance={"source": "table"})
    assert PowerLaw.from_dict(law.to_dict()) == law


@settings(max_examples=100, deadline=None)
@given(
    beta0=st.floats(-2, 2),
    beta1=st.floats(0.2, 2.0),
    K=st.lists(st.floats(0.5, 500.0), min_size=2, max_size=12, unique=True),
)
def test_round_trip_recovers_law(beta0, beta1, K):
    K = np.array(K)
    assume(np.ptp(np.log10(K)) > 1e-2)
    law = PowerLaw(beta0, beta1)
    fit = fit_power_law(zip(K, predict_H(law, K)))
    assert fit.beta0 == pytest.approx(beta0, abs=1e-10 / np.ptp(np.log10(K)) + 1e-10)
    assert fit.beta1 == pytest.approx(beta1, abs=1e-10 / np.ptp(np.log10(K)) + 1e-10)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0.1, 10.0))
def test_stiffness_rescaling(lam):
    K = np.array([p[0] for p in TABLE_AVERAGES])
    H = np.array([p[1] for p in TABLE_AVERAGES])
    old = fit_power_law(zip(K, H))
    new = fit_power_law(zip(lam * K, H))
    assert new.beta1 == pytest.approx(old.beta1, abs=1e-10)
    assert new.beta0 == pytest.approx(old.beta0 - old.beta1 * math.log10(lam), abs=1e-10)
    np.testing.assert_allclose(predict_H(new, lam * K), predict_H(old, K), rtol=1e-10)


@pytest.mark.parametrize("beta1", [0.7, 0.9, 1.03, 1.21])
def test_slope_decides_weakest_bound(beta1):
    law = PowerLaw(-0.2, beta1)
    lo, hi = law.loss_factor(10.0), law.loss_factor(100.0)
    assert (hi < lo) if beta1 < 1 else (lo < hi)
