import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commcert.estimate import ConfidenceSpec, beta_quantile, betainc, clopper_pearson_lower

# 50-digit adaptive quadrature of the beta density plus bisection (mpmath), frozen
QUAD_Q_9000_1001 = 0.8904097336749064
QUAD_CP_9900_OF_10000 = 0.9865311593238062


@pytest.mark.parametrize("N", [1, 2, 10, 100, 1000, 10_000])
@pytest.mark.parametrize("q", [1e-6, 0.001, 0.05, 0.5, 0.9])
def test_quantile_closed_form_b1(N, q):
    assert abs(beta_quantile(q, N, 1) - q ** (1.0 / N)) <= 1e-12


@pytest.mark.parametrize("a", [0.5, 1, 3, 50, 2000])
def test_symmetric_median(a):
    assert beta_quantile(0.5, a, a) == pytest.approx(0.5, abs=1e-12)


def test_quantile_matches_quadrature_oracle():
    assert abs(beta_quantile(0.001, 9000, 1001) - QUAD_Q_9000_1001) <= 1e-9


def test_cp_all_successes():
    assert clopper_pearson_lower(100, 100, 0.001) == pytest.approx(0.001 ** 0.01, abs=1e-12)
    assert clopper_pearson_lower(100, 100, 0.001) == pytest.approx(0.933254, abs=1e-6)


def test_cp_matches_quadrature_oracle():
    assert abs(clopper_pearson_lower(9900, 10_000, 0.001) - QUAD_CP_9900_OF_10000) <= 1e-9


def test_cp_zero_successes():
    assert clopper_pearson_lower(0, 50, 0.01) == 0.0


def test_cp_rejects_bad_input():
    with pytest.raises(ValueError):
        clopper_pearson_lower(11, 10, 0.01)
    with pytest.raises(ValueError):
        clopper_pearson_lower(1, 10, 1.5)
    with pytest.raises(ValueError):
        ConfidenceSpec(0.0)


def test_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    for a, b, q in [(3, 4, 0.2), (500, 20, 0.001), (9000, 1001, 0.01), (1, 1, 0.3), (0.7, 2.5, 0.9)]:
        assert beta_quantile(q, a, b) == pytest.approx(stats.beta.ppf(q, a, b), abs=1e-11)
        x = stats.beta.ppf(q, a, b)
        assert betainc(a, b, x) == pytest.approx(q, abs=1e-11)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 2000), st.data())
def test_cp_monotone_in_successes(n, data):
    m = data.draw(st.integers(1, n))
    alpha = data.draw(st.sampled_from([0.1, 0.01, 0.001]))
    lo = clopper_pearson_lower(m, n, alpha)
    assert 0 < lo <= m / n
    if m < n:
        assert clopper_pearson_lower(m + 1, n, alpha) > lo


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 2000), st.data())
def test_cp_tighter_with_more_confidence_budget(n, data):
    m = data.draw(st.integers(1, n))
    assert clopper_pearson_lower(m, n, 0.01) >= clopper_pearson_lower(m, n, 0.001)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0.001, 0.999))
def test_quantile_inverts_cdf(a, b, q):
    # the exact quantile must lie within a couple of doubles of the returned value
    x = beta_quantile(q, a, b)
    assert 0 <= x <= 1
    below = np.nextafter(np.nextafter(x, 0), 0)
    above = np.nextafter(np.nextafter(x, 1), 1)
    assert betainc(a, b, float(below)) <= q + 1e-12
    assert betainc(a, b, float(above)) >= q - 1e-12
