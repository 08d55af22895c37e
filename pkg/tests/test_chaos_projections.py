import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphcrit import closed_forms as cf
from sphcrit.chaos_projections import (
    TOTAL,
    TOTAL_F_CONSTANT,
    chaos_stats,
    f_constant,
    f_statistic,
    h2_from_coefficients,
    polyspectra,
    polyspectrum,
    s_statistic,
)
from sphcrit.intervals import Interval
from sphcrit.random_field import ConfigError, HarmonicField, sample_field

LOWER = Interval(-math.inf, 1.0)


@given(st.integers(2, 40), st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_h2_dual_route(ell, seed):
    field = sample_field(ell, seed)
    q, c = polyspectrum(field, 2), h2_from_coefficients(field)
    assert abs(q - c) <= 1e-8 * max(abs(c), 1e-3)


@given(st.integers(2, 25), st.integers(0, 10 ** 6))
@settings(max_examples=20, deadline=None)
def test_sign_flip(ell, seed):
    field = sample_field(ell, seed)
    neg = HarmonicField(ell, -field.coeffs)
    a, b = polyspectra(field), polyspectra(neg)
    assert b[3] == pytest.approx(-a[3], abs=1e-10)
    assert b[2] == pytest.approx(a[2], abs=1e-10)
    assert b[4] == pytest.approx(a[4], abs=1e-10)


def test_quadrature_exact_at_default_resolution():
    field = sample_field(17, 5)
    for q in (2, 3, 4):
        assert polyspectrum(field, q) == pytest.approx(polyspectrum(field, q, quad_res=6 * 17), rel=1e-11, abs=1e-11)


def test_resolution_and_order_checks():
    field = sample_field(10, 0)
    with pytest.raises(ConfigError):
        polyspectrum(field, 2, quad_res=20)
    with pytest.raises(ConfigError):
        polyspectrum(field, 5)


def test_constants():
    assert f_constant(TOTAL) == TOTAL_F_CONSTANT
    # the interval constant at R reproduces the total-count constant
    assert f_constant(Interval.real()) == pytest.approx(TOTAL_F_CONSTANT, rel=1e-8)
    assert f_constant(LOWER, "display") == pytest.approx(24 * f_constant(LOWER), rel=1e-14)
    with pytest.raises(ConfigError):
        f_constant(LOWER, "other")


def test_s_vanishes_on_real_line():
    assert s_statistic(sample_field(20, 1), Interval.real()) == 0.0


def test_stats_bundle_consistent():
    field = sample_field(12, 3)
    st_ = chaos_stats(field, [LOWER, Interval.real()])
    assert st_.f_of_I[Interval.real()] == pytest.approx(st_.f_total, rel=1e-8)
    lam = 12 * 13
    assert st_.s_of_I[LOWER] == pytest.approx(lam / 2 * cf.nu_c(LOWER) / (2 * math.pi) * st_.h2, rel=1e-14)
    assert st_.f_total == pytest.approx(f_statistic(field, TOTAL), rel=1e-14)


def _sample_stats(ell, n, seed=11):
    return np.array([[*polyspectra(sample_field(ell, seed, i)).values()] for i in range(n)])


def test_polyspectrum_variances_by_monte_carlo():
    ell, n = 20, 2000
    h = _sample_stats(ell, n)
    for col, q in ((0, 2), (1, 3), (2, 4)):
        x = h[:, col]
        v = np.var(x, ddof=1)
        se = math.sqrt(max(np.var((x - x.mean()) ** 2, ddof=1), 0) / n)
        assert abs(v - cf.polyspectrum_variance(q, ell)) < 4 * se


def test_f_is_centred():
    ell, n = 30, 2000
    f = np.array([f_statistic(sample_field(ell, 12, i)) for i in range(n)])
    assert abs(f.mean()) < 4 * f.std(ddof=1) / math.sqrt(n)


@pytest.mark.parametrize("ell", [100, 200])
def test_h3_variance_scale(ell):
    # even degree: both ends of [-1, 1] contribute c_3 / ell^2
    ratio = cf.polyspectrum_variance(3, ell) * ell ** 2 / (96 * math.pi ** 2 * cf.c_q(3))
    assert abs(ratio - 1) < 0.15


def test_f_variance_log_rate():
    """Var(F) / (ell^2 log ell / (27 pi^2)) = 1 + C / log ell with C near 2.7."""
    vals = {}
    for ell in (100, 200, 1000):
        v = TOTAL_F_CONSTANT ** 2 * (ell * (ell + 1)) ** 2 * cf.polyspectrum_variance(4, ell)
        vals[ell] = v * 27 * math.pi ** 2 / (ell ** 2 * math.log(ell))
    assert vals[100] > vals[200] > vals[1000] > 1
    c = [(vals[e] - 1) * math.log(e) for e in vals]
    assert max(c) - min(c) < 0.1


@pytest.mark.xfail(strict=True, reason="exact ratio at ell=200 is 1.509; log-rate convergence")
def test_f_variance_within_15pct_at_200():
    ell = 200
    v = TOTAL_F_CONSTANT ** 2 * (ell * (ell + 1)) ** 2 * cf.polyspectrum_variance(4, ell)
    assert abs(v * 27 * math.pi ** 2 / (ell ** 2 * math.log(ell)) - 1) < 0.15
