import math

import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings, strategies as st

from sphcrit.random_field import (
    ROTATED,
    STANDARD,
    ChartError,
    ConfigError,
    HarmonicField,
    SpherePoint,
    cholesky_factors,
    derivative_covariance,
    eval_grid,
    eval_jet,
    harmonic_values,
    normalized_fields,
    owned_by,
    point_from_cartesian,
    sample_field,
)


def unit_fields(ell):
    return [HarmonicField(ell, np.eye(2 * ell + 1)[k]) for k in range(2 * ell + 1)]


def basis_jets(ell, point):
    """Rows (f, g1, g2, h11, h12, h22) of every basis function at ``point``."""
    out = []
    for fld in unit_fields(ell):
        j = eval_jet(fld, point)
        out.append([j.value, *j.grad, j.hess[0, 0], j.hess[0, 1], j.hess[1, 1]])
    return np.array(out)


@pytest.mark.parametrize("ell", [1, 4, 17])
def test_addition_theorem(ell, rng):
    """Unit pointwise variance and covariance P_ell(cos d) from the basis."""
    theta = rng.uniform(0.2, 3.0, 6)
    phi = rng.uniform(0, 2 * math.pi, 6)
    vecs = np.array([harmonic_values(f.coeffs, ell, theta, phi) for f in unit_fields(ell)])
    cov = vecs.T @ vecs
    xyz = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
    np.testing.assert_allclose(cov, sps.eval_legendre(ell, np.clip(xyz @ xyz.T, -1, 1)), atol=1e-12)


def test_sampling_is_keyed():
    a = sample_field(12, 3, 5)
    b = sample_field(12, 3, 5)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, sample_field(12, 3, 6).coeffs)
    assert not np.array_equal(a.coeffs, sample_field(12, 4, 5).coeffs)
    with pytest.raises(ValueError):
        a.coeffs[0] = 1.0


def test_bad_fields():
    with pytest.raises(ConfigError):
        HarmonicField(3, np.zeros(6))
    with pytest.raises(ConfigError):
        sample_field(0, 1)


@given(st.floats(0.01, math.pi - 0.01), st.floats(0, 2 * math.pi))
@settings(max_examples=40, deadline=None)
def test_charts_agree(theta, phi):
    field = sample_field(9, 11, 0)
    p = SpherePoint(theta, phi)
    q = p.in_chart(ROTATED)
    np.testing.assert_allclose(q.to_cartesian(), p.to_cartesian(), atol=1e-13)
    if math.sin(q.theta) > 1e-3:
        assert eval_jet(field, q).value == pytest.approx(eval_jet(field, p).value, abs=1e-11)


def test_ownership_partitions_sphere(rng):
    x = rng.standard_normal((500, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert np.all(owned_by(STANDARD, x) ^ owned_by(ROTATED, x))


def test_pole_raises():
    with pytest.raises(ChartError):
        eval_jet(sample_field(5, 1), SpherePoint(0.0, 0.0))


@pytest.mark.parametrize("ell", [3, 10, 50])
def test_eigenfunction_identity(ell, rng):
    field = sample_field(ell, 2, 0)
    for _ in range(20):
        p = SpherePoint(math.acos(rng.uniform(-0.95, 0.95)), rng.uniform(0, 2 * math.pi))
        j = eval_jet(field, p)
        assert abs(np.trace(j.hess) + field.lam * j.value) < 1e-9 * field.lam


def test_jet_matches_finite_differences():
    field = sample_field(8, 4, 1)
    t, p, h = 1.1, 0.7, 1e-5
    f = lambda a, b: eval_jet(field, SpherePoint(a, b)).value
    j = eval_jet(field, SpherePoint(t, p))
    assert j.grad[0] == pytest.approx((f(t + h, p) - f(t - h, p)) / (2 * h), abs=1e-6)
    assert j.grad[1] == pytest.approx((f(t, p + h) - f(t, p - h)) / (2 * h) / math.sin(t), abs=1e-6)
    ftt = (f(t + h, p) - 2 * f(t, p) + f(t - h, p)) / h ** 2
    assert j.hess[0, 0] == pytest.approx(ftt, abs=1e-3)


@pytest.mark.parametrize("ell", [2, 6, 15])
def test_jet_covariance_is_sigma(ell):
    rows = basis_jets(ell, SpherePoint(1.0, 2.0))
    cov = rows[:, 1:].T @ rows[:, 1:]
    sigma = cholesky_factors(ell).sigma()
    np.testing.assert_allclose(cov, sigma, atol=1e-10 * sigma.max())
    # value is uncorrelated with the gradient, correlated -lambda/2 with h11 and h22
    np.testing.assert_allclose(rows[:, 0] @ rows[:, 1:], [0, 0, -ell * (ell + 1) / 2, 0, -ell * (ell + 1) / 2], atol=1e-10 * ell ** 2)


@pytest.mark.parametrize("ell", [2, 10, 100])
def test_cholesky_reconstructs(ell):
    fac = cholesky_factors(ell)
    m = fac.matrix()
    np.testing.assert_allclose(m @ m.T, fac.sigma(), rtol=0, atol=1e-12 * fac.sigma().max())


def test_cholesky_needs_ell_2():
    with pytest.raises(ConfigError):
        cholesky_factors(1)


def test_whitened_fields_are_white():
    ell = 7
    rows = basis_jets(ell, SpherePoint(0.9, 0.3))
    y = normalized_fields(rows[:, 1:3], np.stack([rows[:, [3, 4]], rows[:, [4, 5]]], axis=1), cholesky_factors(ell))
    np.testing.assert_allclose(y.T @ y, np.eye(5), atol=1e-10)


@pytest.mark.parametrize("ell", [5, 20])
def test_derivative_covariance_direct(ell):
    """rho_i(phi) = E[Y_i(equator point) f(pi/2, phi)] from the basis."""
    fac = cholesky_factors(ell)
    rows = basis_jets(ell, SpherePoint(math.pi / 2, 0.0))
    y = normalized_fields(rows[:, 1:3], np.stack([rows[:, [3, 4]], rows[:, [4, 5]]], axis=1), fac)
    for phi in (0.1, 0.7, 2.0, math.pi):
        fy = np.array([eval_jet(f, SpherePoint(math.pi / 2, phi)).value for f in unit_fields(ell)])
        direct = y.T @ fy
        got = [derivative_covariance(ell, phi, i) for i in range(1, 6)]
        np.testing.assert_allclose(got, direct, atol=1e-11)


def test_grid_shapes_and_resolution():
    field = sample_field(6, 0)
    g = eval_grid(field, 24, 48)
    assert g.value.shape == (24, 48) and g.grad.shape == (24, 48, 2) and g.hess.shape == (24, 48, 2, 2)
    with pytest.raises(ConfigError):
        eval_grid(field, 10, 48)


def test_point_round_trip(rng):
    x = rng.standard_normal(3)
    x /= np.linalg.norm(x)
    for chart in (STANDARD, ROTATED):
        np.testing.assert_allclose(point_from_cartesian(x, chart).to_cartesian(), x, atol=1e-14)
