"""Gaussian random spherical harmonics, their covariant jets and Cholesky factors.

The field of degree ``ell`` is

    f(x) = sqrt(4 pi / (2 ell + 1)) * sum_m a_m Y_{ell m}(x),   a_m iid N(0, 1),

in the real orthonormal basis ``Y_{ell 0} = Pbar_{ell 0}``,
``Y_{ell m} = sqrt(2) Pbar_{ell m} cos(m phi)`` and
``Y_{ell,-m} = sqrt(2) Pbar_{ell m} sin(m phi)`` for ``m > 0``. With this
normalisation ``E f(x)^2 = 1`` and ``E f(x) f(y) = P_ell(<x, y>)``.

Two charts cover the sphere. The *standard* chart uses the usual polar
angles. The *rotated* chart uses polar angles of ``x' = R^T x`` where
``R`` cyclically permutes the axes, ``(x1, x2, x3) = (x2', x3', x1')``;
it sends the standard poles to the rotated equator. The standard chart owns
``|x3| <= 1/sqrt 2`` and the rotated chart owns the two polar caps.

Covariant derivatives are taken in the orthonormal frame
``e1 = d/dtheta``, ``e2 = (1/sin theta) d/dphi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache

import numpy as np

from .special_functions import (
    DomainError,
    gauss_legendre_sphere,
    legendre_pair,
    normalized_legendre_table,
)

STANDARD = "standard"
ROTATED = "rotated"
CHARTS = (STANDARD, ROTATED)
#: sin(theta) below this is treated as a pole of the chart
POLE_TOL = 1e-6

# x_standard = ROTATION @ x_rotated
ROTATION = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


class ChartError(ValueError):
    """Point at (or numerically at) a pole of the chart used to evaluate it."""


class ConfigError(ValueError):
    """Invalid parameters for a field, grid or experiment."""


def _rng(seed: int, ell: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, ell, index])))


@dataclass(frozen=True)
class SpherePoint:
    """Point on the unit sphere given by polar angles in a named chart."""

    theta: float
    phi: float
    chart: str = STANDARD

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ConfigError(f"unknown chart {self.chart!r}")

    def to_cartesian(self) -> np.ndarray:
        """Cartesian coordinates in the standard frame."""
        st = math.sin(self.theta)
        xc = np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])
        return ROTATION @ xc if self.chart == ROTATED else xc

    def in_chart(self, chart: str) -> "SpherePoint":
        if chart == self.chart:
            return self
        return point_from_cartesian(self.to_cartesian(), chart)


def point_from_cartesian(xyz, chart: str = STANDARD) -> SpherePoint:
    xyz = np.asarray(xyz, dtype=float)
    if chart == ROTATED:
        xyz = ROTATION.T @ xyz
    theta = math.acos(max(-1.0, min(1.0, xyz[2] / np.linalg.norm(xyz))))
    phi = math.atan2(xyz[1], xyz[0]) % (2.0 * math.pi)
    return SpherePoint(theta, phi, chart)


def cartesian(theta, phi, chart: str = STANDARD) -> np.ndarray:
    """Vectorised angles to standard-frame Cartesian coordinates, shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    xyz = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta) + 0.0 * phi], axis=-1)
    return xyz @ ROTATION.T if chart == ROTATED else xyz


def owned_by(chart: str, xyz: np.ndarray) -> np.ndarray:
    """Mask of standard-frame points owned by ``chart``."""
    inside = np.abs(xyz[..., 2]) <= 1.0 / math.sqrt(2.0)
    return inside if chart == STANDARD else ~inside


@dataclass(frozen=True)
class HarmonicField:
    """One realisation of the random spherical harmonic of degree ``ell``.

    ``coeffs[k]`` multiplies the real harmonic of order ``m = k - ell``.
    """

    ell: int
    coeffs: np.ndarray = dc_field(repr=False)
    seed: int | None = None
    index: int = 0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if self.ell < 1:
            raise ConfigError("degree must be at least 1")
        if c.shape != (2 * self.ell + 1,):
            raise ConfigError(f"expected {2 * self.ell + 1} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def lam(self) -> float:
        return self.ell * (self.ell + 1.0)

    def chart_coeffs(self, chart: str) -> np.ndarray:
        return self.coeffs if chart == STANDARD else self.rotated_coeffs

    @cached_property
    def rotated_coeffs(self) -> np.ndarray:
        """Coefficients of ``x' -> f(R x')`` in the same real basis.

        Obtained by exact quadrature analysis: ``f(R x')`` is a degree-``ell``
        harmonic in ``x'``, so projecting its values on a Gauss-Legendre
        product grid recovers its coefficients to rounding error.
        """
        ell = self.ell
        theta, phi, w = gauss_legendre_sphere(ell + 1, 2 * ell + 2)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        xyz = cartesian(tt, pp, ROTATED)
        th_s = np.arccos(np.clip(xyz[..., 2], -1.0, 1.0))
        ph_s = np.arctan2(xyz[..., 1], xyz[..., 0])
        vals = harmonic_values(self.coeffs, ell, th_s.ravel(), ph_s.ravel()).reshape(tt.shape)
        basis = _real_basis(ell, theta, phi)  # (2l+1, nt, np)
        proj = np.einsum("kij,ij,i->k", basis, vals, w)
        out = proj / math.sqrt(4.0 * math.pi / (2 * ell + 1))
        out.setflags(write=False)
        return out


def sample_field(ell: int, seed: int, index: int = 0) -> HarmonicField:
    """Draw the coefficients for sample ``index`` from a stream keyed by ``(seed, ell, index)``."""
    if ell < 1:
        raise ConfigError("degree must be at least 1")
    a = _rng(seed, ell, index).standard_normal(2 * ell + 1)
    return HarmonicField(ell, a, seed, index)


def _split(coeffs: np.ndarray, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine weights ``alpha_m, beta_m`` for ``m = 0..ell`` including the global scale."""
    scale = math.sqrt(4.0 * math.pi / (2 * ell + 1))
    alpha = np.empty(ell + 1)
    beta = np.zeros(ell + 1)
    alpha[0] = coeffs[ell]
    alpha[1:] = math.sqrt(2.0) * coeffs[ell + 1 :]
    beta[1:] = math.sqrt(2.0) * coeffs[ell - 1 :: -1][: ell]
    return scale * alpha, scale * beta


def _real_basis(ell: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    p = normalized_legendre_table(ell, theta)[0]
    m = np.arange(ell + 1)
    cos = np.cos(np.outer(m, phi))
    sin = np.sin(np.outer(m, phi))
    out = np.empty((2 * ell + 1, theta.size, phi.size))
    out[ell] = p[0][:, None] * cos[0][None, :]
    r2 = math.sqrt(2.0)
    for k in range(1, ell + 1):
        out[ell + k] = r2 * p[k][:, None] * cos[k][None, :]
        out[ell - k] = r2 * p[k][:, None] * sin[k][None, :]
    return out


def harmonic_values(coeffs: np.ndarray, ell: int, theta, phi) -> np.ndarray:
    """Field values at scattered points (angles of the chart the coefficients belong to)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    p = normalized_legendre_table(ell, theta)[0]
    alpha, beta = _split(coeffs, ell)
    mphi = np.outer(np.arange(ell + 1), phi)
    return np.einsum("mn,mn->n", p, alpha[:, None] * np.cos(mphi) + beta[:, None] * np.sin(mphi))


def chart_partials(coeffs: np.ndarray, ell: int, theta, phi) -> np.ndarray:
    """Raw chart partials at scattered points.

    Returns shape ``(6, n)`` ordered ``f, f_t, f_p, f_tt, f_tp, f_pp``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    p, dp, d2p = normalized_legendre_table(ell, theta)
    alpha, beta = _split(coeffs, ell)
    m = np.arange(ell + 1, dtype=float)[:, None]
    mphi = m * phi[None, :]
    c, s = np.cos(mphi), np.sin(mphi)
    T = alpha[:, None] * c + beta[:, None] * s
    Tp = m * (beta[:, None] * c - alpha[:, None] * s)
    Tpp = -(m * m) * T
    out = np.empty((6, theta.size))
    out[0] = np.einsum("mn,mn->n", p, T)
    out[1] = np.einsum("mn,mn->n", dp, T)
    out[2] = np.einsum("mn,mn->n", p, Tp)
    out[3] = np.einsum("mn,mn->n", d2p, T)
    out[4] = np.einsum("mn,mn->n", dp, Tp)
    out[5] = np.einsum("mn,mn->n", p, Tpp)
    return out


def grid_partials(coeffs: np.ndarray, ell: int, theta: np.ndarray, phi: np.ndarray, order: int = 1):
    """Raw chart partials on a tensor grid, each of shape ``(len(theta), len(phi))``.

    With ``order=1`` returns ``f, f_t, f_p``; with ``order=2`` also the
    three second partials.
    """
    p, dp, d2p = normalized_legendre_table(ell, theta)
    alpha, beta = _split(coeffs, ell)
    m = np.arange(ell + 1, dtype=float)[:, None]
    mphi = m * np.asarray(phi, dtype=float)[None, :]
    c, s = np.cos(mphi), np.sin(mphi)
    T = alpha[:, None] * c + beta[:, None] * s
    Tp = m * (beta[:, None] * c - alpha[:, None] * s)
    out = [p.T @ T, dp.T @ T, p.T @ Tp]
    if order >= 2:
        out += [d2p.T @ T, dp.T @ Tp, -(p.T @ ((m * m) * T))]
    return out


def covariant_from_partials(partials: np.ndarray, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, covariant gradient ``(..., 2)`` and Hessian ``(..., 2, 2)`` from raw partials."""
    f, ft, fp, ftt, ftp, fpp = partials
    theta = np.asarray(theta, dtype=float)
    s = np.sin(theta)
    cot = np.cos(theta) / s
    grad = np.stack([ft, fp / s], axis=-1)
    h11 = ftt
    h12 = ftp / s - cot * fp / s
    h22 = fpp / (s * s) + cot * ft
    hess = np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)
    return f, grad, hess


@dataclass(frozen=True)
class FieldJet:
    """Value, covariant gradient and covariant Hessian at one point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray
    point: SpherePoint


def eval_jet(field: HarmonicField, point: SpherePoint) -> FieldJet:
    """Covariant 2-jet of ``field`` at ``point`` in the point's own chart."""
    if math.sin(point.theta) < POLE_TOL:
        raise ChartError(
            f"point theta={point.theta!r} sits on a pole of the {point.chart} chart; "
            "evaluate it in the other chart"
        )
    coeffs = field.chart_coeffs(point.chart)
    parts = chart_partials(coeffs, field.ell, [point.theta], [point.phi])[:, 0]
    f, g, h = covariant_from_partials(parts, point.theta)
    return FieldJet(float(f), np.asarray(g), np.asarray(h), point)


@dataclass(frozen=True)
class JetGrid:
    """Covariant jets on a tensor grid in one chart."""

    theta: np.ndarray
    phi: np.ndarray
    chart: str
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def eval_grid(field: HarmonicField, n_theta: int, n_phi: int, chart: str = STANDARD) -> JetGrid:
    """Jets on an interior-midpoint colatitude grid times a periodic longitude grid.

    Both resolutions must be at least ``4 * ell`` to resolve the field.
    """
    if n_theta < 4 * field.ell or n_phi < 4 * field.ell:
        raise ConfigError(f"grid {n_theta}x{n_phi} too coarse for ell={field.ell}; need >= {4 * field.ell}")
    theta = (np.arange(n_theta) + 0.5) * math.pi / n_theta
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    parts = np.array(grid_partials(field.chart_coeffs(chart), field.ell, theta, phi, order=2))
    f, g, h = covariant_from_partials(parts, theta[:, None])
    return JetGrid(theta, phi, chart, f, g, h)


@dataclass(frozen=True)
class CholeskyFactors:
    """Lower-triangular factor of the covariance of ``(grad f, hess f)``.

    The covariance is block diagonal: ``(lam/2) I`` for the gradient and
    ``c`` for ``(d11 f, d12 f, d22 f)``.
    """

    ell: int
    mu1: float
    mu2: float
    mu3: float
    mu4: float
    mu5: float

    @property
    def lam(self) -> float:
        return self.ell * (self.ell + 1.0)

    @property
    def a(self) -> np.ndarray:
        return np.diag([self.mu1, self.mu1])

    @property
    def c(self) -> np.ndarray:
        return np.array([[self.mu3, 0.0, 0.0], [0.0, self.mu4, 0.0], [self.mu2, 0.0, self.mu5]])

    def matrix(self) -> np.ndarray:
        out = np.zeros((5, 5))
        out[:2, :2] = self.a
        out[2:, 2:] = self.c
        return out

    def sigma(self) -> np.ndarray:
        lam = self.lam
        out = np.zeros((5, 5))
        out[0, 0] = out[1, 1] = lam / 2.0
        out[2:, 2:] = hessian_covariance(self.ell)
        return out


def hessian_covariance(ell: int) -> np.ndarray:
    """Covariance of ``(d11 f, d12 f, d22 f)`` at a point."""
    lam = ell * (ell + 1.0)
    return (lam * lam / 8.0) * np.array(
        [
            [3.0 - 2.0 / lam, 0.0, 1.0 + 2.0 / lam],
            [0.0, 1.0 - 2.0 / lam, 0.0],
            [1.0 + 2.0 / lam, 0.0, 3.0 - 2.0 / lam],
        ]
    )


@lru_cache(maxsize=256)
def cholesky_factors(ell: int) -> CholeskyFactors:
    """Closed-form Cholesky entries; needs ``ell >= 2`` so all are real and positive."""
    if ell < 2:
        raise ConfigError("Cholesky factors need ell >= 2 (the Hessian covariance is singular at ell = 1)")
    lam = ell * (ell + 1.0)
    r = math.sqrt(3.0 * lam - 2.0)
    mu1 = math.sqrt(lam / 2.0)
    mu3 = math.sqrt(lam) * r / (2.0 * math.sqrt(2.0))
    mu4 = math.sqrt(lam) * math.sqrt(lam - 2.0) / (2.0 * math.sqrt(2.0))
    mu2 = math.sqrt(lam) * (lam + 2.0) / (2.0 * math.sqrt(2.0) * r)
    mu5 = lam * math.sqrt(lam - 2.0) / r
    return CholeskyFactors(ell, mu1, mu2, mu3, mu4, mu5)


def normalized_fields(grad, hess, factors: CholeskyFactors) -> np.ndarray:
    """Whitened vector ``Y = Lambda^{-1} (grad, d11, d12, d22)``, shape ``(..., 5)``."""
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    y1 = grad[..., 0] / factors.mu1
    y2 = grad[..., 1] / factors.mu1
    y3 = hess[..., 0, 0] / factors.mu3
    y4 = hess[..., 0, 1] / factors.mu4
    y5 = (hess[..., 1, 1] - factors.mu2 * y3) / factors.mu5
    return np.stack([y1, y2, y3, y4, y5], axis=-1)


def _legendre_derivative(ell, x, p, p_prev):
    """``P_ell'(x)``, switching to a Taylor series at ``x = +-1`` where the recurrence is 0/0."""
    lam = ell * (ell + 1.0)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = ell * (p_prev - x * p) / (1.0 - x * x)
    d = 1.0 - np.abs(x)
    near = d < 1e-3 / lam
    if np.any(near):
        sign = np.where(x < 0, -1.0, 1.0)
        # P^(k)(1) = prod_{j<k} (lam - j(j+1)) / (2^k k!), and P^(k)(-x) = (-1)^(ell+k) P^(k)(x)
        d1 = lam / 2.0
        d2 = lam * (lam - 2.0) / 8.0
        d3 = lam * (lam - 2.0) * (lam - 6.0) / 48.0
        series = d1 - d2 * d + 0.5 * d3 * d * d
        dp = np.where(near, sign ** (ell + 1) * series, dp)
    return dp if dp.ndim else float(dp)


def derivative_covariance(ell: int, phi, component: int):
    """Correlation ``rho_i(phi) = E[Y_i(xbar) f(y)]``.

    ``xbar`` is the equatorial point ``(pi/2, 0)`` and ``y = (pi/2, phi)``;
    ``component`` indexes ``Y_1..Y_5``. Components 1 and 4 vanish
    identically. Valid for ``0 < phi <= pi``.
    """
    if component not in (1, 2, 3, 4, 5):
        raise ConfigError("component must be 1..5")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0.0) or np.any(phi > math.pi):
        raise DomainError("derivative_covariance needs 0 < phi <= pi")
    if component in (1, 4):
        return np.zeros_like(phi) if phi.ndim else 0.0
    lam = ell * (ell + 1.0)
    x = np.cos(phi)
    s = np.sin(phi)
    p, p_prev = legendre_pair(ell, x)
    dp = _legendre_derivative(ell, x, p, p_prev)
    sdp = s * dp
    xdp = x * dp
    if component == 2:
        return math.sqrt(2.0 / lam) * sdp
    r = math.sqrt(3.0 * lam - 2.0)
    if component == 3:
        return -2.0 * math.sqrt(2.0) / (math.sqrt(lam) * r) * xdp
    a = r / (lam * math.sqrt(lam - 2.0))
    b = (lam + 2.0) / (lam * math.sqrt(lam - 2.0) * r)
    return a * (xdp - lam * p) + b * xdp
