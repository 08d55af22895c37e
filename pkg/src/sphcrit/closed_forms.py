"""Closed-form densities, integrals, coefficients and variance predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .intervals import Interval
from .random_field import cholesky_factors, derivative_covariance
from .special_functions import (
    DomainError,
    QuadratureRule,
    bessel_j0,
    integrate,
    legendre_P,
)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
#: leading coefficient of Var(N) / (ell^2 log ell)
TOTAL_L2LOGL = 1.0 / (27.0 * math.pi ** 2)
#: mean number of critical points per ell^2
TOTAL_DENSITY = 2.0 / math.sqrt(3.0)


class ConsistencyError(ArithmeticError):
    """Two representations of the same quantity disagree."""


def _std_normal_pdf(u):
    return np.exp(-0.5 * np.asarray(u, dtype=float) ** 2) / math.sqrt(2.0 * math.pi)


def density_p(r: int, t):
    """Weighted critical-value densities ``p_0``, ``p_2``, ``p_4``.

    ``p_0`` is, up to the factor ``sqrt(2/pi)``, the unnormalised density of
    critical values; ``p_2`` and ``p_4`` carry the extra weights
    ``(t - sqrt(2) e)^r`` used by the fourth-chaos projections.
    """
    t = np.asarray(t, dtype=float)
    t2 = t * t
    g = np.exp(-t2)
    if r == 0:
        poly = 2.0 * g + t2 - 1.0
    elif r == 2:
        poly = -4.0 + t2 + t2 * t2 + 2.0 * g * (4.0 + 3.0 * t2)
    elif r == 4:
        poly = (72.0 + 96.0 * t2 + 38.0 * t2 * t2) * g - 36.0 - 12.0 * t2 + 11.0 * t2 * t2 + t2 ** 3
    else:
        raise DomainError(f"density_p is defined for r in {{0, 2, 4}}, got {r}")
    out = SQRT_2_OVER_PI * poly * np.exp(-0.5 * t2)
    return float(out) if out.ndim == 0 else out


def integral_I(r: int, interval: Interval) -> float:
    """``int_I p_r(t) dt``."""
    if r not in (0, 2, 4):
        raise DomainError(f"integral_I is defined for r in {{0, 2, 4}}, got {r}")
    return integrate(lambda t: density_p(r, t), interval)


def _nu_integrand(t):
    t2 = t * t
    return (2.0 - 6.0 * t2 - np.exp(t2) * (1.0 - 4.0 * t2 + t2 * t2)) * np.exp(-1.5 * t2) / math.sqrt(8.0 * math.pi)


def nu_c(interval: Interval, tol: float = 1e-9) -> float:
    """Leading ``ell^{3/2}`` standard-deviation coefficient of ``N(I)``.

    Evaluated by direct quadrature and cross-checked against
    ``(5 I_0 - I_2) / 4``; the two agree to rounding.
    """
    direct = integrate(_nu_integrand, interval)
    dual = (5.0 * integral_I(0, interval) - integral_I(2, interval)) / 4.0
    if abs(direct - dual) > tol:
        raise ConsistencyError(f"nu_c representations disagree: {direct!r} vs {dual!r}")
    return direct


def critical_value_density(t):
    """Normalised density of critical values (integrates to one)."""
    return math.sqrt(3.0) / math.sqrt(8.0 * math.pi) * (
        2.0 * np.exp(-np.asarray(t, dtype=float) ** 2) + np.asarray(t, dtype=float) ** 2 - 1.0
    ) * np.exp(-0.5 * np.asarray(t, dtype=float) ** 2)


def expected_count(ell: int, interval: Interval) -> float:
    """Leading term of the expected number of critical points with value in ``I``."""
    if ell < 2:
        raise DomainError("expected_count needs ell >= 2")
    return TOTAL_DENSITY * ell * ell * integrate(critical_value_density, interval)


@dataclass(frozen=True)
class VariancePrediction:
    """``Var N(I) ~ coeff_l3 * ell^3 + coeff_l2logl * ell^2 log ell``."""

    coeff_l3: float
    coeff_l2logl: float
    interval: Interval
    ell: int | None = None

    def value(self, ell: int | None = None) -> float:
        ell = self.ell if ell is None else ell
        return self.coeff_l3 * ell ** 3 + self.coeff_l2logl * ell ** 2 * math.log(ell)


def fourth_chaos_bracket(interval: Interval) -> float:
    """``51 I_0 - 22 I_2 + I_4``; equals ``-8/(3 sqrt 3)`` on the whole line."""
    return 51.0 * integral_I(0, interval) - 22.0 * integral_I(2, interval) + integral_I(4, interval)


def variance_prediction(ell: int, interval: Interval) -> VariancePrediction:
    if ell < 2:
        raise DomainError("variance_prediction needs ell >= 2")
    i0, i2, i4 = (integral_I(r, interval) for r in (0, 2, 4))
    c3 = (5.0 * i0 - i2) ** 2 / 16.0
    c2 = (51.0 * i0 - 22.0 * i2 + i4) ** 2 / (64.0 * math.pi ** 2)
    if interval.is_real:
        c3 = 0.0 if abs(c3) < 1e-20 else c3
    return VariancePrediction(c3, c2, interval, ell)


def six_term_assembly(i0: float, i2: float, i4: float) -> tuple[float, float]:
    """Expand the variance from the six derivative integrals.

    Returns the ``(ell^3, ell^2 log ell)`` coefficients obtained by
    multiplying each derivative integral by its bracket and summing.
    """
    pi2 = math.pi ** 2
    integrals = [
        i0 * i0 / 8.0,
        (-3.0 * i0 * i0 + i0 * i2) / 2 ** 6,
        (3.0 * i0 - i2) ** 2 / 2 ** 9,
        (72.0 * i0 * i0 - 48.0 * i0 * i2 + 2.0 * i0 * i4 + 2.0 * i2 * i2) / 2 ** 11,
        (-162.0 * i0 * i0 + 162.0 * i0 * i2 - 6.0 * i0 * i4 + 2.0 * i4 * i2 - 36.0 * i2 * i2) / 2 ** 13,
        (27.0 * i0 - 18.0 * i2 + i4) ** 2 / 2 ** 15,
    ]
    l3 = [2.0, -16.0, 32.0, 0.0, 0.0, 0.0]
    l2 = [18.0 / pi2, -96.0 / pi2, -64.0 / pi2, 384.0 / pi2, -512.0 / pi2, 512.0 / pi2]
    return float(np.dot(l3, integrals)), float(np.dot(l2, integrals))


def assemble_variance_expansion(interval: Interval) -> float:
    """Largest gap between the six-term expansion and the compact two-term form."""
    i0, i2, i4 = (integral_I(r, interval) for r in (0, 2, 4))
    a3, a2 = six_term_assembly(i0, i2, i4)
    c3 = (5.0 * i0 - i2) ** 2 / 16.0
    c2 = (51.0 * i0 - 22.0 * i2 + i4) ** 2 / (64.0 * math.pi ** 2)
    return max(abs(a3 - c3), abs(a2 - c2))


def c_q(q: int, cutoff: float = 400.0, points_per_period: int = 64) -> float:
    """``int_0^inf J_0(psi)^q psi dpsi`` for ``q = 3`` or ``q >= 5``.

    The partial integral oscillates (at frequencies 1 and 3 for q = 3), so it
    is smoothed by two passes of a moving average over one ``2 pi`` period
    before being read off at ``cutoff``.
    """
    if q == 4:
        raise DomainError(
            "c_4 diverges: J_0^4 psi decays like 1/psi, which is why h_{ell,4} has log(ell) variance"
        )
    if q < 3:
        raise DomainError("c_q is defined for q = 3 or q >= 5")
    period = 2.0 * math.pi
    n_cells = int(math.ceil(cutoff / period * points_per_period))
    edges = np.linspace(0.0, cutoff, n_cells + 1)
    rule = QuadratureRule.gauss_legendre(8)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * rule.nodes[None, :]
    vals = bessel_j0(nodes) ** q * nodes
    partial = np.concatenate([[0.0], np.cumsum((vals * rule.weights[None, :]).sum(axis=1) * half)])
    step = edges[1] - edges[0]
    window = int(round(period / step))
    smooth = partial
    for _ in range(2):
        # trapezoidal running mean over one period
        c = np.concatenate([[0.0], np.cumsum(0.5 * (smooth[1:] + smooth[:-1]) * step)])
        smooth = (c[window:] - c[:-window]) / (window * step)
    return float(smooth[-1])


def kernel_moment_integrals(ell: int, panels_per_wave: int = 4, nodes: int = 16) -> tuple[float, float, float]:
    """The three fourth-moment integrals of the derivative correlations.

    ``int_0^{pi/2} 4! rho_2^4 sin``, ``int 4! rho_5^4 sin`` and
    ``int 4! rho_2^2 rho_5^2 sin``. The last is the only diagram of
    ``E[H_2(Y_2) H_2(Y_5) H_4(f)]`` since ``Y_2`` and ``Y_5`` are
    uncorrelated at a point: each of ``Y_2(x), Y_2(x), Y_5(x), Y_5(x)``
    pairs with one of the four copies of ``f(y)``, giving
    ``2 * 2 * 3! = 4!`` pairings of weight ``rho_2^2 rho_5^2``.
    """
    if ell < 10:
        raise DomainError("kernel_moment_integrals needs ell >= 10")
    n_panels = panels_per_wave * ell
    edges = np.linspace(0.0, 0.5 * math.pi, n_panels + 1)
    rule = QuadratureRule.gauss_legendre(nodes)
    half = 0.5 * (edges[1:] - edges[:-1])
    phi = (0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * rule.nodes[None, :]
    w = (half[:, None] * rule.weights[None, :]).ravel()
    phi = phi.ravel()
    r2 = derivative_covariance(ell, phi, 2)
    r5 = derivative_covariance(ell, phi, 5)
    s = np.sin(phi)
    f = math.factorial(4)
    return (
        float(np.dot(w, f * r2 ** 4 * s)),
        float(np.dot(w, f * r5 ** 4 * s)),
        float(np.dot(w, f * r2 ** 2 * r5 ** 2 * s)),
    )


def kernel_moment_asymptotes(ell: int) -> tuple[float, float, float]:
    """Leading ``log(ell)/ell^2`` behaviour of the three kernel integrals."""
    base = math.factorial(4) * math.log(ell) / ell ** 2 / math.pi ** 2
    return 6.0 * base, 13.5 * base, 3.0 * base


def cholesky_asymptotes(ell: int) -> tuple[float, float, float, float, float]:
    """Leading-order forms of ``mu_1..mu_5`` in powers of ``ell``."""
    return (
        ell / math.sqrt(2.0),
        ell ** 2 / math.sqrt(24.0),
        math.sqrt(3.0) * ell ** 2 / (2.0 * math.sqrt(2.0)),
        ell ** 2 / (2.0 * math.sqrt(2.0)),
        ell ** 2 / math.sqrt(3.0),
    )


def cholesky_ratio_errors(ell: int) -> np.ndarray:
    """``|mu_i / asymptote_i - 1|`` for ``i = 1..5``."""
    fac = cholesky_factors(ell)
    mu = np.array([fac.mu1, fac.mu2, fac.mu3, fac.mu4, fac.mu5])
    return np.abs(mu / np.array(cholesky_asymptotes(ell)) - 1.0)


def epc_coefficients(u):
    """Reference closed forms ``(h25, k2, k5)`` of the EPC fourth-chaos projections."""
    g = _std_normal_pdf(u)
    u = np.asarray(u, dtype=float)
    h25 = -u * (u * u + 1.0) * g / (24.0 * math.pi)
    k2 = 3.0 * u * g / (8.0 * math.pi)
    k5 = u * (u ** 4 - 2.0 * u * u - 9.0) * g / (27.0 * math.pi)
    if u.ndim == 0:
        return float(h25), float(k2), float(k5)
    return h25, k2, k5


def epc_k5_rederived(u):
    """``k5(u)`` recomputed from the Gaussian expectation.

    Same polynomial as the reference form but with ``1/(72 pi)`` in place
    of ``1/(27 pi)``; Monte Carlo agrees with this one.
    """
    u = np.asarray(u, dtype=float)
    out = u * (u ** 4 - 2.0 * u * u - 9.0) * _std_normal_pdf(u) / (72.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def epc_variance_leading(u):
    """``ell^3`` coefficient of the variance of the excursion-set Euler characteristic."""
    u = np.asarray(u, dtype=float)
    out = 0.25 * (u * (u * u - 1.0) * _std_normal_pdf(u)) ** 2
    return float(out) if out.ndim == 0 else out


def coefficient_closed_forms(interval: Interval) -> dict[str, float]:
    """Fourth-chaos count coefficients ``k2``, ``k5``, ``h25`` on an interval."""
    i0, i2, i4 = (integral_I(r, interval) for r in (0, 2, 4))
    return {
        "k2": 3.0 * i0 / (8.0 * math.pi),
        "k5": 3.0 * i0 / (8.0 * math.pi) - i2 / (4.0 * math.pi) + i4 / (72.0 * math.pi),
        "h25": i0 / (8.0 * math.pi) - i2 / (24.0 * math.pi),
    }


def polyspectrum_variance(q: int, ell: int) -> float:
    """Exact ``Var(h_{ell,q}) = q! 8 pi^2 int_{-1}^1 P_ell(t)^q dt``."""
    rule = QuadratureRule.gauss_legendre(q * ell // 2 + 2)
    vals = legendre_P(ell, rule.nodes) ** q
    return math.factorial(q) * 8.0 * math.pi ** 2 * float(np.dot(rule.weights, vals))


def h2_variance(ell: int) -> float:
    """``Var(h_{ell,2}) = 32 pi^2 / (2 ell + 1)``."""
    return 32.0 * math.pi ** 2 / (2 * ell + 1)


def s_variance_ratio(ell: int, interval: Interval) -> float:
    """``Var(S_ell(I)) / ell^3`` computed exactly from ``Var(h2)``."""
    return (ell * (ell + 1.0) / 2.0 * nu_c(interval) / (2.0 * math.pi)) ** 2 * h2_variance(ell) / ell ** 3
