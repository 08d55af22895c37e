"""Scalar special functions and Gauss-Legendre quadrature.

Everything here is vectorised over numpy arrays where it makes sense; the
scalar signatures of the public functions also accept arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .intervals import Interval

#: infinite endpoints are replaced by +/- this value
TRUNCATION = 8.0
DEFAULT_ORDER = 256
DEFAULT_PANEL_WIDTH = 16.0
#: series / asymptotic switch for J_0
BESSEL_SWITCH = 12.0


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class NumericalError(ArithmeticError):
    """Non-finite integrand value encountered during quadrature."""


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @classmethod
    def gauss_legendre(cls, order: int = DEFAULT_ORDER) -> "QuadratureRule":
        return _gauss_legendre(int(order))

    def on(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights mapped affinely onto [a, b]."""
        half = 0.5 * (b - a)
        return half * self.nodes + 0.5 * (a + b), half * self.weights


@lru_cache(maxsize=32)
def _gauss_legendre(order: int) -> QuadratureRule:
    if order < 1:
        raise DomainError("quadrature order must be positive")
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, order)


def legendre_P(ell: int, x):
    """Legendre polynomial P_ell(x), normalised so that P_ell(1) = 1."""
    return legendre_pair(ell, x)[0]


def legendre_pair(ell: int, x):
    """Return ``(P_ell(x), P_{ell-1}(x))`` from the three-term recurrence.

    For ``ell == 0`` the second entry is zero.
    """
    if ell < 0:
        raise DomainError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("legendre_P needs |x| <= 1")
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    for n in range(1, ell + 1):
        p_prev, p = p, ((2 * n - 1) * x * p - (n - 1) * p_prev) / n
    if p.ndim == 0:
        return float(p), float(p_prev)
    return p, p_prev


def normalized_legendre_table(ell: int, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal associated Legendre functions of degree ``ell``.

    Returns arrays of shape ``(ell + 1, len(theta))``: row ``m`` holds
    ``Pbar_{ell m}(cos theta)`` and its first and second theta-derivatives.
    ``Pbar`` satisfies ``2 pi * int_0^pi Pbar^2 sin(theta) dtheta = 1`` and
    carries no Condon-Shortley phase.

    The recurrence runs upward in degree for all orders at once, starting
    from the sectoral terms, so nothing overflows for large ``ell``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.cos(theta)
    s = np.sin(theta)
    npts = theta.size
    L = ell

    sect = np.empty((L + 1, npts))
    sect[0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, L + 1):
        sect[m] = math.sqrt((2 * m + 1) / (2.0 * m)) * s * sect[m - 1]

    # rows m > n stay zero; buffers rotate so each degree costs O(n * npts)
    prev2 = np.zeros((L + 1, npts))  # degree n-2
    prev1 = np.zeros((L + 1, npts))  # degree n-1
    cur = np.zeros((L + 1, npts))
    prev1[0] = sect[0]
    for n in range(1, L + 1):
        if n >= 2:
            m = np.arange(n - 1)
            a = np.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
            b = np.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
            np.multiply(x, prev1[: n - 1], out=cur[: n - 1])
            cur[: n - 1] -= b[:, None] * prev2[: n - 1]
            cur[: n - 1] *= a[:, None]
        cur[n - 1] = math.sqrt(2.0 * n + 1.0) * x * sect[n - 1]
        cur[n] = sect[n]
        prev2, prev1, cur = prev1, cur, prev2

    p = prev1
    m = np.arange(L + 1, dtype=float)
    # derivatives are undefined at the poles; callers that need them stay away
    with np.errstate(divide="ignore", invalid="ignore"):
        if L == 0:
            dp = np.zeros_like(p)
        else:
            c = np.sqrt((2.0 * L + 1.0) * (L * L - m * m) / (2.0 * L - 1.0))
            dp = (L * x * p - c[:, None] * prev2) / s
        lam = L * (L + 1.0)
        d2p = -(x / s) * dp - (lam - (m * m)[:, None] / (s * s)) * p
    return p, dp, d2p


def assoc_legendre_jet(ell: int, m: int, theta: float) -> tuple[float, float, float]:
    """Orthonormal associated Legendre value and two theta-derivatives.

    >>> round(assoc_legendre_jet(0, 0, 1.0)[0], 7)
    0.2820948
    """
    if not 0 <= m <= ell:
        raise DomainError(f"order m={m} outside 0..{ell}")
    if not 0.0 < theta < math.pi:
        raise DomainError("theta must lie strictly inside (0, pi); use the rotated chart at the poles")
    p, dp, d2p = normalized_legendre_table(ell, np.array([theta]))
    return float(p[m, 0]), float(dp[m, 0]), float(d2p[m, 0])


def hermite(q: int, x):
    """Probabilists' Hermite polynomial He_q(x)."""
    if q < 0:
        raise DomainError("Hermite index must be non-negative")
    x = np.asarray(x, dtype=float)
    h_prev = np.zeros_like(x)
    h = np.ones_like(x)
    for k in range(q):
        h_prev, h = h, x * h - k * h_prev
    return float(h) if h.ndim == 0 else h


def _j0_series(x: np.ndarray) -> np.ndarray:
    y = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 60):
        term = -term * y / (k * k)
        total += term
    return total


def _j0_asymptotic(x: np.ndarray) -> np.ndarray:
    # Hankel expansion, truncated at the smallest term (x >= 12 keeps it < 1e-11)
    P = np.zeros_like(x)
    Q = np.zeros_like(x)
    a = 1.0
    term_prev = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    inv = 1.0 / x
    power = np.ones_like(x)
    for k in range(0, 80):
        if k > 0:
            a *= -((2 * k - 1) ** 2) / (k * 8.0)
            power = power * inv
        term = a * power
        mag = np.abs(term)
        active &= mag < term_prev
        contrib = np.where(active, term, 0.0)
        # P collects even k with sign (-1)^(k/2); Q collects odd k with sign (-1)^((k-1)/2)
        if k % 2 == 0:
            P += contrib if (k // 2) % 2 == 0 else -contrib
        else:
            Q += contrib if ((k - 1) // 2) % 2 == 0 else -contrib
        term_prev = np.where(active, mag, term_prev)
        if not active.any():
            break
    chi = x - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def bessel_j0(x):
    """Bessel function J_0 for x >= 0 (power series below 12, Hankel above)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("bessel_j0 is implemented for x >= 0")
    flat = np.atleast_1d(x)
    out = np.empty_like(flat)
    small = flat < BESSEL_SWITCH
    if small.any():
        out[small] = _j0_series(flat[small])
    if (~small).any():
        out[~small] = _j0_asymptotic(flat[~small])
    return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    interval: Interval,
    rule: QuadratureRule | None = None,
    panel_width: float = DEFAULT_PANEL_WIDTH,
) -> float:
    """Integrate ``f`` over ``interval`` by panelled Gauss-Legendre.

    Infinite endpoints are truncated at ``|t| = 8``. For ``exp(-t^2/2)``
    times a polynomial of degree <= 4 the discarded tail is below 1e-11; at
    degree 6 it is about 1e-9. ``f`` must accept an array of abscissae.
    """
    rule = rule or _gauss_legendre(DEFAULT_ORDER)
    a, b = interval.clipped(TRUNCATION)
    if b <= a:
        return 0.0
    n_panels = max(1, int(math.ceil((b - a) / panel_width)))
    edges = np.linspace(a, b, n_panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        t, w = rule.on(lo, hi)
        vals = np.asarray(f(t), dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            raise NumericalError(f"non-finite integrand at t={t[bad][0]!r}")
        total += float(np.dot(w, vals))
    return total


def gauss_legendre_sphere(n_lat: int, n_phi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Product rule on the sphere: colatitudes, longitudes, per-latitude weights.

    The latitude weights already include the longitude spacing, so
    ``sum_j w_j sum_k g(theta_j, phi_k)`` approximates the surface integral.
    It is exact for spherical polynomials of degree < min(2 n_lat, n_phi).
    """
    rule = _gauss_legendre(n_lat)
    theta = np.arccos(rule.nodes[::-1])
    w = rule.weights[::-1] * (2.0 * math.pi / n_phi)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    return theta, phi, w
