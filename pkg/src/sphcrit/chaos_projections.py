"""Sample polyspectra ``h_{ell,q} = int H_q(f)`` and the chaos statistics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .closed_forms import fourth_chaos_bracket, nu_c
from .intervals import Interval
from .random_field import ConfigError, HarmonicField, _split
from .special_functions import gauss_legendre_sphere, hermite, normalized_legendre_table

TOTAL = "total"
#: F_ell = TOTAL_F_CONSTANT * lambda * h_{ell,4}
TOTAL_F_CONSTANT = -1.0 / (72.0 * math.sqrt(3.0) * math.pi)


@lru_cache(maxsize=16)
def _synthesis(ell: int, n_lat: int):
    n_phi = max(2 * n_lat, 4 * ell + 2)
    theta, phi, w = gauss_legendre_sphere(n_lat, n_phi)
    p = normalized_legendre_table(ell, theta)[0]
    m = np.arange(ell + 1)[:, None]
    cos, sin = np.cos(m * phi[None, :]), np.sin(m * phi[None, :])
    for a in (p, cos, sin, w):
        a.setflags(write=False)
    return p, cos, sin, w


def field_on_quadrature_grid(field: HarmonicField, quad_res: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Field values on the product grid and the matching per-latitude weights."""
    ell = field.ell
    n_lat = 4 * ell if quad_res is None else int(quad_res)
    if n_lat < 2 * ell + 1:
        raise ConfigError(f"quad_res={n_lat} below 2*ell+1={2 * ell + 1} latitudes")
    p, cos, sin, w = _synthesis(ell, n_lat)
    alpha, beta = _split(field.coeffs, ell)
    vals = p.T @ (alpha[:, None] * cos + beta[:, None] * sin)
    return vals, w


def polyspectrum(field: HarmonicField, q: int, quad_res: int | None = None) -> float:
    """``int_{S^2} H_q(f(x)) dx`` by Gauss-Legendre in ``cos theta`` times trapezoid in ``phi``.

    The default ``4 ell`` latitudes integrate ``H_q(f)`` exactly for ``q <= 4``.
    """
    if q not in (2, 3, 4):
        raise ConfigError("polyspectrum supports q in {2, 3, 4}")
    vals, w = field_on_quadrature_grid(field, quad_res)
    return float(w @ hermite(q, vals).sum(axis=1))


def polyspectra(field: HarmonicField, quad_res: int | None = None) -> dict[int, float]:
    """``h_2``, ``h_3``, ``h_4`` from a single synthesis."""
    vals, w = field_on_quadrature_grid(field, quad_res)
    return {q: float(w @ hermite(q, vals).sum(axis=1)) for q in (2, 3, 4)}


def h2_from_coefficients(field: HarmonicField) -> float:
    """``(4 pi/(2 ell + 1)) sum_m (a_m^2 - 1)``."""
    a = field.coeffs
    return 4.0 * math.pi / (2 * field.ell + 1) * float(np.sum(a * a - 1.0))


def s_statistic(field: HarmonicField, interval: Interval, h2: float | None = None) -> float:
    """Second-chaos proxy ``(lambda/2) nu_c(I) (1/2pi) h_2`` for ``N(I)``."""
    h2 = polyspectrum(field, 2) if h2 is None else h2
    return s_constant(field.ell, interval) * h2


@lru_cache(maxsize=256)
def s_constant(ell: int, interval: Interval) -> float:
    if interval.is_real:
        # nu_c(R) vanishes identically; quadrature leaves ~1e-12
        return 0.0
    lam = ell * (ell + 1.0)
    return lam / 2.0 * nu_c(interval) / (2.0 * math.pi)


@lru_cache(maxsize=256)
def f_constant(interval: Interval | str, normalization: str = "covariance") -> float:
    """Multiplier of ``lambda h_4`` in ``F(I)``.

    ``"covariance"`` gives ``B(I)/(192 pi)`` with ``B = 51 I_0 - 22 I_2 + I_4``.
    This is the regression coefficient of the fourth-chaos part of ``N(I)``
    on ``h_4``, and it reduces to the total-count constant ``-1/(72 sqrt3 pi)``
    at ``I = R`` because ``B(R) = -8/(3 sqrt 3)``. ``"display"`` gives the
    alternative ``B(I)/(8 pi)``, which is 24 times larger.
    """
    if interval == TOTAL:
        return TOTAL_F_CONSTANT
    b = fourth_chaos_bracket(interval)
    if normalization == "covariance":
        return b / (192.0 * math.pi)
    if normalization == "display":
        return b / (8.0 * math.pi)
    raise ConfigError(f"unknown normalization {normalization!r}")


def f_statistic(
    field: HarmonicField, interval: Interval | str = TOTAL, h4: float | None = None, normalization: str = "covariance"
) -> float:
    """Fourth-chaos proxy ``F`` for ``N`` (``interval="total"``) or ``F(I)``."""
    h4 = polyspectrum(field, 4) if h4 is None else h4
    return f_constant(interval, normalization) * field.lam * h4


@dataclass(frozen=True)
class ChaosStats:
    h2: float
    h4: float
    s_of_I: dict = dc_field(default_factory=dict)
    f_total: float = 0.0
    f_of_I: dict = dc_field(default_factory=dict)
    h3: float = 0.0
    h2_coefficients: float = 0.0


def chaos_stats(field: HarmonicField, intervals, quad_res: int | None = None) -> ChaosStats:
    h = polyspectra(field, quad_res)
    return ChaosStats(
        h2=h[2],
        h4=h[4],
        s_of_I={I: s_statistic(field, I, h[2]) for I in intervals},
        f_total=f_statistic(field, TOTAL, h[4]),
        f_of_I={I: f_statistic(field, I, h[4]) for I in intervals},
        h3=h[3],
        h2_coefficients=h2_from_coefficients(field),
    )
