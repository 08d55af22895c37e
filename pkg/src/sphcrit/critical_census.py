"""Enumerate, classify and count the critical points of a sampled field.

Each chart scans a latitude band that contains the region it owns, with a
margin. Every grid cell where both raw gradient components change sign
seeds a damped Newton iteration. Converged points outside the chart's
region are discarded, the survivors from both charts are merged, and the
Morse identity ``#max + #min - #saddle = 2`` certifies that nothing was
missed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .intervals import Interval
from .random_field import (
    CHARTS,
    ROTATED,
    STANDARD,
    ConfigError,
    HarmonicField,
    SpherePoint,
    cartesian,
    chart_partials,
    covariant_from_partials,
    grid_partials,
)

MAXIMUM, MINIMUM, SADDLE = "maximum", "minimum", "saddle"
_KIND_CODE = {MINIMUM: -1, SADDLE: 0, MAXIMUM: 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}

DEFAULT_OVERSAMPLE = 8.0
DEFAULT_NEWTON_TOL = 1e-10
DEGENERACY = 1e-8
MAX_NEWTON_ITER = 50
#: clustered points of one kind whose values differ by more than this are distinct
_SAME_VALUE = 1e-9
_BAND_MARGIN = 3  # cells
#: bilinear roots this far outside their cell (in cell units) are still used
_BILINEAR_SLACK = 0.25
#: refinement re-seeds around points with |det H| below this times lambda^2
_REFINE_DET = 0.05


class CensusResolutionError(RuntimeError):
    """The census failed its completeness certificate; retry at higher oversampling."""


@dataclass(frozen=True)
class CriticalPoint:
    position: SpherePoint
    value: float
    kind: str
    hess_det: float
    grad_norm_residual: float


@dataclass(frozen=True)
class CriticalCensus:
    """All critical points of one field, stored column-wise.

    ``kinds`` holds -1 for minima, 0 for saddles and +1 for maxima.
    """

    ell: int
    values: np.ndarray
    kinds: np.ndarray
    xyz: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    chart: np.ndarray  # 0 standard, 1 rotated
    hess_det: np.ndarray
    residual: np.ndarray
    resolution_meta: dict = dc_field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return int(self.values.size)

    @property
    def n_max(self) -> int:
        return int(np.count_nonzero(self.kinds == 1))

    @property
    def n_min(self) -> int:
        return int(np.count_nonzero(self.kinds == -1))

    @property
    def n_saddle(self) -> int:
        return int(np.count_nonzero(self.kinds == 0))

    @property
    def points(self) -> list[CriticalPoint]:
        return [
            CriticalPoint(
                SpherePoint(float(self.theta[i]), float(self.phi[i]), CHARTS[int(self.chart[i])]),
                float(self.values[i]),
                _KIND_NAME[int(self.kinds[i])],
                float(self.hess_det[i]),
                float(self.residual[i]),
            )
            for i in range(self.n_total)
        ]

    def without(self, index: int) -> "CriticalCensus":
        """Copy with one point removed (useful for testing the certificate)."""
        keep = np.ones(self.n_total, dtype=bool)
        keep[index] = False
        return _subset(self, keep)


def _subset(c: CriticalCensus, keep: np.ndarray) -> CriticalCensus:
    return CriticalCensus(
        c.ell, c.values[keep], c.kinds[keep], c.xyz[keep], c.theta[keep], c.phi[keep],
        c.chart[keep], c.hess_det[keep], c.residual[keep], dict(c.resolution_meta),
    )


def _bilinear_roots(a, b, delta):
    """Common zeros of two bilinear interpolants on the unit cell.

    ``a`` and ``b`` hold corner values ``(c00, c10, c01, c11)`` with the
    first index along theta. Returns up to two ``(s, t, valid)`` triples,
    keeping roots inside ``[-delta, 1 + delta]^2``.
    """
    a0, a1, a2, a3 = a[0], a[1] - a[0], a[2] - a[0], a[0] - a[1] - a[2] + a[3]
    b0, b1, b2, b3 = b[0], b[1] - b[0], b[2] - b[0], b[0] - b[1] - b[2] + b[3]
    # eliminate s from A = 0, B = 0: quadratic in t
    qa = b2 * a3 - b3 * a2
    qb = b0 * a3 + b2 * a1 - b1 * a2 - b3 * a0
    qc = b0 * a1 - b1 * a0
    out = []
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = qb * qb - 4.0 * qa * qc
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        lin = np.abs(qa) <= 1e-12 * (np.abs(qb) + np.abs(qc))
        # numerically stable quadratic roots q/qa and qc/q
        q = -0.5 * (qb + np.copysign(sq, qb))
        for first in (True, False):
            t = np.where(lin, -qc / qb, q / qa if first else qc / q)
            den_a = a1 + a3 * t
            den_b = b1 + b3 * t
            s_a = -(a0 + a2 * t) / den_a
            s_b = -(b0 + b2 * t) / den_b
            s_ = np.where(np.abs(den_a) >= np.abs(den_b), s_a, s_b)
            ok = np.isfinite(s_) & np.isfinite(t)
            ok &= (s_ >= -delta) & (s_ <= 1 + delta) & (t >= -delta) & (t <= 1 + delta)
            if not first:
                ok &= ~lin
            out.append((s_, t, ok))
    return out


def _chart_candidates(coeffs, ell, chart, h):
    """Newton seeds for one chart from bilinear models of the gradient.

    Every cell where both raw partials change sign contributes the roots of
    its bilinear model (up to two, so close pairs sharing a cell are both
    seeded), or its centre when the model has no root nearby.
    """
    lo = math.pi / 4 - _BAND_MARGIN * h
    n_theta = int(math.ceil((math.pi / 2 + 2 * _BAND_MARGIN * h) / h)) + 1
    theta = lo + h * np.arange(n_theta)
    n_phi = int(math.ceil(2 * math.pi / h))
    hp = 2 * math.pi / n_phi
    phi = hp * np.arange(n_phi)
    _, ft, fp = grid_partials(coeffs, ell, theta, phi, order=1)

    def corners(a):
        b = np.roll(a, -1, axis=1)
        return a[:-1], a[1:], b[:-1], b[1:]

    def changes(c):
        mn = np.minimum(np.minimum(c[0], c[1]), np.minimum(c[2], c[3]))
        mx = np.maximum(np.maximum(c[0], c[1]), np.maximum(c[2], c[3]))
        return (mn <= 0) & (mx >= 0)

    ca, cb = corners(ft), corners(fp)
    i, j = np.nonzero(changes(ca) & changes(cb))
    a = np.array([c[i, j] for c in ca])
    b = np.array([c[i, j] for c in cb])
    roots = _bilinear_roots(a, b, _BILINEAR_SLACK)
    any_root = roots[0][2] | roots[1][2]
    tc, pc, ci, cj = [], [], [], []
    for s_, t_, ok in roots:
        tc.append(theta[i[ok]] + s_[ok] * h)
        pc.append(phi[j[ok]] + t_[ok] * hp)
        ci.append(i[ok])
        cj.append(j[ok])
    modelled = np.concatenate([np.ones(sum(c.size for c in ci), dtype=bool), np.zeros(int((~any_root).sum()), dtype=bool)])
    tc.append(theta[i[~any_root]] + 0.5 * h)
    pc.append(phi[j[~any_root]] + 0.5 * hp)
    ci.append(i[~any_root])
    cj.append(j[~any_root])
    tc = np.concatenate(tc)
    pc = np.concatenate(pc) % (2 * math.pi)
    corner = np.stack([theta[np.concatenate(ci)], phi[np.concatenate(cj)]], axis=1)
    z = cartesian(tc, pc, chart)[:, 2]
    widen = math.sin(2 * _BAND_MARGIN * h)
    edge = 1 / math.sqrt(2)
    keep = np.abs(z) <= edge + widen if chart == STANDARD else np.abs(z) >= edge - widen
    cells = _Seeds(corner[keep, 0], corner[keep, 1], h, hp, modelled[keep])
    return tc[keep], pc[keep], cells, n_theta, n_phi


@dataclass
class _Seeds:
    """Cell of origin of each seed and whether it came from a bilinear root."""

    theta0: np.ndarray
    phi0: np.ndarray
    ht: float
    hp: float
    modelled: np.ndarray

    def contains(self, theta, phi, slack):
        s = (theta - self.theta0) / self.ht
        t = ((phi - self.phi0 + math.pi) % (2 * math.pi) - math.pi) / self.hp
        return (s >= -slack) & (s <= 1 + slack) & (t >= -slack) & (t <= 1 + slack)


def _newton(coeffs, ell, theta, phi, h, tol, max_iter, cap=1.0):
    """Vectorised damped Newton on the raw gradient ``(f_t, f_p)``."""
    lam = ell * (ell + 1.0)
    n = theta.size
    theta = theta.copy()
    phi = phi.copy()
    done = np.zeros(n, dtype=bool)
    parts = np.full((6, n), np.nan)
    iters = np.zeros(n, dtype=int)
    active = np.arange(n)
    for it in range(max_iter + 1):
        if active.size == 0:
            break
        th, ph = theta[active], phi[active]
        pa = chart_partials(coeffs, ell, th, ph)
        parts[:, active] = pa
        s = np.sin(th)
        _, ft, fp, ftt, ftp, fpp = pa
        res = np.sqrt(ft * ft + (fp / s) ** 2)
        conv = res <= tol * lam
        done[active[conv]] = True
        iters[active] = it
        if it == max_iter:
            break
        go = ~conv & (s > 0.05)
        active = active[go]
        th, ph, s = th[go], ph[go], s[go]
        ft, fp, ftt, ftp, fpp = ft[go], fp[go], ftt[go], ftp[go], fpp[go]
        det = ftt * fpp - ftp * ftp
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = -(fpp * ft - ftp * fp) / det
            dp = -(ftt * fp - ftp * ft) / det
        length = np.sqrt(dt * dt + (s * dp) ** 2)
        bad = ~np.isfinite(length)
        damp = np.where(length > 0.5 * h, 0.5, 1.0)
        damp = np.where(damp * length > cap * h, cap * h / np.where(length > 0, length, 1.0), damp)
        damp[bad] = 0.0
        theta[active] = th + damp * np.where(bad, 0.0, dt)
        phi[active] = (ph + damp * np.where(bad, 0.0, dp)) % (2 * math.pi)
        active = active[~bad]
    return theta, phi, parts, done, iters


def find_critical_points(
    field: HarmonicField,
    grid_oversample: float = DEFAULT_OVERSAMPLE,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    dedup_radius: float | None = None,
    max_iter: int = MAX_NEWTON_ITER,
) -> CriticalCensus:
    """Locate and classify every critical point of ``field``.

    Parameters
    ----------
    field
        Field of degree ``ell >= 1``.
    grid_oversample
        Grid points per ``1/ell`` in each direction; at least 6.
    newton_tol
        Convergence requires ``|grad f| <= newton_tol * lambda``.
    dedup_radius
        Geodesic merge radius, default ``0.5 / ell``. Points in one
        cluster whose values differ by more than 1e-7 are kept apart.

    Raises
    ------
    CensusResolutionError
        If a point is degenerate or the Morse identity fails.
    """
    ell = field.ell
    if grid_oversample < 6:
        raise ConfigError("grid_oversample must be at least 6")
    if newton_tol <= 0:
        raise ConfigError("newton_tol must be positive")
    lam = field.lam
    radius = 0.5 / ell if dedup_radius is None else float(dedup_radius)
    h = math.pi / (grid_oversample * ell)

    meta = {
        "grid_oversample": float(grid_oversample),
        "newton_tol": float(newton_tol),
        "dedup_radius": radius,
        "cell": h,
        "seeds": 0,
        "newton_failures": 0,
        "reseeded_cells": 0,
        "refined": False,
    }
    found = []
    for code, chart in enumerate(CHARTS):
        coeffs = field.chart_coeffs(chart)
        tc, pc, cells, nt, nphi = _chart_candidates(coeffs, ell, chart, h)
        meta[f"grid_{chart}"] = [nt, nphi]
        found.append(_solve(field, code, tc, pc, h, newton_tol, max_iter, meta, own_only=True, cells=cells))
    census = _assemble(field, found, radius, meta)

    if not morse_check(census):
        # close saddle/extremum pairs can share a cell; re-seed around near-degenerate points
        meta["refined"] = True
        weak = np.nonzero(np.abs(census.hess_det) < _REFINE_DET * lam * lam)[0]
        for code, chart in enumerate(CHARTS):
            sel = weak[census.chart[weak] == code]
            if sel.size == 0:
                continue
            ang = np.arange(8) * (math.pi / 4)
            rad = np.array([0.5, 1.0, 1.5]) * h
            dt = (rad[:, None] * np.cos(ang)[None, :]).ravel()
            dp = (rad[:, None] * np.sin(ang)[None, :]).ravel()
            th0 = census.theta[sel][:, None]
            tc = (th0 + dt[None, :]).ravel()
            pc = (census.phi[sel][:, None] + dp[None, :] / np.sin(th0)).ravel()
            found.append(_solve(field, code, tc, pc, h, newton_tol, max_iter, meta, own_only=False))
        census = _assemble(field, found, radius, meta)

    det = census.hess_det
    n_degenerate = int(np.count_nonzero(np.abs(det) < DEGENERACY * lam * lam))
    if n_degenerate:
        raise CensusResolutionError(
            f"{n_degenerate} degenerate critical point(s) at ell={ell}; "
            f"retry with grid_oversample > {grid_oversample}"
        )
    if not morse_check(census):
        raise CensusResolutionError(
            f"Morse identity failed at ell={ell}: max={census.n_max} min={census.n_min} "
            f"saddle={census.n_saddle}; retry with grid_oversample > {grid_oversample}"
        )
    return census


def _solve(field, code, tc, pc, h, tol, max_iter, meta, own_only, cells=None):
    chart = CHARTS[code]
    coeffs = field.chart_coeffs(chart)
    meta["seeds"] += int(tc.size)
    theta, phi, parts, done, _ = _newton(coeffs, field.ell, tc, pc, h, tol, max_iter, cap=0.5)
    if cells is not None:
        # a bilinear root that fails or converges elsewhere signals a badly
        # modelled cell; search it again from a 3 x 3 set of seeds
        redo = cells.modelled & (~done | ~cells.contains(theta, phi, _BILINEAR_SLACK))
        meta["reseeded_cells"] += int(redo.sum())
        if redo.any():
            u = np.array([0.1, 0.5, 0.9])
            t2 = (cells.theta0[redo][:, None, None] + cells.ht * u[None, :, None] + 0 * u[None, None, :]).ravel()
            p2 = (cells.phi0[redo][:, None, None] + cells.hp * u[None, None, :] + 0 * u[None, :, None]).ravel()
            meta["seeds"] += int(t2.size)
            th2, ph2, pa2, dn2, _ = _newton(coeffs, field.ell, t2, p2 % (2 * math.pi), h, tol, max_iter, cap=0.25)
            theta, phi = np.concatenate([theta, th2]), np.concatenate([phi, ph2])
            parts, done = np.concatenate([parts, pa2], axis=1), np.concatenate([done, dn2])
    meta["newton_failures"] += int(np.count_nonzero(~done))
    theta, phi, parts = theta[done], phi[done], parts[:, done]
    xyz = cartesian(theta, phi, chart)
    if own_only:
        z = np.abs(xyz[:, 2])
        edge = 1 / math.sqrt(2)
        keep = z <= edge + 1e-9 if chart == STANDARD else z >= edge - 1e-9
    else:
        keep = np.sin(theta) > 0.05
    return theta[keep], phi[keep], np.full(int(keep.sum()), code, dtype=np.int8), parts[:, keep], xyz[keep]


def _assemble(field, found, radius, meta):
    theta = np.concatenate([f[0] for f in found])
    phi = np.concatenate([f[1] for f in found])
    chart = np.concatenate([f[2] for f in found])
    parts = np.concatenate([f[3] for f in found], axis=1)
    xyz = np.concatenate([f[4] for f in found])
    value, grad, hess = covariant_from_partials(parts, theta)
    residual = np.linalg.norm(grad, axis=1)

    det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] ** 2
    tr = hess[:, 0, 0] + hess[:, 1, 1]
    kinds = np.where(det < 0, 0, np.where(tr < 0, 1, -1)).astype(np.int8)

    # canonical order so the merge does not depend on seed order
    order = np.lexsort((xyz[:, 2], xyz[:, 1], xyz[:, 0]))
    keep = order[_dedup(xyz[order], value[order], kinds[order], residual[order], radius)]
    theta, phi, chart, xyz = theta[keep], phi[keep], chart[keep], xyz[keep]
    value, kinds, det, residual = value[keep], kinds[keep], det[keep], residual[keep]
    return CriticalCensus(field.ell, value, kinds, xyz, theta, phi, chart, det, residual, dict(meta))


def _dedup(xyz, value, kinds, residual, radius):
    """Indices of cluster representatives (smallest residual per cluster).

    Two converged copies of one point agree in kind and, to rounding, in
    value; a genuine nearby pair (a saddle next to an extremum) does not.
    """
    n = xyz.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    chord = 2 * math.sin(0.5 * radius)
    pairs = cKDTree(xyz).query_pairs(chord, output_type="ndarray")
    if pairs.size:
        a, b = pairs[:, 0], pairs[:, 1]
        same = (kinds[a] == kinds[b]) & (np.abs(value[a] - value[b]) <= _SAME_VALUE)
        pairs = pairs[same]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
    _, labels = connected_components(graph, directed=False)
    best = {}
    for i in np.lexsort((residual, labels)):
        best.setdefault(int(labels[i]), int(i))
    return np.sort(np.fromiter(best.values(), dtype=int))


def count_in_interval(census: CriticalCensus, interval: Interval) -> int:
    """Number of critical points with value in ``[lo, hi)``."""
    return int(np.count_nonzero(interval.contains(census.values)))


def euler_characteristic_excursion(census: CriticalCensus, u: float) -> int:
    """Euler characteristic of ``{f >= u}`` by Morse counting.

    Maxima and minima with value ``>= u`` count +1, saddles count -1.
    """
    above = census.values >= u
    k = census.kinds[above]
    return int(np.count_nonzero(k != 0) - np.count_nonzero(k == 0))


def morse_check(census: CriticalCensus) -> bool:
    return census.n_max + census.n_min - census.n_saddle == 2
