"""Monte Carlo orchestration: per-sample records, estimators and convergence sweeps."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .chaos_projections import chaos_stats
from .critical_census import (
    DEFAULT_NEWTON_TOL,
    DEFAULT_OVERSAMPLE,
    CensusResolutionError,
    count_in_interval,
    euler_characteristic_excursion,
    find_critical_points,
    morse_check,
)
from .intervals import Interval
from .random_field import ConfigError, sample_field

log = logging.getLogger(__name__)

MIN_RECORDS = 30
DEFAULT_BATCHES = 20
#: a run with more flagged samples than this fraction fails
MAX_FLAG_RATE = 0.01


class EstimationError(ArithmeticError):
    """An estimator is undefined on the given records."""


@dataclass(frozen=True)
class ExperimentConfig:
    ells: tuple = (20, 40, 80)
    n_samples: int = 200
    intervals: tuple = (Interval(-math.inf, 1.0),)
    levels: tuple = (-10.0, 1.0, 10.0)
    seed: int = 20240101
    grid_oversample: float = DEFAULT_OVERSAMPLE
    newton_tol: float = DEFAULT_NEWTON_TOL
    dedup_radius: float | None = None
    quad_res: int | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ells", tuple(int(e) for e in self.ells))
        object.__setattr__(self, "intervals", tuple(self.intervals))
        object.__setattr__(self, "levels", tuple(float(u) for u in self.levels))
        if not self.ells:
            raise ConfigError("ells must list at least one degree")
        if any(e < 2 for e in self.ells):
            raise ConfigError("all degrees must be >= 2")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if not self.intervals:
            raise ConfigError("intervals must be nonempty")
        if any(not isinstance(i, Interval) for i in self.intervals):
            raise ConfigError("intervals must be Interval objects")
        if self.grid_oversample < 6:
            raise ConfigError("grid_oversample must be >= 6")
        if self.newton_tol <= 0:
            raise ConfigError("newton_tol must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def level_key(u: float) -> str:
    return repr(float(u))


@dataclass
class SampleRecord:
    """Observables of one field. ``elapsed`` is timing only and excluded from equality."""

    ell: int
    index: int
    seed: int
    flagged: bool = False
    error: str | None = None
    retries: int = 0
    grid_oversample: float = DEFAULT_OVERSAMPLE
    n_total: int | None = None
    n_max: int | None = None
    n_min: int | None = None
    n_saddle: int | None = None
    counts: dict = dc_field(default_factory=dict)
    h2: float | None = None
    h2_coefficients: float | None = None
    h3: float | None = None
    h4: float | None = None
    s: dict = dc_field(default_factory=dict)
    f_total: float | None = None
    f: dict = dc_field(default_factory=dict)
    chi: dict = dc_field(default_factory=dict)
    elapsed: float = dc_field(default=0.0, compare=False)

    def value(self, name: str) -> float:
        """Observable by name: ``n_total``, ``h2``, ``count:(-inf,1.0)``, ``chi:1.0`` and so on."""
        if ":" in name:
            kind, key = name.split(":", 1)
            table = {"count": self.counts, "s": self.s, "f": self.f, "chi": self.chi}.get(kind)
            if table is None or key not in table:
                raise KeyError(f"unknown observable {name!r}")
            return table[key]
        if not hasattr(self, name) or name in ("counts", "s", "f", "chi", "error"):
            raise KeyError(f"unknown observable {name!r}")
        return getattr(self, name)


def run_sample(config: ExperimentConfig, ell: int, index: int) -> SampleRecord:
    """Full pipeline for sample ``index`` at degree ``ell``; deterministic in ``(seed, ell, index)``.

    A census that fails its completeness certificate is retried once at
    twice the oversampling; a second failure flags the record.
    """
    if not 0 <= index < config.n_samples:
        raise ConfigError(f"index {index} outside 0..{config.n_samples - 1}")
    start = time.perf_counter()
    field = sample_field(ell, config.seed, index)
    rec = SampleRecord(ell=ell, index=index, seed=config.seed, grid_oversample=config.grid_oversample)
    census = None
    oversample = config.grid_oversample
    for attempt in range(2):
        try:
            census = find_critical_points(field, oversample, config.newton_tol, config.dedup_radius)
            break
        except CensusResolutionError as exc:
            log.warning("ell=%d index=%d: %s", ell, index, exc)
            rec.error = str(exc)
            if attempt == 0:
                rec.retries += 1
                oversample *= 2
    rec.grid_oversample = oversample
    stats = chaos_stats(field, config.intervals, config.quad_res)
    rec.h2, rec.h3, rec.h4 = stats.h2, stats.h3, stats.h4
    rec.h2_coefficients = stats.h2_coefficients
    rec.f_total = stats.f_total
    rec.s = {I.to_text(): v for I, v in stats.s_of_I.items()}
    rec.f = {I.to_text(): v for I, v in stats.f_of_I.items()}
    if census is None:
        rec.flagged = True
    else:
        rec.error = None
        rec.n_total, rec.n_max, rec.n_min, rec.n_saddle = census.n_total, census.n_max, census.n_min, census.n_saddle
        rec.counts = {I.to_text(): count_in_interval(census, I) for I in config.intervals}
        rec.chi = {level_key(u): euler_characteristic_excursion(census, u) for u in config.levels}
        assert morse_check(census)
    rec.elapsed = time.perf_counter() - start
    return rec


def _run_one(args):
    return run_sample(*args)


def run_experiment(config: ExperimentConfig, ells=None, progress=None) -> list[SampleRecord]:
    """All samples for all degrees, ordered by ``(ell, index)`` whatever the worker count."""
    ells = config.ells if ells is None else tuple(ells)
    tasks = [(config, ell, i) for ell in ells for i in range(config.n_samples)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            records = list(pool.map(_run_one, tasks, chunksize=4))
    else:
        records = []
        for k, t in enumerate(tasks):
            records.append(_run_one(t))
            if progress is not None:
                progress(k + 1, len(tasks), records[-1])
    return records


def accepted(records, ell: int | None = None) -> list[SampleRecord]:
    return [r for r in records if not r.flagged and (ell is None or r.ell == ell)]


def flag_rate(records) -> float:
    return sum(r.flagged for r in records) / max(len(records), 1)


def observable(records, name: str) -> np.ndarray:
    return np.array([r.value(name) for r in records], dtype=float)


def _as_array(records, x):
    return observable(records, x) if isinstance(x, str) else np.asarray(x, dtype=float)


def _pearson(x, y):
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = math.sqrt(float(x @ x)), math.sqrt(float(y @ y))
    if sx == 0 or sy == 0:
        raise EstimationError("zero-variance observable")
    return float(x @ y) / (sx * sy)


def _residual(x, z):
    zc = z - z.mean()
    vz = float(zc @ zc)
    if vz <= 0:
        raise EstimationError("control observable has zero variance")
    xc = x - x.mean()
    r = xc - (float(xc @ zc) / vz) * zc
    if float(r @ r) <= 1e-24 * max(float(xc @ xc), 1e-300):
        raise EstimationError("degenerate residual: observable is a linear function of the control")
    return r


def _partial(x, y, z):
    return _pearson(_residual(x, z), _residual(y, z))


def batch_stderr(stat, columns, n_batches: int = DEFAULT_BATCHES) -> float:
    """Standard error of ``stat(*columns)`` from nonoverlapping batches.

    Uses the delete-one-batch jackknife: the statistic is recomputed with
    each of the ``n_batches`` contiguous batches left out.
    """
    n = len(columns[0])
    b = max(10, min(n_batches, n // 3))
    if n < b:
        raise EstimationError(f"need at least {b} records for batch errors")
    edges = np.linspace(0, n, b + 1).astype(int)
    reps = []
    for k in range(b):
        keep = np.ones(n, dtype=bool)
        keep[edges[k] : edges[k + 1]] = False
        reps.append(stat(*(c[keep] for c in columns)))
    reps = np.array(reps)
    return float(math.sqrt((b - 1) / b * np.sum((reps - reps.mean()) ** 2)))


def _check_n(n):
    if n < MIN_RECORDS:
        raise EstimationError(f"need at least {MIN_RECORDS} records, got {n}")


def correlation(records, x, y) -> tuple[float, float]:
    """Pearson correlation with batch standard error."""
    xs, ys = _as_array(records, x), _as_array(records, y)
    _check_n(len(xs))
    return _pearson(xs, ys), batch_stderr(_pearson, (xs, ys))


def partial_correlation(records, x, y, z) -> tuple[float, float]:
    """Correlation of ``x`` and ``y`` after removing their linear dependence on ``z``."""
    xs, ys, zs = _as_array(records, x), _as_array(records, y), _as_array(records, z)
    _check_n(len(xs))
    return _partial(xs, ys, zs), batch_stderr(_partial, (xs, ys, zs))


def variance(records, x) -> tuple[float, float]:
    xs = _as_array(records, x)
    _check_n(len(xs))

    def var(a):
        return float(np.var(a, ddof=1))

    return var(xs), batch_stderr(var, (xs,))


def mean(records, x) -> tuple[float, float]:
    xs = _as_array(records, x)
    _check_n(len(xs))
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(len(xs)))


def observable_names(config: ExperimentConfig) -> list[str]:
    names = ["n_total"]
    names += [f"count:{I.to_text()}" for I in config.intervals]
    names += [f"s:{I.to_text()}" for I in config.intervals]
    names += ["f_total"] + [f"f:{I.to_text()}" for I in config.intervals]
    names += ["h2", "h4"] + [f"chi:{level_key(u)}" for u in config.levels]
    return names


@dataclass
class EstimatorSummary:
    ell: int
    n_records: int
    n_flagged: int
    names: list
    mean: dict
    variance: dict
    corr: np.ndarray
    corr_partial_h2: np.ndarray
    corr_stderr: np.ndarray

    def rows(self):
        """Pairwise rows ``(ell, x, y, corr, corr_partial_h2, stderr)``, upper triangle."""
        k = len(self.names)
        for i in range(k):
            for j in range(i + 1, k):
                yield (self.ell, self.names[i], self.names[j], self.corr[i, j], self.corr_partial_h2[i, j], self.corr_stderr[i, j])

    def to_json(self) -> dict:
        def clean(m):
            return [[None if not np.isfinite(v) else float(v) for v in row] for row in m]

        return {
            "ell": self.ell,
            "n_records": self.n_records,
            "n_flagged": self.n_flagged,
            "observables": list(self.names),
            "mean": self.mean,
            "variance": self.variance,
            "corr": clean(self.corr),
            "corr_partial_h2": clean(self.corr_partial_h2),
            "corr_stderr": clean(self.corr_stderr),
        }


def summarize(records, config: ExperimentConfig) -> list[EstimatorSummary]:
    """Per-degree means, variances, correlations and h2-partial correlations.

    Observables that are constant on the sample (for instance ``chi`` at an
    extreme level) get ``nan`` correlations rather than an error.
    """
    out = []
    for ell in config.ells:
        recs = accepted(records, ell)
        n_flag = sum(r.flagged for r in records if r.ell == ell)
        names = observable_names(config)
        cols = {nm: observable(recs, nm) for nm in names}
        k = len(names)
        corr = np.full((k, k), np.nan)
        part = np.full((k, k), np.nan)
        se = np.full((k, k), np.nan)
        h2 = cols["h2"]
        for i in range(k):
            for j in range(k):
                if j < i:
                    corr[i, j], part[i, j], se[i, j] = corr[j, i], part[j, i], se[j, i]
                    continue
                x, y = cols[names[i]], cols[names[j]]
                try:
                    corr[i, j] = _pearson(x, y)
                    se[i, j] = batch_stderr(_pearson, (x, y)) if i != j else 0.0
                except EstimationError:
                    pass
                try:
                    part[i, j] = _partial(x, y, h2)
                except EstimationError:
                    pass
        out.append(
            EstimatorSummary(
                ell,
                len(recs),
                n_flag,
                names,
                {nm: float(np.mean(c)) if c.size else None for nm, c in cols.items()},
                {nm: float(np.var(c, ddof=1)) if c.size > 1 else None for nm, c in cols.items()},
                corr,
                part,
                se,
            )
        )
    return out


def convergence_sweep(config: ExperimentConfig, records=None, interval: Interval | None = None) -> list[dict]:
    """Per-degree trend table for one interval (default: the first configured one)."""
    if len(config.ells) < 2:
        raise ConfigError("convergence_sweep needs at least two degrees")
    records = run_experiment(config) if records is None else records
    interval = config.intervals[0] if interval is None else interval
    key = interval.to_text()
    rows = []
    for ell in config.ells:
        recs = accepted(records, ell)
        c, c_se = correlation(recs, "n_total", f"count:{key}")
        p, p_se = partial_correlation(recs, "n_total", f"count:{key}", "h2")
        v_tot, v_tot_se = variance(recs, "n_total")
        v_int, v_int_se = variance(recs, f"count:{key}")
        cf, cf_se = correlation(recs, "n_total", "f_total")
        cs, cs_se = correlation(recs, f"count:{key}", f"s:{key}")
        norm_tot = ell ** 2 * math.log(ell)
        rows.append(
            {
                "ell": ell,
                "interval": key,
                "n_records": len(recs),
                "n_flagged": sum(r.flagged for r in records if r.ell == ell),
                "corr_total_interval": c,
                "corr_total_interval_se": c_se,
                "partial_h2_total_interval": p,
                "partial_h2_total_interval_se": p_se,
                "var_total_over_l2logl": v_tot / norm_tot,
                "var_total_over_l2logl_se": v_tot_se / norm_tot,
                "var_interval_over_l3": v_int / ell ** 3,
                "var_interval_over_l3_se": v_int_se / ell ** 3,
                "corr_total_f": cf,
                "corr_total_f_se": cf_se,
                "corr_interval_s": cs,
                "corr_interval_s_se": cs_se,
            }
        )
    return rows
