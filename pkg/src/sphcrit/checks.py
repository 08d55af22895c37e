"""Acceptance checks shared by ``sphcrit verify`` and the test suite.

Every check returns a :class:`CheckResult`; nothing here asserts, so a
failing criterion is reported rather than raised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import closed_forms as cf
from . import gaussian_oracle as go
from .chaos_projections import h2_from_coefficients
from .experiments import (
    MAX_FLAG_RATE,
    ExperimentConfig,
    accepted,
    correlation,
    flag_rate,
    level_key,
    mean,
    partial_correlation,
    run_experiment,
    variance,
)
from .intervals import Interval
from .random_field import SpherePoint, cholesky_factors, eval_jet, sample_field
from .special_functions import integrate

log = logging.getLogger(__name__)

SIGMA_BAND = 4.0
INTERVAL = Interval(-math.inf, 1.0)
SWEEP_ELLS = (20, 40, 80)
CHI_ELL = 30
SWEEP_SEED = 20240101
CHI_SEED = 20240202


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str
    data: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.criterion:2d} {self.name}: {self.detail}"

    def to_json(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "passed": self.passed, "detail": self.detail, "data": _plain(self.data)}


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return v.item()
    return v


def random_intervals(n: int = 20, seed: int = 12345) -> list[Interval]:
    """Reproducible mix of bounded and half-infinite intervals."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        lo = float(rng.uniform(-3.0, 2.0))
        hi = lo + float(rng.uniform(0.1, 3.0))
        if k % 5 == 3:
            lo = -math.inf
        elif k % 5 == 4:
            hi = math.inf
        out.append(Interval(lo, hi))
    return out


# closed-form suite --------------------------------------------------------


def check_nu_c() -> CheckResult:
    whole = cf.nu_c(Interval.real())
    gaps = []
    for interval in random_intervals():
        direct = integrate(cf._nu_integrand, interval)
        dual = (5.0 * cf.integral_I(0, interval) - cf.integral_I(2, interval)) / 4.0
        gaps.append(abs(direct - dual))
    ok = abs(whole) <= 1e-10 and max(gaps) <= 1e-10
    return CheckResult(1, "nu_c", ok, f"nu_c(R)={whole:.3e}, max dual gap {max(gaps):.3e} (tol 1e-10)", {"nu_c_R": whole, "gaps": gaps})


def check_total_variance_coefficient() -> CheckResult:
    c = cf.variance_prediction(2, Interval.real()).coeff_l2logl
    err = abs(c - cf.TOTAL_L2LOGL)
    return CheckResult(2, "coeff_l2logl(R)", err <= 1e-8, f"{c:.10f} vs 1/(27 pi^2)={cf.TOTAL_L2LOGL:.10f}, err {err:.2e}", {"value": c})


def check_six_term_assembly() -> CheckResult:
    res = [cf.assemble_variance_expansion(i) for i in [Interval.real(), *random_intervals()]]
    return CheckResult(3, "six-term assembly", max(res) <= 1e-10, f"max residual {max(res):.2e} (tol 1e-10)", {"residuals": res})


def check_c3() -> CheckResult:
    c3 = cf.c_q(3)
    target = 2.0 / (math.pi * math.sqrt(3.0))
    err = abs(c3 - target)
    return CheckResult(4, "c_3", err <= 1e-3, f"{c3:.8f} vs {target:.8f}, err {err:.2e}", {"c3": c3})


def check_cholesky() -> CheckResult:
    rel = {}
    for ell in (2, 10, 100):
        fac = cholesky_factors(ell)
        m, s = fac.matrix(), fac.sigma()
        rel[ell] = float(np.max(np.abs(m @ m.T - s)) / np.max(np.abs(s)))
    ratio = cf.cholesky_ratio_errors(1000)
    ok = max(rel.values()) <= 1e-10 and float(ratio.max()) <= 1e-3
    detail = f"max rel |LL^T - sigma| {max(rel.values()):.1e}; mu ratio errors at 1000 [{' '.join(f'{v:.3e}' for v in ratio)}] (tol 1e-3)"
    return CheckResult(5, "Cholesky factors", ok, detail, {"factor_rel": rel, "ratio_errors": ratio.tolist()})


def check_kernel_moments() -> CheckResult:
    got = np.array(cf.kernel_moment_integrals(1000))
    ratios = got / np.array(cf.kernel_moment_asymptotes(1000))
    ok = bool(np.all((ratios >= 0.9) & (ratios <= 1.1)))
    return CheckResult(6, "kernel moments", ok, f"ratios at ell=1000 {np.array2string(ratios, precision=4)} (band [0.9, 1.1])", {"ratios": ratios.tolist()})


def check_epc_zero() -> CheckResult:
    at0 = cf.epc_coefficients(0.0)
    lead1 = cf.epc_variance_leading(1.0)
    ok = all(v == 0.0 for v in at0) and lead1 == 0.0
    return CheckResult(7, "EPC degeneracies", ok, f"coefficients at u=0 {at0}, leading variance at u=1 {lead1}", {"at0": at0, "lead1": lead1})


def check_jet_identity(n_points: int = 100, seed: int = 99) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = {}
    for ell in (10, 50):
        field = sample_field(ell, seed, 0)
        z = rng.uniform(-1.0, 1.0, n_points)
        phi = rng.uniform(0.0, 2.0 * math.pi, n_points)
        err = 0.0
        for theta, p in zip(np.arccos(z), phi):
            jet = eval_jet(field, SpherePoint(float(theta), float(p)))
            err = max(err, abs(np.trace(jet.hess) + field.lam * jet.value) / field.lam)
        worst[ell] = err
    return CheckResult(8, "trace(hess) + lambda f", max(worst.values()) <= 1e-6, f"max |.|/lambda {max(worst.values()):.2e} (tol 1e-6)", {"worst": worst})


CLOSED_FORM_CHECKS = (
    check_nu_c,
    check_total_variance_coefficient,
    check_six_term_assembly,
    check_c3,
    check_cholesky,
    check_kernel_moments,
    check_epc_zero,
    check_jet_identity,
)


# oracle suite -------------------------------------------------------------


def check_conditional_density(n: int = 1_000_000) -> CheckResult:
    zs = {}
    for r in (0, 2, 4):
        for t in (0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0):
            est, se = go.conditional_density_mc(r, t, n, seed=1)
            zs[f"p{r}({t:+g})"] = (est - cf.density_p(r, t)) / se
    worst = max(abs(v) for v in zs.values())
    return CheckResult(9, "conditional densities", worst <= SIGMA_BAND, f"worst |z| {worst:.2f} over {len(zs)} points", {"z": zs})


ORACLE_INTERVALS = (Interval.real(), Interval(-1.0, 1.0), Interval(0.5, 2.0))


def check_projection_coefficients(n: int = 1_000_000) -> CheckResult:
    zs = {}
    for interval in ORACLE_INTERVALS:
        closed = cf.coefficient_closed_forms(interval)
        for which in ("k2", "k5", "h25"):
            est, se = go.projection_coefficient_mc(which, interval, n, seed=2)
            zs[f"{which}{interval}"] = (est - closed[which]) / se
    worst = max(abs(v) for v in zs.values())
    return CheckResult(10, "count coefficients", worst <= SIGMA_BAND, f"worst |z| {worst:.2f} over {len(zs)} cases", {"z": zs})


def check_parity(n: int = 1_000_000) -> CheckResult:
    out = go.parity_zero_check(n=n, seed=3)
    ok = out["worst"] <= SIGMA_BAND and abs(out["control_z"]) > 10.0
    return CheckResult(11, "parity zeros", ok, f"worst |z| {out['worst']:.2f}, control z {out['control_z']:.1f}", out)


def check_epc_coefficients(n: int = 1_000_000) -> CheckResult:
    zs, rederived = {}, {}
    for u in (0.0, 1.0, -1.0):
        h25, k2, k5 = cf.epc_coefficients(u)
        for which, closed in (("h25", h25), ("k2", k2), ("k5", k5)):
            est, se = go.epc_coefficient_mc(which, u, n, seed=4)
            zs[f"{which}({u:+g})"] = (est - closed) / se
            if which == "k5":
                rederived[f"k5({u:+g})"] = (est - cf.epc_k5_rederived(u)) / se
    worst = max(abs(v) for v in zs.values())
    bad = [k for k, v in zs.items() if abs(v) > SIGMA_BAND]
    detail = f"worst |z| {worst:.1f}" + (f", outside band: {', '.join(bad)}" if bad else "")
    detail += f"; k5 with 1/(72 pi): worst |z| {max(abs(v) for v in rederived.values()):.2f}"
    return CheckResult(12, "EPC coefficients", worst <= SIGMA_BAND, detail, {"z": zs, "z_k5_rederived": rederived})


ORACLE_CHECKS = (check_conditional_density, check_projection_coefficients, check_parity, check_epc_coefficients)


# simulation suite ---------------------------------------------------------


def sweep_config(n_samples: int = 200, workers: int = 1) -> ExperimentConfig:
    return ExperimentConfig(
        ells=SWEEP_ELLS,
        n_samples=n_samples,
        intervals=(INTERVAL, Interval(-math.inf, 0.0), Interval(0.0, math.inf)),
        levels=(-10.0, 1.0, 10.0),
        seed=SWEEP_SEED,
        workers=workers,
    )


def chi_config(n_samples: int = 300, workers: int = 1) -> ExperimentConfig:
    return ExperimentConfig(
        ells=(CHI_ELL,), n_samples=n_samples, intervals=(INTERVAL,), levels=(-10.0, 1.0, 10.0), seed=CHI_SEED, workers=workers
    )


@dataclass
class SimulationData:
    sweep: list
    chi: list
    sweep_config: ExperimentConfig
    chi_config: ExperimentConfig


def simulation_data(cache_dir=None, n_sweep: int = 200, n_chi: int = 300, workers: int = 1, progress=None) -> SimulationData:
    """Records for the simulation suite, read from ``cache_dir`` when present."""
    from .serialize import cached_run

    configs = sweep_config(n_sweep, workers), chi_config(n_chi, workers)
    runs = [cached_run(c, cache_dir, progress) if cache_dir else run_experiment(c, progress=progress) for c in configs]
    return SimulationData(runs[0], runs[1], *configs)


def check_morse_and_flags(data: SimulationData) -> CheckResult:
    recs = data.sweep + data.chi
    good = accepted(recs)
    morse = sum(r.n_max + r.n_min - r.n_saddle == 2 for r in good)
    rate = flag_rate(recs)
    retried = sum(r.retries > 0 for r in recs)
    ok = morse == len(good) and rate <= MAX_FLAG_RATE
    return CheckResult(
        13, "Morse identity and flag rate", ok, f"Morse {morse}/{len(good)}, flagged {rate:.2%} (max 1%), retried {retried}",
        {"morse_ok": morse, "accepted": len(good), "flag_rate": rate, "retried": retried},
    )


def _at(records, ell):
    return accepted(records, ell)


def check_mean_counts(data: SimulationData) -> CheckResult:
    ell = 40
    recs = _at(data.sweep, ell)
    m_tot, se_tot = mean(recs, "n_total")
    m_int, se_int = mean(recs, f"count:{INTERVAL}")
    target_int = cf.expected_count(ell, INTERVAL) / ell ** 2
    e_tot = abs(m_tot / ell ** 2 / cf.TOTAL_DENSITY - 1.0)
    e_int = abs(m_int / ell ** 2 / target_int - 1.0)
    ok = e_tot <= 0.02 and e_int <= 0.03
    detail = f"N/l^2 {m_tot / ell ** 2:.4f} vs {cf.TOTAL_DENSITY:.4f} ({e_tot:.2%}, tol 2%); N(I)/l^2 {m_int / ell ** 2:.4f} vs {target_int:.4f} ({e_int:.2%}, tol 3%)"
    return CheckResult(14, "mean counts at ell=40", ok, detail, {"rel_total": e_tot, "rel_interval": e_int})


def check_h2(data: SimulationData, n_coeff: int = 10_000, ell: int = 10, seed: int = 7) -> CheckResult:
    rel = max(abs(r.h2 - r.h2_coefficients) / max(abs(r.h2_coefficients), 1e-300) for r in data.sweep + data.chi)
    h2 = np.array([h2_from_coefficients(sample_field(ell, seed, i)) for i in range(n_coeff)])
    var = float(np.var(h2, ddof=1))
    target = cf.h2_variance(ell)
    err = abs(var / target - 1.0)
    ok = rel <= 1e-8 and err <= 0.05
    return CheckResult(15, "h2 identity and variance", ok, f"max rel identity gap {rel:.1e}; Var(h2) at ell=10 {var:.3f} vs {target:.3f} ({err:.2%}, tol 5%)", {"identity": rel, "var": var})


def check_interval_variance(data: SimulationData) -> CheckResult:
    ell = 80
    v, se = variance(_at(data.sweep, ell), f"count:{INTERVAL}")
    target = cf.nu_c(INTERVAL) ** 2
    ratio = v / ell ** 3 / target
    return CheckResult(16, "Var N(I)/l^3 at ell=80", abs(ratio - 1.0) <= 0.25, f"ratio to nu_c^2 {ratio:.3f} +- {se / ell ** 3 / target:.3f} (band 25%)", {"ratio": ratio})


def check_second_chaos_correlation(data: SimulationData) -> CheckResult:
    c, se = correlation(_at(data.sweep, 40), f"count:{INTERVAL}", f"s:{INTERVAL}")
    return CheckResult(17, "Corr(N(I), S(I)) at ell=40", c >= 0.85, f"{c:.4f} +- {se:.4f} (min 0.85)", {"corr": c, "se": se})


def check_trends(data: SimulationData) -> CheckResult:
    raw, part, cf_ = {}, {}, {}
    for ell in data.sweep_config.ells:
        recs = _at(data.sweep, ell)
        raw[ell] = correlation(recs, "n_total", f"count:{INTERVAL}")
        part[ell] = partial_correlation(recs, "n_total", f"count:{INTERVAL}", "h2")
        cf_[ell] = correlation(recs, "n_total", "f_total")
    ells = sorted(raw)
    dec = all(abs(raw[a][0]) > abs(raw[b][0]) for a, b in zip(ells, ells[1:]))
    inc = all(cf_[a][0] < cf_[b][0] for a, b in zip(ells, ells[1:]))
    gap = part[80][0] - raw[80][0]
    ok = dec and inc and gap >= 0.3
    detail = (
        "|Corr(N,N(I))| " + " > ".join(f"{abs(raw[e][0]):.3f}" for e in ells) + (" ok" if dec else " NOT decreasing")
        + f"; partial-raw gap at 80 {gap:.3f} (min 0.3); Corr(N,F) "
        + " < ".join(f"{cf_[e][0]:.3f}" for e in ells) + (" ok" if inc else " NOT increasing")
    )
    return CheckResult(18, "sweep trends", ok, detail, {"raw": raw, "partial": part, "corr_f": cf_, "gap80": gap})


def check_euler_characteristic(data: SimulationData) -> CheckResult:
    recs = accepted(data.sweep + data.chi)
    lo, hi = level_key(-10.0), level_key(10.0)
    n_lo = sum(r.chi[lo] == 2 for r in recs)
    n_hi = sum(r.chi[hi] == 0 for r in recs)
    v, se = variance(accepted(data.chi, CHI_ELL), f"chi:{level_key(1.0)}")
    got = v / CHI_ELL ** 3
    lead = cf.epc_variance_leading(1.0)
    var_ok = abs(got - lead) <= 0.25 * abs(lead)
    c, c_se = correlation(_at(data.sweep, 40), f"chi:{level_key(1.0)}", "h2")
    ok = n_lo == len(recs) and n_hi == len(recs) and var_ok and c >= 0.8
    detail = (
        f"chi(-10)=2 on {n_lo}/{len(recs)}, chi(10)=0 on {n_hi}/{len(recs)}; "
        f"Var chi(1)/l^3 at ell={CHI_ELL} {got:.4e} +- {se / CHI_ELL ** 3:.1e} vs leading {lead:.4e} (band 25%); "
        f"Corr(chi(1), h2) at 40 {c:.3f} (min 0.8)"
    )
    return CheckResult(19, "Euler characteristic", ok, detail, {"var_ratio": got, "lead": lead, "corr": c})


SIMULATION_CHECKS = (
    check_morse_and_flags,
    check_mean_counts,
    check_h2,
    check_interval_variance,
    check_second_chaos_correlation,
    check_trends,
    check_euler_characteristic,
)

SUITES = ("closed-forms", "oracle", "sweep")


def run_suite(suite: str, cache_dir: Path | None = None, workers: int = 1, report=None) -> list[CheckResult]:
    """Run one suite or ``"all"``; ``report`` is called with each result as it completes."""
    names = SUITES if suite == "all" else (suite,)
    if any(n not in SUITES for n in names):
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)} or all")
    results = []

    def emit(r):
        results.append(r)
        if report is not None:
            report(r)

    for name in names:
        if name == "closed-forms":
            for chk in CLOSED_FORM_CHECKS:
                emit(chk())
        elif name == "oracle":
            for chk in ORACLE_CHECKS:
                emit(chk())
        else:
            data = simulation_data(cache_dir, workers=workers)
            for chk in SIMULATION_CHECKS:
                emit(chk(data))
    return results
