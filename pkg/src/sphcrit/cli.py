"""Command line interface: ``predict``, ``simulate``, ``verify``, ``coefficients`` and ``sweep``.

Exit codes are 0 on success, 1 when a check fails and 2 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import checks
from . import closed_forms as cf
from . import gaussian_oracle as go
from . import serialize as io_
from .experiments import (
    EstimationError,
    ExperimentConfig,
    convergence_sweep,
    flag_rate,
    MAX_FLAG_RATE,
    run_experiment,
    summarize,
)
from .intervals import IntervalSyntaxError, parse_interval
from .random_field import ConfigError

OUTPUT_ROOT_ENV = "SPHCRIT_OUTPUT_ROOT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
INTERVAL_HELP = 'interval: R, "(a,b)", "(-inf,b)" or "(a,inf)"; membership is lo <= t < hi'

log = logging.getLogger("sphcrit")


class UsageError(Exception):
    pass


def _interval(text):
    try:
        return parse_interval(text)
    except IntervalSyntaxError as exc:
        raise UsageError(f"{exc}. Example: --interval=\"(-inf,1)\"") from exc


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "sphcrit-runs"))


def _load(path) -> ExperimentConfig:
    return ExperimentConfig() if path is None else io_.load_config(path)


def _progress(every):
    def report(k, n, rec):
        if k % every == 0 or k == n:
            log.info("%d/%d samples (ell=%d, %.2fs)", k, n, rec.ell, rec.elapsed)

    return report


def _print_table(rows, columns):
    text = [[c for c in columns]] + [[_cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in text) for i in range(len(columns))]
    for row in text:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def _cell(v):
    if isinstance(v, float):
        return f"{v:.7g}" if math.isfinite(v) else "nan"
    return str(v)


# commands -----------------------------------------------------------------


def cmd_predict(args) -> int:
    interval = _interval(args.interval)
    if args.ell < 2:
        raise UsageError("--ell must be >= 2")
    pred = cf.variance_prediction(args.ell, interval)
    out = {
        "ell": args.ell,
        "interval": interval.to_text(),
        "nu_c": cf.nu_c(interval),
        "I_0": cf.integral_I(0, interval),
        "I_2": cf.integral_I(2, interval),
        "I_4": cf.integral_I(4, interval),
        "expected_count": cf.expected_count(args.ell, interval),
        "coeff_l3": pred.coeff_l3,
        "coeff_l2logl": pred.coeff_l2logl,
        "variance": pred.value(),
    }
    if args.format in ("json", "both"):
        print(json.dumps(out, indent=2))
    if args.format in ("text", "both"):
        width = max(map(len, out))
        for k, v in out.items():
            print(f"{k.ljust(width)}  {_cell(v)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args.config)
    if args.workers is not None:
        config = ExperimentConfig(**{**config.__dict__, "workers": args.workers})
    out = Path(args.out) if args.out else output_root() / f"run-{io_.config_digest(config)}"
    io_.ensure_writable(out)
    started = io_.utc_now()
    records = run_experiment(config, progress=_progress(max(1, config.n_samples // 10)))
    finished = io_.utc_now()
    io_.write_records(out / io_.RECORDS_FILE, records)
    io_.write_json(out / io_.MANIFEST_FILE, io_.build_manifest(config, started, finished, records))
    summaries = summarize(records, config)
    sweep = None
    if len(config.ells) >= 2:
        try:
            sweep = convergence_sweep(config, records)
        except EstimationError as exc:
            log.warning("convergence table skipped: %s", exc)
    io_.write_summary(out, summaries, sweep)
    rate = flag_rate(records)
    print(f"wrote {len(records)} records to {out} (flagged {rate:.2%})")
    return EXIT_OK if rate <= MAX_FLAG_RATE else EXIT_FAIL


def cmd_sweep(args) -> int:
    config = checks.sweep_config() if args.config is None else _load(args.config)
    if args.workers is not None:
        config = ExperimentConfig(**{**config.__dict__, "workers": args.workers})
    if len(config.ells) < 2:
        raise UsageError("sweep needs at least two degrees in 'ells'")
    out = Path(args.out) if args.out else output_root() / f"sweep-{io_.config_digest(config)}"
    io_.ensure_writable(out)
    records = io_.cached_run(config, out, _progress(max(1, config.n_samples // 10)))
    rows = convergence_sweep(config, records)
    io_.write_json(out / "sweep.json", rows)
    (out / "sweep.csv").write_text(io_.sweep_csv(rows), encoding="utf-8", newline="\n")
    _print_table(rows, ["ell", "n_records", "corr_total_interval", "partial_h2_total_interval", "var_total_over_l2logl", "var_interval_over_l3", "corr_total_f"])
    return EXIT_OK


def cmd_verify(args) -> int:
    cache = Path(args.cache) if args.cache else output_root() / "cache"
    results = checks.run_suite(args.suite, cache_dir=cache, workers=args.workers, report=lambda r: print(r.line(), flush=True))
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")
    if args.json:
        io_.write_json(args.json, [r.to_json() for r in results])
    return EXIT_OK if n_ok == len(results) else EXIT_FAIL


def cmd_coefficients(args) -> int:
    rows = []
    if args.epc:
        if args.u is None:
            raise UsageError("--epc needs --u")
        closed = dict(zip(("h25", "k2", "k5"), cf.epc_coefficients(args.u)))
        for which in ("h25", "k2", "k5"):
            est, se = go.epc_coefficient_mc(which, args.u, args.n, seed=args.seed)
            rows.append(_coef_row(which, closed[which], est, se))
        est, se = go.epc_coefficient_mc("k5", args.u, args.n, seed=args.seed)
        rows.append(_coef_row("k5_rederived", cf.epc_k5_rederived(args.u), est, se))
        label = f"u={args.u!r}"
    else:
        if args.interval is None:
            raise UsageError("give --interval or --epc --u")
        interval = _interval(args.interval)
        closed = cf.coefficient_closed_forms(interval)
        for which in ("k2", "k5", "h25"):
            est, se = go.projection_coefficient_mc(which, interval, args.n, seed=args.seed)
            rows.append(_coef_row(which, closed[which], est, se))
        label = f"I={interval}"
    if args.json:
        print(json.dumps({"target": label, "rows": rows}, indent=2))
    else:
        print(label)
        _print_table(rows, ["coefficient", "closed", "mc", "stderr", "z"])
    return EXIT_OK


def _coef_row(name, closed, est, se):
    return {"coefficient": name, "closed": closed, "mc": est, "stderr": se, "z": (est - closed) / se if se > 0 else 0.0}


# parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sphcrit", description="Critical points of random spherical harmonics.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("predict", help="closed-form mean and variance predictions")
    s.add_argument("--ell", type=int, default=40)
    s.add_argument("--interval", default="R", help=INTERVAL_HELP)
    s.add_argument("--format", choices=("json", "text", "both"), default="json")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment into a results directory")
    s.add_argument("config", nargs="?", help="flat key = value config file (defaults if omitted)")
    s.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/run-<hash>)")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="convergence table over degrees")
    s.add_argument("config", nargs="?")
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="run an acceptance suite")
    s.add_argument("--suite", choices=(*checks.SUITES, "all"), default="closed-forms")
    s.add_argument("--json", help="write check results to this file")
    s.add_argument("--cache", help="directory for cached simulation records")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("coefficients", help="closed-form vs Monte Carlo projection coefficients")
    s.add_argument("--interval", help=INTERVAL_HELP)
    s.add_argument("--epc", action="store_true", help="Euler characteristic coefficients at level --u")
    s.add_argument("--u", type=float)
    s.add_argument("--n", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_coefficients)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError, IntervalSyntaxError) as exc:
        print(f"sphcrit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
