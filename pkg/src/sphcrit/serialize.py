"""Config text format, record streams, manifests and summary tables."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .critical_census import DEGENERACY, MAX_NEWTON_ITER
from .experiments import ExperimentConfig, EstimatorSummary, SampleRecord, run_experiment
from .intervals import IntervalSyntaxError, parse_interval
from .random_field import ConfigError
from .special_functions import TRUNCATION

CSV_COLUMNS = ("ell", "observable_x", "observable_y", "corr", "corr_partial_h2", "stderr")
CSV_DIGITS = 12
RECORDS_FILE = "records.jsonl"
MANIFEST_FILE = "manifest.json"
SUMMARY_JSON = "summary.json"
SUMMARY_CSV = "summary.csv"


def _ints(text):
    return tuple(int(v) for v in _items(text, ","))


def _floats(text):
    return tuple(float(v) for v in _items(text, ","))


def _intervals(text):
    return tuple(parse_interval(v) for v in _items(text, ";"))


def _items(text, sep):
    return [v.strip() for v in text.split(sep) if v.strip()]


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("none", "") else conv(text)

    return parse


#: key -> (parser, emitter)
SCHEMA = {
    "ells": (_ints, lambda v: ", ".join(str(e) for e in v)),
    "n_samples": (int, str),
    "intervals": (_intervals, lambda v: "; ".join(i.to_text() for i in v)),
    "levels": (_floats, lambda v: ", ".join(repr(u) for u in v)),
    "seed": (int, str),
    "grid_oversample": (float, repr),
    "newton_tol": (float, repr),
    "dedup_radius": (_optional(float), lambda v: "none" if v is None else repr(v)),
    "quad_res": (_optional(int), lambda v: "none" if v is None else str(v)),
    "workers": (int, str),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Lists are comma separated, except intervals, which are separated by
    ``;`` because interval text contains commas. Unknown or repeated keys
    and unparsable values raise :class:`ConfigError`.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; known keys: {', '.join(SCHEMA)}")
        if key in values:
            raise ConfigError(f"line {lineno}: repeated key {key!r}")
        try:
            values[key] = SCHEMA[key][0](value)
        except (ValueError, IntervalSyntaxError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return ExperimentConfig(**values)


def emit_config(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {emit(getattr(config, k))}\n" for k, (_, emit) in SCHEMA.items())


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def config_to_json(config: ExperimentConfig) -> dict:
    return {k: emit(getattr(config, k)) for k, (_, emit) in SCHEMA.items()}


_RECORD_FIELDS = [f.name for f in dataclasses.fields(SampleRecord) if f.compare]


def record_to_json(rec: SampleRecord) -> str:
    """One JSON line; timing is omitted so reruns are byte-identical."""
    return json.dumps({k: getattr(rec, k) for k in _RECORD_FIELDS}, allow_nan=False, separators=(",", ":"))


def record_from_json(line: str) -> SampleRecord:
    data = json.loads(line)
    unknown = set(data) - set(_RECORD_FIELDS)
    if unknown:
        raise ValueError(f"unknown record fields {sorted(unknown)}")
    return SampleRecord(**data)


def write_records(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_records(path) -> list[SampleRecord]:
    with open(path, encoding="utf-8") as fh:
        return [record_from_json(line) for line in fh if line.strip()]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_manifest(config: ExperimentConfig, started: str, finished: str, records=()) -> dict:
    """Everything needed to regenerate the records, plus provenance of the environment."""
    records = list(records)
    return {
        "artifact_version": __version__,
        "config": config_to_json(config),
        "config_text": emit_config(config),
        "seed": config.seed,
        "started": started,
        "finished": finished,
        "parameters": {
            "random_field": {"rng": "Philox(SeedSequence([seed, ell, index]))", "basis": "real, no Condon-Shortley phase"},
            "critical_census": {
                "grid_oversample": config.grid_oversample,
                "newton_tol": config.newton_tol,
                "dedup_radius": config.dedup_radius,
                "degeneracy": DEGENERACY,
                "max_newton_iter": MAX_NEWTON_ITER,
                "retry_oversample_factor": 2,
            },
            "chaos_projections": {"quad_res": config.quad_res, "default_latitudes": "4*ell"},
            "special_functions": {"truncation": TRUNCATION},
        },
        "n_records": len(records),
        "n_flagged": sum(r.flagged for r in records),
        "environment": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
    }


def write_json(path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "nan"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{CSV_DIGITS}g}"
    return str(v)


def summary_csv(summaries: list[EstimatorSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in summaries:
        for row in s.rows():
            w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_summary(directory, summaries, sweep=None) -> None:
    directory = Path(directory)
    write_json(directory / SUMMARY_JSON, {"summaries": [s.to_json() for s in summaries], "sweep": sweep or []})
    (directory / SUMMARY_CSV).write_text(summary_csv(summaries), encoding="utf-8", newline="\n")


def sweep_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0])
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in keys])
    return buf.getvalue()


def ensure_writable(directory) -> Path:
    """Create ``directory`` and confirm it is writable, before any compute."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        probe = directory / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {directory} is not writable: {exc}") from exc
    if not os.access(directory, os.W_OK):
        raise ConfigError(f"output directory {directory} is not writable")
    return directory


def config_digest(config: ExperimentConfig) -> str:
    """Hash of everything that determines the records (the worker count does not)."""
    text = emit_config(dataclasses.replace(config, workers=1)) + f"version = {__version__}\n"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cached_run(config: ExperimentConfig, cache_dir, progress=None) -> list[SampleRecord]:
    """Run ``config`` once and reuse its ``records.jsonl`` from ``cache_dir`` afterwards."""
    path = Path(cache_dir) / f"records-{config_digest(config)}.jsonl"
    if path.exists():
        return read_records(path)
    records = run_experiment(config, progress=progress)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    write_records(tmp, records)
    tmp.replace(path)
    return records
