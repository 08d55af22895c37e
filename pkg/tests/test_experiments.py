import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphcrit.experiments import (
    EstimationError,
    ExperimentConfig,
    batch_stderr,
    convergence_sweep,
    correlation,
    flag_rate,
    level_key,
    mean,
    observable,
    observable_names,
    partial_correlation,
    run_experiment,
    run_sample,
    summarize,
    variance,
)
from sphcrit.intervals import Interval
from sphcrit.random_field import ConfigError

LOW, HIGH = Interval(-math.inf, 0.0), Interval(0.0, math.inf)


@pytest.fixture(scope="module")
def small():
    config = ExperimentConfig(ells=(6, 9), n_samples=40, intervals=(LOW, HIGH), levels=(-10.0, 0.0, 10.0), seed=3)
    return config, run_experiment(config)


def test_records_ordered_and_unflagged(small):
    config, records = small
    assert [(r.ell, r.index) for r in records] == [(e, i) for e in config.ells for i in range(40)]
    assert flag_rate(records) == 0.0


def test_counts_partition_and_morse(small):
    _, records = small
    for r in records:
        assert r.counts[LOW.to_text()] + r.counts[HIGH.to_text()] == r.n_total
        assert r.n_max - r.n_saddle + r.n_min == 2
        assert r.chi[level_key(-10.0)] == 2 and r.chi[level_key(10.0)] == 0
        assert r.h2 == pytest.approx(r.h2_coefficients, rel=1e-8, abs=1e-10)


def test_deterministic():
    config = ExperimentConfig(ells=(7,), n_samples=4, seed=11)
    assert [run_sample(config, 7, i) for i in range(4)] == run_experiment(config)
    assert run_experiment(config) == run_experiment(ExperimentConfig(ells=(7,), n_samples=4, seed=11, workers=2))
    assert run_sample(config, 7, 0) != run_sample(ExperimentConfig(ells=(7,), n_samples=4, seed=12), 7, 0)


def test_value_lookup(small):
    _, records = small
    r = records[0]
    assert r.value("n_total") == r.n_total
    assert r.value(f"count:{LOW.to_text()}") == r.counts["(-inf,0.0)"]
    for bad in ("counts", "count:nope", "zz:1", "error"):
        with pytest.raises(KeyError):
            r.value(bad)


def test_summary_shapes(small):
    config, records = small
    summ = summarize(records, config)
    k = len(observable_names(config))
    assert [s.ell for s in summ] == [6, 9]
    for s in summ:
        assert s.corr.shape == (k, k)
        assert np.allclose(np.diag(s.corr)[np.isfinite(np.diag(s.corr))], 1.0)
        assert len(list(s.rows())) == k * (k - 1) // 2
        # chi at extreme levels is constant on the sample
        i = s.names.index(f"chi:{level_key(10.0)}")
        assert np.isnan(s.corr[i, 0])


def test_sweep_rows(small):
    config, records = small
    rows = convergence_sweep(config, records)
    assert [r["ell"] for r in rows] == [6, 9]
    assert all(-1 <= r["corr_total_interval"] <= 1 for r in rows)
    with pytest.raises(ConfigError):
        convergence_sweep(ExperimentConfig(ells=(6,), n_samples=2), [])


def test_config_validation():
    for kw in ({"ells": ()}, {"ells": (1,)}, {"n_samples": 1}, {"intervals": ()}, {"grid_oversample": 3}, {"newton_tol": 0}, {"workers": 0}):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)
    with pytest.raises(ConfigError):
        run_sample(ExperimentConfig(n_samples=3), 20, 3)


def test_synthetic_null(rng):
    x, y = rng.standard_normal((2, 2000))
    r, se = correlation(None, x, y)
    assert abs(r) < 4 * se
    assert se == pytest.approx(1 / math.sqrt(2000), rel=0.35)


def test_partial_removes_shared_control(rng):
    z, a, b = rng.standard_normal((3, 3000))
    x, y = z + 0.5 * a, 2 * z + 0.5 * b
    assert correlation(None, x, y)[0] > 0.8
    p, se = partial_correlation(None, x, y, z)
    assert abs(p) < 4 * se


@given(st.floats(-3, 3), st.floats(0.1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_partial_invariant_under_affine_control(shift, scale, seed):
    x, y, z = np.random.default_rng(seed).standard_normal((3, 60))
    z = z + 0.3 * x
    p1, _ = partial_correlation(None, x, y, z)
    p2, _ = partial_correlation(None, x, y, shift + scale * z)
    assert p1 == pytest.approx(p2, abs=1e-9)


def test_degenerate_estimators(rng):
    z = rng.standard_normal(50)
    with pytest.raises(EstimationError):
        partial_correlation(None, 3 * z + 1, rng.standard_normal(50), z)
    with pytest.raises(EstimationError):
        correlation(None, np.ones(50), z)
    with pytest.raises(EstimationError):
        partial_correlation(None, z, z, np.ones(50))
    with pytest.raises(EstimationError):
        mean(None, z[:10])


def test_jackknife_matches_analytic_mean_error(rng):
    x = rng.standard_normal(4000)
    se = batch_stderr(np.mean, (x,))
    assert se == pytest.approx(x.std(ddof=1) / math.sqrt(4000), rel=0.4)
    v, vse = variance(None, x)
    assert v == pytest.approx(1.0, abs=4 * vse)


def test_batch_count_floor():
    with pytest.raises(EstimationError):
        batch_stderr(np.mean, (np.arange(5.0),))
    assert batch_stderr(np.mean, (np.arange(30.0),)) > 0


def test_observable_column(small):
    _, records = small
    col = observable(records, "n_total")
    assert col.dtype == float and col.shape == (80,)


def test_interval_count_moves_against_h2():
    # larger sample variance spreads critical values past the endpoint
    config = ExperimentConfig(ells=(12,), n_samples=60, intervals=(Interval(-math.inf, 1.0),), levels=(0.0,), seed=5)
    records = run_experiment(config)
    r, se = correlation(records, "count:(-inf,1.0)", "s:(-inf,1.0)")
    assert r < -4 * se
