"""Acceptance criteria 1-19, each at its stated tolerance.

Simulation records are cached under ``.sim-cache`` (override with
``SPHCRIT_SIM_CACHE``); a cold cache costs about half an hour.
"""

import os
from pathlib import Path

import pytest

from sphcrit import checks

CACHE = Path(os.environ.get("SPHCRIT_SIM_CACHE", Path(__file__).resolve().parents[1] / ".sim-cache"))
RESULT_LINES: list[str] = []


def _report(result):
    line = result.line()
    RESULT_LINES.append(line)
    print(line)
    assert result.passed, line


@pytest.fixture(scope="module")
def sim():
    return checks.simulation_data(CACHE)


@pytest.mark.parametrize("check", checks.CLOSED_FORM_CHECKS, ids=lambda c: c.__name__)
def test_closed_form(check):
    _report(check())


@pytest.mark.slow
@pytest.mark.parametrize("check", checks.ORACLE_CHECKS, ids=lambda c: c.__name__)
def test_oracle(check):
    _report(check())


@pytest.mark.slow
@pytest.mark.parametrize("check", checks.SIMULATION_CHECKS, ids=lambda c: c.__name__)
def test_simulation(check, sim):
    _report(check(sim))
