import math

import numpy as np
import pytest

from sphcrit.intervals import Interval

INTERVAL = Interval(-math.inf, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20241014)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULT_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
