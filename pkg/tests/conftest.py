import math
import sys
from pathlib import Path

import numpy as np
import pytest

from fairnav.world import WorldConfig, WorldState

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
STUBS = Path(__file__).resolve().parent / "stubs"


@pytest.fixture
def cfg():
    return WorldConfig()


@pytest.fixture
def stub_cmd():
    def build(name, *args):
        return [sys.executable, str(STUBS / name), *map(str, args)]

    return build


def euclid(p, q):
    """Scalar Euclidean distance; x*x rather than x**2, which goes through pow()."""
    dx, dy = float(p[0]) - float(q[0]), float(p[1]) - float(q[1])
    return math.sqrt(dx * dx + dy * dy)


def state_from(agents, goals, **kw):
    return WorldState.from_positions(np.array(agents, float), np.array(goals, float), **kw)


# filled by tests/test_acceptance.py, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
