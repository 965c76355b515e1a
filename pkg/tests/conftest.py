import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rcisep.graph import WeightedGraph  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def triangle():
    """Depot 0 joined to customers 1-3 with x=1; triangle edges x=0.5; d=60, Q=100."""
    edges = {(0, 1): 1.0, (0, 2): 1.0, (0, 3): 1.0, (1, 2): 0.5, (1, 3): 0.5, (2, 3): 0.5}
    return WeightedGraph([0, 60, 60, 60], edges)


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
