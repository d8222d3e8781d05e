import numpy as np
import pytest

from emaloc.emamodel import ArrayGeometry

ACCEPTANCE_LINES = []


def report(number, name, passed, detail=""):
    """Record one acceptance verdict; the terminal summary prints them all."""
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {name}"
    if detail:
        line += f"  [{detail}]"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def geom():
    return ArrayGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
