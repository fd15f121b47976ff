import numpy as np
import pytest

from qspatch.measures import Constant, MeasureFamily, Member, RegimeSwitching, make_grid


@pytest.fixture
def grid():
    return make_grid(1.0, 256)


@pytest.fixture
def overlap_family():
    """Constant(4) sits inside the support of the (1, 4) regime chain."""
    return MeasureFamily((Member("c4", Constant(4.0)), Member("regime", RegimeSwitching((1.0, 4.0), 0.1))))


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance verdict line."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
