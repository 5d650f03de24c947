import numpy as np
import pytest

from qsilo.rng import stream


@pytest.fixture
def rng():
    return stream(12345, "selftest", 0)


def pytest_configure(config):
    np.seterr(all="raise", under="ignore")


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
