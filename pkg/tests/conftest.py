import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def record_criterion(number, name, passed, detail=""):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
