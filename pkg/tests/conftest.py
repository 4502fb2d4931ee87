import numpy as np
import pytest

from redos.channel import DftColumns, GroupProfile


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fig4_groups():
    g1 = GroupProfile.from_spec(DftColumns(4, 0, 3, (1.0, 0.7, 0.49)), 2)
    g2 = GroupProfile.from_spec(DftColumns(4, 2, 4, (1.0, 0.7)), 2)
    return [g1, g2]


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
