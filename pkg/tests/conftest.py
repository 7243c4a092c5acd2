import pytest

from holderlab import ProbVector, affine_system

acceptance_lines = []


@pytest.fixture
def report_line():
    """Collect one verdict line per acceptance check for the final summary."""
    def _add(line):
        print(line)
        acceptance_lines.append(line)
    return _add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def dyadic():
    """Two full branches of slope 2 on (0, 1)."""
    return affine_system((2.0, 2.0), (0.0, -1.0), (0.0, 1.0))


@pytest.fixture
def cantor():
    """Separating middle-third system: 3x and 3x - 2 on (0, 1)."""
    return affine_system((3.0, 3.0), (0.0, -2.0), (0.0, 1.0))


@pytest.fixture
def quarter():
    return ProbVector.of(0.25)


@pytest.fixture
def half():
    return ProbVector.of(0.5)
