import math
import random

import pytest

_ACCEPTANCE_LINES: list[str] = []


def sigma_band(estimate: float, expected: float, n: int, stderr: float | None = None, sigmas: float = 4.0) -> bool:
    """True when ``estimate`` is within ``sigmas`` binomial standard errors of ``expected``."""
    if stderr is None or stderr == 0:
        stderr = math.sqrt(max(expected * (1 - expected), 1.0 / n) / n)
    return abs(estimate - expected) <= sigmas * stderr


@pytest.fixture
def rng():
    return random.Random(20240611)


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
