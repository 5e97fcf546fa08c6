import numpy as np
import pytest

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def orthonormal_design(n, p, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, p)))
    return np.sqrt(n) * q
