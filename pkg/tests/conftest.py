import numpy as np
import pytest

# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
