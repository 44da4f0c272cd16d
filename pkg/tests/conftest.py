import ipaddress

import pytest

# Filled by the release-criterion decorator in test_acceptance.py; printed
# in the terminal summary so the pass/fail lines survive output capture.
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("release criteria")
    for status, name in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{status}] {name}")


class FakeClock:
    """Manually advanced clock so quota/cooldown/anomaly tests run instantly."""

    def __init__(self, start: float = 1_000_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def subnet():
    return ipaddress.IPv4Network("192.168.43.0/24")
