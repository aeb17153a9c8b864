import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

_ACCEPTANCE = []


class _Criterion:
    """Collects the verdict of one acceptance criterion."""

    def __init__(self):
        self.start = time.perf_counter()

    def record(self, number, title, ok, detail=""):
        elapsed = time.perf_counter() - self.start
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({elapsed:.1f} s) {detail}".rstrip()
        _ACCEPTANCE.append((number, line))
        print(line)
        return elapsed


@pytest.fixture
def criterion():
    return _Criterion()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
