import os
import re

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lab", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "lab"))

_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report("AC3", ok, "detail")``."""

    def _report(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda s: int(re.match(r"AC(\d+)", s).group(1))  # noqa: E731
    for line in sorted(_LINES, key=key):
        terminalreporter.write_line(line)
