import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_ACCEPTANCE = []


@pytest.fixture
def record_acceptance():
    """Record ``(criterion, passed, detail)``; printed in the terminal summary."""

    def rec(criterion, passed, detail):
        line = f"{criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return rec


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
