import sys

import pytest

from siga.counters import COUNTERS
from siga.tensor import tape


@pytest.fixture(autouse=True)
def clean_state():
    """Every test starts with an empty tape and zeroed counters."""
    COUNTERS.reset()
    tape().clear()
    yield
    tape().clear()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one verdict line per acceptance criterion, pass or fail."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(
            f"[criterion {num}] {'PASS' if ok else 'FAIL'} - {detail}")
