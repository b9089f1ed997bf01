import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def revenue_preset():
    from wassos.apps import get_preset
    return get_preset("paper-revenue")


@pytest.fixture(scope="session")
def portfolio_preset():
    from wassos.apps import get_preset
    return get_preset("paper-portfolio")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
