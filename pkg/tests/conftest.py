import sys
from importlib import resources

import pytest

from ecomp.fitting import FrequencyTable


@pytest.fixture(scope="session")
def corbet() -> FrequencyTable:
    text = resources.files("ecomp").joinpath("data", "corbet.csv").read_text()
    return FrequencyTable.parse_csv(text)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
