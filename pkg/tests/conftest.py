import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session", autouse=True)
def _isolated_cache(tmp_path_factory):
    # critical-value tables are simulated once per session into a private cache
    old = os.environ.get("BUBBLEKIT_CACHE")
    os.environ["BUBBLEKIT_CACHE"] = str(tmp_path_factory.mktemp("cv-cache"))
    yield
    if old is None:
        os.environ.pop("BUBBLEKIT_CACHE", None)
    else:
        os.environ["BUBBLEKIT_CACHE"] = old


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def panel_path():
    return str(FIXTURES / "panel.csv")


@pytest.fixture(scope="session")
def regimes_path():
    return str(FIXTURES / "regimes.csv")


# acceptance criteria append "PASS|FAIL criterion N: detail" lines here
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
