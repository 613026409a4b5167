import os
from importlib import resources

import pytest
from hypothesis import settings

from mcsbp.mechfile import loads_mechanism

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def bundled():
    root = resources.files("mcsbp") / "data"
    return {p.name[:-5]: loads_mechanism(p.read_text())
            for p in sorted(root.iterdir(), key=lambda q: q.name) if p.name.endswith(".json")}


@pytest.fixture(scope="session")
def mechanisms():
    return bundled()


@pytest.fixture(scope="session")
def data_dir():
    return resources.files("mcsbp") / "data"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
