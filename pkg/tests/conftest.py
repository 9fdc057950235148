import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from delayed_choice.config import load_scenario  # noqa: E402
from delayed_choice.orbit import generate_pass  # noqa: E402
from delayed_choice.pipeline import run_closure  # noqa: E402


@pytest.fixture(scope="session")
def starlette():
    return load_scenario("starlette")


@pytest.fixture(scope="session")
def beacon():
    return load_scenario("beacon-c")


@pytest.fixture(scope="session")
def starlette_track(starlette):
    return generate_pass(starlette.profile, starlette.constants)


@pytest.fixture(scope="session")
def beacon_track(beacon):
    return generate_pass(beacon.profile, beacon.constants)


@pytest.fixture(scope="session")
def starlette_closure(starlette):
    return run_closure(starlette)


@pytest.fixture(scope="session")
def beacon_closure(beacon):
    return run_closure(beacon)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
