import pytest

from crowdpath import Config, build_database
from crowdpath.synthetic import synthetic_scenes

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config():
    return Config()


@pytest.fixture(scope="session")
def scenes():
    return synthetic_scenes(duration=120.0)


@pytest.fixture(scope="session")
def database(scenes, config):
    return build_database(scenes, config)


@pytest.fixture(scope="session")
def report_line():
    """Record one acceptance result line; shown in the terminal summary and on stdout."""
    def emit(line):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return emit
