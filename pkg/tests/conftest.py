import numpy as np
import pytest

from uee_hetnet.netmodel import ExperimentConfig, generate_scenario

# acceptance outcomes, filled by test_acceptance.py and printed at the end
CRITERIA = {}


def record(key, passed, detail):
    CRITERIA[key] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def default_scenario(default_config):
    return generate_scenario(default_config, 7)
