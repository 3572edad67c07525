import numpy as np
import pytest

from moebius_rigidity import experiment_cli as E
from moebius_rigidity import perturbed_manifold as P

X0 = (0.1, 0.05)

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def pure_space():
    return P.PerturbedSpace(P.MetricField("pure", X0, 1.0, 0.0))


@pytest.fixture(scope="session")
def twist_config():
    return E.ScenarioConfig(scenario="pullback_twist")


@pytest.fixture(scope="session")
def twist_pair(twist_config):
    return E.build_pair(twist_config)


@pytest.fixture(scope="session")
def trivial_pair():
    return E.build_pair(E.ScenarioConfig(scenario="trivial"))


@pytest.fixture(scope="session")
def bump_pair():
    return E.build_pair(E.ScenarioConfig(scenario="conformal_bump"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
