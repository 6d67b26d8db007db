import sys
import warnings

import numpy as np
import pytest

from mvj.process import ModelSpec, RDistribution, ThetaParams, simulate_mvj


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def m1_spec():
    return ModelSpec(1, 0, 15)


@pytest.fixture(scope="session")
def m1_theta():
    return ThetaParams(-0.2, (0.5,))


@pytest.fixture(scope="session")
def m1_path(m1_spec, m1_theta):
    return simulate_mvj(m1_theta, RDistribution.beta(1, 1), m1_spec, 500, seed=7)


@pytest.fixture(scope="session")
def m2_spec():
    return ModelSpec(1, 1, 15)


@pytest.fixture(scope="session")
def m2_path(m2_spec):
    theta = ThetaParams(-0.2, (0.4,), (0.4,))
    return simulate_mvj(theta, RDistribution.beta(1, 1), m2_spec, 500, seed=8)


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
