import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from drio.protocols import protocol_control, protocol_train

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def drio3():
    return protocol_control("drio3", rabi_amplitude=1.0)


@pytest.fixture(scope="session")
def drio3_train():
    return protocol_train("drio3", rabi_amplitude=1.0)


@pytest.fixture(scope="session")
def drio5_train():
    return protocol_train("drio5", rabi_amplitude=1.0)


@pytest.fixture(scope="session")
def pi_train():
    return protocol_train("pi", rabi_amplitude=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
