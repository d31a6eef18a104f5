import warnings

import pytest

from alefsi.core_domain import DomainConfig, build_grid

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_config():
    return DomainConfig(L=1.0, h=2.0, h_s=1.0, lam=4.0, g=0.0, M=2, Ns=4, Nf=4, dt=0.01)


@pytest.fixture(scope="session")
def small_grid(small_config):
    return build_grid(small_config)


@pytest.fixture(scope="session")
def gravity_config():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return DomainConfig(L=1.0, h=2.0, h_s=1.0, lam=10.0, g=1.0, M=2, Ns=4, Nf=4, dt=0.01)
