import numpy as np
import pytest

from awfisher import kernels
from awfisher.nulldist import build_null_table

ACCEPTANCE_LINES = []


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def table_k1():
    return build_null_table(1, 200_000, seed=11)


@pytest.fixture(scope="session")
def table_k2():
    return build_null_table(2, 200_000, seed=12)


@pytest.fixture(scope="session")
def table_k3():
    return build_null_table(3, 200_000, seed=13)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
