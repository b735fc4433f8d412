import pytest

from relayshed.instances import random_interdiction_fixture, triad
from relayshed.solvers import SolveOptions, get_backend


@pytest.fixture(scope="session")
def backend():
    return get_backend("highs")


@pytest.fixture(scope="session")
def triad_fixture():
    return triad()


@pytest.fixture(scope="session")
def fixture_pool():
    """Twenty seeded 4-8 bus instances shared by the enumeration suites."""
    pool = []
    for seed in range(20):
        n_buses = 4 + seed % 5
        pool.append(random_interdiction_fixture(seed=100 + seed, n_buses=n_buses))
    return pool


@pytest.fixture
def quick_opts():
    return SolveOptions(time_limit_s=120.0)
