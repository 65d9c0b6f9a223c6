import sys, pathlib
sys.path.insert(0, str(pathlib.Path(__file__).parent))

import numpy as np
import pytest

from neardgd.objectives import build_logistic, generate_quadratic, quadratic_optimum
from neardgd.topology import build_topology, metropolis_weights


@pytest.fixture(scope="session")
def ring():
    return metropolis_weights(build_topology("cyclic_k", 10, 4))


@pytest.fixture(scope="session")
def path3():
    return metropolis_weights(build_topology("path", 3))


@pytest.fixture(scope="session")
def complete3():
    return metropolis_weights(build_topology("complete", 3))


@pytest.fixture(scope="session")
def quad_1e2():
    prob = generate_quadratic(10, 10, 1e2, 7)
    return prob, quadratic_optimum(prob)


@pytest.fixture(scope="session")
def quad_1e4():
    prob = generate_quadratic(10, 10, 1e4, 7)
    return prob, quadratic_optimum(prob)


@pytest.fixture(scope="session")
def small_logistic():
    rng = np.random.default_rng(3)
    shards = []
    for _ in range(3):
        A = rng.standard_normal((7, 4))
        b = np.where(rng.standard_normal(7) > 0, 1.0, -1.0)
        shards.append((A, b))
    return build_logistic(shards)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
