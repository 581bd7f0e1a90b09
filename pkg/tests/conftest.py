import numpy as np
import pytest

from kzxx.model import Lattice, ModelParams


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lat23():
    return Lattice(2, 3)


def chain_to_sites(vec, snake):
    """Reorder a chain-ordered dense vector into lattice site order."""
    n = snake.lattice.n_sites
    perm = [snake.chain_of_site(j) for j in range(n)]
    return np.transpose(vec.reshape([2] * n), perm).reshape(-1)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
