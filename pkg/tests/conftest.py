"""Shared fixtures and the --runslow switch for the dqpe test suite."""

import numpy as np
import pytest

from dqpe.chem.geometry import h2, h3_plus_ground_start
from dqpe.chem.system import MolecularSystem
from dqpe.core.spectral import FunctionalHamiltonian


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run optimization and noise studies"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running study; needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def _pauli():
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    Z = np.diag([1.0, -1.0])
    return X, Z


@pytest.fixture
def qubit_hamiltonian():
    """H(x) = x0 Z + x1 X on one qubit, with analytic derivatives."""
    X, Z = _pauli()

    def evaluate(x):
        return x[0] * Z + x[1] * X

    def derivative(x, j):
        return Z if j == 0 else X

    return FunctionalHamiltonian(evaluate, 2, derivative=derivative)


@pytest.fixture
def two_qubit_hamiltonian():
    """Nondegenerate two-qubit H(x) with a smooth quadratic offset."""
    X, Z = _pauli()
    I = np.eye(2)
    ZI, IZ, XX = np.kron(Z, I), np.kron(I, Z), np.kron(X, X)

    def evaluate(x):
        return 0.5 * ZI + (0.3 + 0.2 * x[0]) * IZ + (0.25 + 0.1 * x[1]) * XX

    def derivative(x, j):
        return 0.2 * IZ if j == 0 else 0.1 * XX

    return FunctionalHamiltonian(
        evaluate,
        2,
        derivative=derivative,
        offset=lambda x: float(x @ x),
        offset_gradient=lambda x: 2.0 * np.asarray(x),
    )


@pytest.fixture(scope="session")
def h2_system():
    return MolecularSystem(h2())


@pytest.fixture(scope="session")
def h3_system():
    return MolecularSystem(h3_plus_ground_start())
