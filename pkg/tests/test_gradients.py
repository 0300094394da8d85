import numpy as np
import pytest
from numpy.testing import assert_allclose

from dqpe.core.gradients import (
    estimator_gradient,
    fd_gradient,
    fd_stencil,
    hamiltonian_derivative,
    hellmann_feynman_oracle,
    resolves_on_grid,
    richardson_check,
    spectral_derivative,
)
from dqpe.core.pipeline import PhasePipeline
from dqpe.core.qpe import ReadoutGrid
from dqpe.core.spectral import FunctionalHamiltonian, eigendecompose
from dqpe.errors import DegenerateSpectrumError, GradientError, InputError, NonSmoothHamiltonianError

X0 = np.array([0.1, 0.2])


def mostly_ground():
    psi = np.array([0.1, 0.2, 0.15, 1.0])
    return psi / np.linalg.norm(psi)


def central(f, x, j, h):
    e = np.zeros_like(x)
    e[j] = h
    return (f(x + e) - f(x - e)) / (2 * h)


def test_stencil_coefficients():
    first = fd_stencil(1, 0.1)
    assert_allclose(first.coefficients, [-5.0, 0.0, 5.0])
    assert_allclose(first.one_norm, 10.0)
    second = fd_stencil(2, 1.0)
    assert_allclose(second.coefficients, [1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])
    assert second.to_dict()["m"] == 2


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_stencil_exact_on_polynomials(m):
    stencil = fd_stencil(m, 0.1)
    p = 2 * m
    x = np.array([0.7])
    value = fd_gradient(lambda y: y[0] ** p, stencil, x, 0)
    assert_allclose(value, p * 0.7 ** (p - 1), rtol=1e-9)


def test_stencil_validation():
    for bad in (0, -1, 1.5, True):
        with pytest.raises(InputError):
            fd_stencil(bad, 0.1)
    with pytest.raises(InputError):
        fd_stencil(1, 0.0)
    with pytest.raises(InputError):
        fd_gradient(lambda y: 0.0, fd_stencil(1, 0.1), np.zeros(2), np.ones(3))


def test_directional_difference():
    v = np.array([0.6, 0.8])
    value = fd_gradient(lambda y: 3 * y[0] - y[1], fd_stencil(1, 1e-3), np.zeros(2), v)
    assert_allclose(value, 3 * 0.6 - 0.8, rtol=1e-10)


def test_fallback_derivative_matches_analytic(two_qubit_hamiltonian):
    plain = FunctionalHamiltonian(two_qubit_hamiltonian.evaluate, 2)
    for j in range(2):
        assert_allclose(hamiltonian_derivative(plain, X0, j), two_qubit_hamiltonian.derivative(X0, j), atol=1e-9)


def test_kink_is_refused():
    Z = np.diag([1.0, -1.0])
    kinked = FunctionalHamiltonian(lambda x: abs(x[0]) * Z, 1)
    with pytest.raises(NonSmoothHamiltonianError):
        hamiltonian_derivative(kinked, np.zeros(1), 0)


def test_degenerate_coupling_is_refused():
    def evaluate(x):
        H = np.diag([0.0, 0.0, 1.0])
        H[0, 1] = H[1, 0] = x[0]
        return H

    H = FunctionalHamiltonian(evaluate, 1)
    with pytest.raises(DegenerateSpectrumError):
        spectral_derivative(H, np.zeros(1), 0, np.array([1.0, 0.0, 0.0]))


def test_spectral_derivative_matches_finite_difference(two_qubit_hamiltonian):
    psi = mostly_ground()
    derivative = spectral_derivative(two_qubit_hamiltonian, X0, 1, psi)
    eig = eigendecompose(two_qubit_hamiltonian(X0))

    def energies(x):
        return eigendecompose(two_qubit_hamiltonian(x)).eigenvalues

    def weights(x):
        return np.abs(eigendecompose(two_qubit_hamiltonian(x)).coefficients(psi)) ** 2

    assert_allclose(derivative.energy_derivatives, central(energies, X0, 1, 1e-6), atol=1e-8)
    assert_allclose(derivative.weight_derivatives, central(weights, X0, 1, 1e-6), atol=1e-8)
    assert_allclose(derivative.weights.sum(), 1.0)
    assert derivative.eigenvalues.shape == eig.eigenvalues.shape


def test_oracle_matches_exact_eigenvalue_derivative(two_qubit_hamiltonian):
    def ground(x):
        return eigendecompose(two_qubit_hamiltonian(x)).eigenvalues[0] + x @ x

    oracle = hellmann_feynman_oracle(two_qubit_hamiltonian, X0, 0)
    fd = [central(ground, X0, j, 1e-6) for j in range(2)]
    assert_allclose(oracle, fd, atol=1e-8)


@pytest.mark.parametrize("estimator", ["gce", "cruz"])
def test_smooth_gradient_matches_pipeline_difference(two_qubit_hamiltonian, estimator):
    pipeline = PhasePipeline(two_qubit_hamiltonian, mostly_ground(), t=8, estimator=estimator)
    phase_map = pipeline.phase_map(X0)
    smooth = pipeline.gradient(X0, phase_map)
    fd = [central(lambda x: pipeline.energy(x, phase_map), X0, j, 1e-6) for j in range(2)]
    assert_allclose(smooth, fd, rtol=1e-5, atol=1e-8)


def test_majority_rule_has_no_smooth_gradient(two_qubit_hamiltonian):
    with pytest.raises(GradientError):
        estimator_gradient(two_qubit_hamiltonian, X0, mostly_ground(), ReadoutGrid(8), estimator="majority")


def test_molecular_oracle_matches_energy_difference(h2_system):
    x = h2_system.initial_x

    def ground(y):
        return eigendecompose(h2_system(y)).eigenvalues[0] + h2_system.offset(y)

    oracle = hellmann_feynman_oracle(h2_system, x, 0)
    assert_allclose(oracle[5], central(ground, x, 5, 1e-4), atol=1e-6)
    assert_allclose(oracle[2], -oracle[5], atol=1e-8)
    assert_allclose(oracle[[0, 1, 3, 4]], 0.0, atol=1e-6)


def test_molecular_smooth_gradient(h2_system):
    x = h2_system.initial_x
    pipeline = PhasePipeline(h2_system, h2_system.input_state(), t=8)
    phase_map = pipeline.phase_map(x)
    smooth = pipeline.gradient(x, phase_map)
    fd = fd_gradient(lambda y: pipeline.energy(y, phase_map), fd_stencil(3, 1e-4), x, 5)
    assert_allclose(smooth[5], fd, atol=1e-6)


def test_resolves_on_grid():
    assert resolves_on_grid([0.1, 0.1 + 2 / 1024], 10)
    assert not resolves_on_grid([0.1, 0.1 + 0.5 / 1024, 0.1 - 0.2 / 1024], 10)


def test_richardson_check():
    report = richardson_check(lambda y: np.sin(y[0]), np.array([0.3]), 0, step=1e-2)
    assert abs(report["richardson"] - np.cos(0.3)) < abs(report["derivative"] - np.cos(0.3))
    assert report["residual"] > 0
