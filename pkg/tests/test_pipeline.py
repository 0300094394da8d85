import numpy as np
import pytest
from numpy.testing import assert_allclose

from dqpe.core.gradients import hellmann_feynman_oracle
from dqpe.core.pipeline import PhasePipeline
from dqpe.core.spectral import eigendecompose
from dqpe.errors import InputError

X0 = np.array([0.1, 0.2])


@pytest.fixture
def psi():
    v = np.array([0.1, 0.2, 0.15, 1.0])
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("t", [8, 11])
def test_exact_mode_energy_is_close(two_qubit_hamiltonian, psi, t):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=t)
    scale = pipeline.phase_map(X0).scale
    assert abs(pipeline.energy(X0) - pipeline.exact_energy(X0)) <= 1 / (scale * 2**t)


def test_exact_energy_tracks_dominant_state(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8)
    index, weight = pipeline.dominant_state(X0)
    assert index == 0
    assert weight > 0.8
    ground = eigendecompose(two_qubit_hamiltonian(X0)).eigenvalues[0]
    assert_allclose(pipeline.exact_energy(X0), ground + X0 @ X0)
    assert_allclose(pipeline.oracle_gradient(X0), hellmann_feynman_oracle(two_qubit_hamiltonian, X0, 0))


def test_spectrum_weights_are_normalized(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8, margin=0.1)
    phases, weights = pipeline.spectrum(X0)
    assert_allclose(weights.sum(), 1.0)
    assert_allclose([phases.min(), phases.max()], [0.1, 0.9])
    assert_allclose(pipeline.distribution(X0).probabilities.sum(), 1.0)


def test_sampled_mode_is_reproducible(two_qubit_hamiltonian, psi):
    first = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=2000, seed=5)
    second = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=2000, seed=5)
    e1 = first.energy(X0)
    assert e1 == second.energy(X0)
    assert first.sampled
    assert first.last_empirical.counts.sum() == 2000
    assert first.energy(X0) != e1


def test_sampled_gradient_is_finite(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=10_000, seed=3)
    gradient = pipeline.gradient(X0)
    assert gradient.shape == (2,)
    assert np.all(np.isfinite(gradient))


def test_pipeline_validation(two_qubit_hamiltonian, psi):
    with pytest.raises(InputError):
        PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=-1)
    with pytest.raises(InputError):
        PhasePipeline(two_qubit_hamiltonian, np.array([1.0, 0.0]), t=8)


def test_fixed_map_admits_stencil_neighbours(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8)
    phase_map = pipeline.phase_map(X0)
    assert phase_map.tolerance == pytest.approx(0.9 * phase_map.guard_band)
    for shift in (-1e-3, 1e-3):
        assert np.isfinite(pipeline.energy(X0 + shift, phase_map))


def test_sampled_pipeline_records_seed_and_draw(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=500, seed=5)
    pipeline.energy(X0)
    pipeline.energy(X0)
    assert pipeline.last_empirical.sidecar() == {"seed": 5, "shots": 500, "generator": "PCG64", "draw": 1}
    assert isinstance(PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=10).seed, int)


def test_evaluate_reads_one_draw(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=3000, seed=9)
    energy, gradient = pipeline.evaluate(X0)
    assert pipeline.draws == 1
    assert pipeline.last_empirical.counts.sum() == 3000

    replay = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=3000, seed=9)
    assert replay.energy(X0) == energy
    assert gradient.shape == (2,)


def test_exact_evaluate_matches_separate_calls(two_qubit_hamiltonian, psi):
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8)
    energy, gradient = pipeline.evaluate(X0)
    assert energy == pipeline.energy(X0)
    assert_allclose(gradient, pipeline.gradient(X0))
    assert pipeline.draws == 0
