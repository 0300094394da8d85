import numpy as np
import pytest
from numpy.testing import assert_allclose

from dqpe.core.optimizer import (
    ExactStateObjective,
    ObjectiveValue,
    PipelineObjective,
    bfgs,
    excited_state_target,
    gradient_descent,
)
from dqpe.core.pipeline import PhasePipeline
from dqpe.core.spectral import FunctionalHamiltonian
from dqpe.errors import GradientError, InputError, OptimizationError, StateOverlapError

X0 = np.array([0.1, 0.2])


@pytest.fixture
def psi():
    v = np.array([0.1, 0.2, 0.15, 1.0])
    return v / np.linalg.norm(v)


def quadratic(center, curvature):
    center = np.asarray(center, dtype=float)
    curvature = np.asarray(curvature, dtype=float)

    def objective(x):
        d = x - center
        return ObjectiveValue(energy=float(0.5 * d @ (curvature * d)), gradient=curvature * d)

    return objective


def test_gradient_descent_on_quadratic():
    trace = gradient_descent(quadratic([1.0, -2.0], [1.0, 2.0]), np.zeros(2), step=0.3, tol=1e-8, max_iter=500)
    assert trace.converged
    assert trace.reason == "gradient-tolerance"
    assert_allclose(trace.final.x, [1.0, -2.0], atol=1e-7)
    assert trace.non_monotone_steps == 0
    assert "gradient-tolerance" in trace.final.flags


def test_bfgs_on_ill_conditioned_quadratic():
    trace = bfgs(quadratic([0.5, 0.5, -1.0], [1.0, 10.0, 100.0]), np.zeros(3), tol=1e-8, max_iter=100)
    assert trace.converged
    assert_allclose(trace.final.x, [0.5, 0.5, -1.0], atol=1e-7)
    assert len(trace.records) < 50


def test_divergent_step_is_flagged():
    trace = gradient_descent(quadratic([0.0], [2.0]), np.array([1.0]), step=1.5, tol=1e-8, max_iter=3)
    assert not trace.converged
    assert trace.reason == "max-iterations"
    assert trace.non_monotone_steps == 3
    assert "non-monotone" in trace.records[1].flags


def test_zero_iterations_records_start():
    trace = gradient_descent(quadratic([1.0], [1.0]), np.zeros(1), max_iter=0)
    assert len(trace.records) == 1
    assert trace.reason == "max-iterations"


def test_optimizer_validation():
    objective = quadratic([0.0], [1.0])
    with pytest.raises(InputError):
        gradient_descent(objective, np.zeros(1), step=0.0)
    with pytest.raises(InputError):
        gradient_descent(objective, np.zeros(1), tol=0.0)
    with pytest.raises(InputError):
        bfgs(objective, np.zeros(1), max_iter=-1)


def test_failure_carries_iteration():
    def broken(x):
        raise GradientError("no gradient here")

    with pytest.raises(GradientError) as info:
        gradient_descent(broken, np.zeros(2))
    assert info.value.details["iteration"] == 0
    assert info.value.details["x"] == [0.0, 0.0]


def test_trace_rows_and_dict():
    trace = gradient_descent(quadratic([1.0], [1.0]), np.zeros(1), step=0.5, tol=1e-3, metadata={"t": 8})
    row = trace.rows()[0]
    assert {"iteration", "energy", "grad_norm", "overlap", "flags"} <= set(row)
    data = trace.to_dict()
    assert data["metadata"]["t"] == 8
    assert data["metadata"]["step"] == 0.5
    assert data["iterations"] == len(trace.records)


def test_exact_objective_gd_and_bfgs_agree(two_qubit_hamiltonian, psi):
    objective = ExactStateObjective(two_qubit_hamiltonian, psi)
    gd = gradient_descent(objective, X0, step=0.3, tol=1e-7, max_iter=500)
    qn = bfgs(objective, X0, tol=1e-7)
    assert gd.converged and qn.converged
    assert_allclose(gd.final.x, qn.final.x, atol=1e-5)
    assert gd.final.overlap > 0.5


def test_pipeline_objective_stays_within_resolution(two_qubit_hamiltonian, psi):
    t = 11
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=t)
    objective = PipelineObjective(pipeline)
    value = objective(X0)
    assert value.energy == pipeline.energy(X0)
    assert_allclose(value.gradient, pipeline.gradient(X0))
    assert value.overlap == pipeline.dominant_state(X0)[1]

    trace = gradient_descent(objective, X0, step=0.3, tol=1e-6, max_iter=20)
    assert len(trace.records) <= 21
    for record in trace.records:
        scale = pipeline.phase_map(record.x).scale
        assert abs(record.energy - pipeline.exact_energy(record.x)) <= 1 / (scale * 2**t)


def test_sampled_objective_call_consumes_one_draw(two_qubit_hamiltonian, psi):
    shots = 2000
    pipeline = PhasePipeline(two_qubit_hamiltonian, psi, t=8, shots=shots, seed=21)
    objective = PipelineObjective(pipeline)
    objective(X0)
    assert pipeline.draws == 1
    assert pipeline.last_empirical.shots == shots
    objective(X0)
    assert pipeline.draws == 2


def test_excited_state_target(two_qubit_hamiltonian, psi):
    target = excited_state_target(two_qubit_hamiltonian, X0, psi=psi)
    assert target.dominant_index == 0
    assert_allclose(target.overlaps.sum(), 1.0)
    assert target.policy == "dominant-overlap"


def test_low_overlap_is_refused():
    H = FunctionalHamiltonian(lambda x: np.diag(np.arange(16.0)) * (1 + x[0]), 1)
    uniform = np.ones(16) / 4.0
    with pytest.raises(StateOverlapError):
        excited_state_target(H, np.zeros(1), psi=uniform)


def test_non_finite_objective_is_refused():
    def blown_up(x):
        return ObjectiveValue(energy=float("nan"), gradient=np.zeros_like(x))

    with pytest.raises(OptimizationError) as info:
        bfgs(blown_up, np.zeros(2))
    assert info.value.details["iteration"] == 0
