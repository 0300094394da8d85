"""
Geometry optimization over the differentiable pipeline.

Objectives map x (Å) to an energy, a rigid-body-projected gradient and the dominant
state overlap. Gradient descent and BFGS record every iterate in an OptimizationTrace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from dqpe.core.gradients import hellmann_feynman_oracle
from dqpe.core.pipeline import PhasePipeline
from dqpe.core.spectral import ParametrizedHamiltonian, adapt_to_state, eigendecompose
from dqpe.errors import DqpeError, InputError, OptimizationError, StateOverlapError
from dqpe.logging_config import get_logger

logger = get_logger("core.optimizer")

DEFAULT_TOL = 1e-4  # hartree/Å
DEFAULT_MAX_ITER = 200
DEFAULT_STEP = 0.3  # Å^2/hartree
OVERLAP_WARN = 0.5
OVERLAP_ERROR = 0.1
ARMIJO_C1 = 1e-4
MAX_LINE_SEARCH = 20
CURVATURE_TOL = 1e-10


@dataclass(frozen=True)
class ObjectiveValue:
    energy: float
    gradient: np.ndarray
    overlap: Optional[float] = None
    bonds: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StateTarget:
    """QPE input state and the eigenstate it locks onto at the reference geometry."""

    psi: np.ndarray
    dominant_index: int
    dominant_overlap: float
    overlaps: np.ndarray = field(repr=False)
    policy: str = "dominant-overlap"


@dataclass
class IterationRecord:
    iteration: int
    x: np.ndarray
    energy: float
    grad_norm: float
    overlap: Optional[float] = None
    bonds: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_row(self) -> dict:
        row = {"iteration": self.iteration, "energy": self.energy, "grad_norm": self.grad_norm}
        for (i, j), r in sorted(self.bonds.items()):
            row[f"r_{i}_{j}"] = r
        row["overlap"] = "" if self.overlap is None else self.overlap
        row["flags"] = ";".join(self.flags)
        return row


@dataclass
class OptimizationTrace:
    method: str
    records: list[IterationRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    converged: bool = False
    reason: str = ""
    non_monotone_steps: int = 0

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    def rows(self) -> list[dict]:
        return [record.to_row() for record in self.records]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "reason": self.reason,
            "iterations": len(self.records),
            "non_monotone_steps": self.non_monotone_steps,
            "final_energy": self.final.energy if self.records else None,
            "final_grad_norm": self.final.grad_norm if self.records else None,
            "final_x": self.final.x.tolist() if self.records else None,
            "metadata": self.metadata,
        }


def rigid_body_projector(system: ParametrizedHamiltonian) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Projector removing translations/rotations for molecular systems, identity otherwise."""
    geometry_at = getattr(system, "geometry_at", None)
    if geometry_at is None:
        return lambda x, g: g
    return lambda x, g: geometry_at(x).project_internal(g)


def _bonds(system: ParametrizedHamiltonian, x: np.ndarray) -> dict:
    geometry_at = getattr(system, "geometry_at", None)
    return geometry_at(x).bond_lengths() if geometry_at is not None else {}


def _check_overlap(overlap: float, where: str) -> None:
    if overlap < OVERLAP_ERROR:
        raise StateOverlapError(
            f"Input state overlap {overlap:.3f} with every eigenstate is below {OVERLAP_ERROR} ({where})",
            overlap=overlap,
        )
    if overlap < OVERLAP_WARN:
        logger.warning(f"Dominant state overlap {overlap:.3f} below {OVERLAP_WARN} ({where})")


def excited_state_target(
    system: ParametrizedHamiltonian,
    x: np.ndarray,
    determinant: Optional[str] = None,
    csf=None,
    psi: Optional[np.ndarray] = None,
) -> StateTarget:
    """
    Resolve a determinant or CSF description to the QPE input state.

    No eigenindex is fixed: the estimator follows the dominant-overlap peak. The
    overlap with that eigenstate is checked here (warning below 0.5, error below 0.1).
    """
    if psi is None:
        psi = system.input_state(determinant=determinant, csf=csf)
    eig = adapt_to_state(eigendecompose(system.evaluate(np.asarray(x, dtype=float))), psi)
    overlaps = np.abs(eig.coefficients(psi)) ** 2
    index = int(np.argmax(overlaps))
    _check_overlap(float(overlaps[index]), "initial geometry")
    logger.info(
        f"Input state locks onto eigenstate {index} (E={eig.eigenvalues[index]:.8f}, overlap {overlaps[index]:.4f})"
    )
    return StateTarget(psi=psi, dominant_index=index, dominant_overlap=float(overlaps[index]), overlaps=overlaps)


class ExactStateObjective:
    """Exact eigenvalue of the dominant-overlap eigenstate with its Hellmann-Feynman gradient."""

    def __init__(self, system: ParametrizedHamiltonian, psi: np.ndarray, project: bool = True) -> None:
        self.system = system
        self.psi = psi
        self._project = rigid_body_projector(system) if project else (lambda x, g: g)

    def __call__(self, x: np.ndarray) -> ObjectiveValue:
        x = np.asarray(x, dtype=float)
        eig = adapt_to_state(eigendecompose(self.system.evaluate(x)), self.psi)
        overlaps = np.abs(eig.coefficients(self.psi)) ** 2
        index = int(np.argmax(overlaps))
        energy = float(eig.eigenvalues[index]) + self.system.offset(x)
        gradient = hellmann_feynman_oracle(self.system, x, index, psi=self.psi)
        return ObjectiveValue(
            energy=energy,
            gradient=self._project(x, gradient),
            overlap=float(overlaps[index]),
            bonds=_bonds(self.system, x),
        )


class PipelineObjective:
    """Estimated energy and smooth gradient from a PhasePipeline, with the overlap-drop guard."""

    def __init__(self, pipeline: PhasePipeline, project: bool = True) -> None:
        self.pipeline = pipeline
        self._project = rigid_body_projector(pipeline.system) if project else (lambda x, g: g)

    def __call__(self, x: np.ndarray) -> ObjectiveValue:
        x = np.asarray(x, dtype=float)
        energy, gradient = self.pipeline.evaluate(x)
        _, overlap = self.pipeline.dominant_state(x)
        _check_overlap(overlap, "current iterate")
        return ObjectiveValue(
            energy=energy,
            gradient=self._project(x, gradient),
            overlap=overlap,
            bonds=_bonds(self.pipeline.system, x),
        )


Objective = Callable[[np.ndarray], ObjectiveValue]


def _evaluate(objective: Objective, x: np.ndarray, iteration: int) -> ObjectiveValue:
    try:
        value = objective(x)
        if not (np.isfinite(value.energy) and np.all(np.isfinite(value.gradient))):
            raise OptimizationError("Objective returned a non-finite energy or gradient",
                                    energy=float(value.energy))
        return value
    except DqpeError as exc:
        exc.details.setdefault("iteration", iteration)
        exc.details.setdefault("x", np.asarray(x).tolist())
        logger.error(f"Failed to evaluate the objective at iteration {iteration}: {exc}")
        raise


def _record(trace: OptimizationTrace, iteration: int, x: np.ndarray, value: ObjectiveValue) -> IterationRecord:
    record = IterationRecord(
        iteration=iteration,
        x=np.array(x, dtype=float),
        energy=value.energy,
        grad_norm=float(np.linalg.norm(value.gradient)),
        overlap=value.overlap,
        bonds=value.bonds,
    )
    if trace.records and record.energy > trace.records[-1].energy:
        trace.non_monotone_steps += 1
        record.flags.append("non-monotone")
        logger.warning(
            f"Energy rose by {record.energy - trace.records[-1].energy:.3e} Ha at iteration {iteration}"
        )
    trace.records.append(record)
    logger.info(f"[{trace.method}] iteration {iteration}: E={record.energy:.10f} |g|={record.grad_norm:.3e}")
    return record


def _validate(tol: float, max_iter: int) -> None:
    if not tol > 0:
        raise InputError(f"Gradient tolerance must be positive, got {tol}")
    if max_iter < 0:
        raise InputError(f"max_iter must be >= 0, got {max_iter}")


def gradient_descent(
    objective: Objective,
    x0: np.ndarray,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    metadata: Optional[dict] = None,
) -> OptimizationTrace:
    """
    x <- x - step * grad E until |grad E| <= tol or max_iter steps.

    Args:
        objective: callable returning ObjectiveValue
        x0: starting coordinates (Å)
        step: learning rate in Å^2/hartree
        tol: gradient-norm tolerance (hartree/Å)
        max_iter: step cap
        metadata: estimator settings echoed into the trace

    Returns:
        OptimizationTrace; the last record carries the termination reason
    """
    if not step > 0:
        raise InputError(f"Step must be positive, got {step}")
    _validate(tol, max_iter)
    trace = OptimizationTrace(method="gd", metadata=dict(metadata or {}, step=step, tol=tol))
    x = np.array(x0, dtype=float)
    for iteration in range(max_iter + 1):
        value = _evaluate(objective, x, iteration)
        record = _record(trace, iteration, x, value)
        if record.grad_norm <= tol:
            trace.converged, trace.reason = True, "gradient-tolerance"
            break
        if iteration == max_iter:
            trace.reason = "max-iterations"
            break
        x = x - step * value.gradient
    trace.final.flags.append(trace.reason)
    return trace


def _interpolate_step(alpha: float, f0: float, slope: float, f_alpha: float,
                      prev: Optional[tuple[float, float]]) -> float:
    """Quadratic backtrack on the first try, cubic through the last two trials afterwards."""
    if prev is None:
        new = -slope * alpha**2 / (2.0 * (f_alpha - f0 - slope * alpha))
    else:
        a_prev, f_prev = prev
        r1 = f_alpha - f0 - slope * alpha
        r2 = f_prev - f0 - slope * a_prev
        denom = alpha - a_prev
        a = (r1 / alpha**2 - r2 / a_prev**2) / denom
        b = (-a_prev * r1 / alpha**2 + alpha * r2 / a_prev**2) / denom
        if abs(a) < 1e-16:
            new = -slope / (2.0 * b) if b != 0 else 0.5 * alpha
        else:
            disc = b * b - 3.0 * a * slope
            new = (-b + np.sqrt(max(disc, 0.0))) / (3.0 * a)
    if not np.isfinite(new):
        new = 0.5 * alpha
    return float(min(max(new, 0.1 * alpha), 0.5 * alpha))


def bfgs(
    objective: Objective,
    x0: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    fallback_step: float = DEFAULT_STEP,
    metadata: Optional[dict] = None,
) -> OptimizationTrace:
    """
    Quasi-Newton minimization with an Armijo backtracking line search.

    The inverse-Hessian update is skipped when s.y <= 1e-10 |s||y|. A failed line
    search falls back to a steepest-descent step of `fallback_step` and resets the
    inverse Hessian.
    """
    _validate(tol, max_iter)
    trace = OptimizationTrace(method="bfgs", metadata=dict(metadata or {}, tol=tol))
    x = np.array(x0, dtype=float)
    n = x.size
    H_inv = np.eye(n)
    first_update = True
    value = _evaluate(objective, x, 0)

    for iteration in range(max_iter + 1):
        record = _record(trace, iteration, x, value)
        if record.grad_norm <= tol:
            trace.converged, trace.reason = True, "gradient-tolerance"
            break
        if iteration == max_iter:
            trace.reason = "max-iterations"
            break

        g = value.gradient
        p = -H_inv @ g
        slope = float(g @ p)
        if slope >= 0:
            logger.warning(f"BFGS direction is not a descent direction at iteration {iteration}; resetting")
            H_inv, first_update = np.eye(n), True
            p = -g
            slope = float(g @ p)

        alpha, prev, accepted = 1.0, None, None
        for _ in range(MAX_LINE_SEARCH):
            trial = _evaluate(objective, x + alpha * p, iteration + 1)
            if trial.energy <= value.energy + ARMIJO_C1 * alpha * slope:
                accepted = trial
                break
            next_alpha = _interpolate_step(alpha, value.energy, slope, trial.energy, prev)
            prev = (alpha, trial.energy)
            alpha = next_alpha

        if accepted is None:
            logger.warning(f"Line search failed at iteration {iteration}; taking a steepest-descent step")
            record.flags.append("line-search-fallback")
            s = -fallback_step * g
            accepted = _evaluate(objective, x + s, iteration + 1)
            H_inv, first_update = np.eye(n), True
        else:
            s = alpha * p

        y = accepted.gradient - g
        sy = float(s @ y)
        if sy > CURVATURE_TOL * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                H_inv = (sy / float(y @ y)) * np.eye(n)
                first_update = False
            rho = 1.0 / sy
            left = np.eye(n) - rho * np.outer(s, y)
            H_inv = left @ H_inv @ left.T + rho * np.outer(s, s)
        else:
            logger.debug(f"Skipping BFGS update at iteration {iteration} (curvature {sy:.3e})")

        x = x + s
        value = accepted

    trace.final.flags.append(trace.reason)
    return trace
