"""
Derivatives of estimated phases and energies with respect to Hamiltonian parameters.

The smooth gradient chains first-order perturbation theory (eigenphase shifts and
overlap-weight response) through the analytic kernel derivative and the analytic
estimator gradient. Finite-difference stencils, the central-difference dH/dx fallback
and the Hellmann-Feynman oracle serve as references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from dqpe.core.estimator import GceConfig, gce_phase_gradient
from dqpe.core.qpe import (
    ParentDistribution,
    PhaseMap,
    ReadoutGrid,
    kernel,
    kernel_derivative,
    spectral_distribution,
)
from dqpe.core.spectral import (
    DEGENERACY_TOL,
    EigenSystem,
    ParametrizedHamiltonian,
    adapt_to_state,
    as_statevector,
    degenerate_blocks,
    eigendecompose,
)
from dqpe.errors import (
    DegenerateSpectrumError,
    DqpeError,
    EstimatorError,
    GradientError,
    InputError,
    NonSmoothHamiltonianError,
)
from dqpe.logging_config import get_logger

logger = get_logger("core.gradients")

DEFAULT_STEP = 1e-5
WEIGHT_FLOOR = 1e-14
COUPLING_TOL = 1e-8


@dataclass(frozen=True)
class SpectralDerivative:
    """First-order response of every eigenphase and overlap weight to one parameter."""

    phase_derivatives: np.ndarray
    weight_derivatives: np.ndarray
    energy_derivatives: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "phase_derivatives": self.phase_derivatives.tolist(),
            "weight_derivatives": self.weight_derivatives.tolist(),
            "energy_derivatives": self.energy_derivatives.tolist(),
        }


@dataclass(frozen=True)
class FdStencil:
    """Central stencil of degree 2m: f'(x) ~ sum_l b_l f(x + l dx)."""

    m: int
    step: float
    offsets: np.ndarray
    coefficients: np.ndarray

    @property
    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "step": self.step,
            "offsets": self.offsets.tolist(),
            "coefficients": self.coefficients.tolist(),
            "one_norm": self.one_norm,
        }


@dataclass
class GradientReport:
    values: np.ndarray
    method: str  # smooth | fd | hellmann-feynman
    validation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"index": j, "value": float(v), "method": self.method}
                for j, v in enumerate(self.values)
            ],
            "norm": float(np.linalg.norm(self.values)),
            "method": self.method,
            "validation": self.validation,
        }


def hamiltonian_derivative(
    H: ParametrizedHamiltonian,
    x: np.ndarray,
    j: int,
    step: Optional[float] = None,
) -> np.ndarray:
    """
    dH/dx_j, analytic when the Hamiltonian provides it, else a central difference.

    The difference is taken through H.local_evaluator(x) so orbital phases stay
    continuous, and refused when the second difference reveals a jump or kink.
    """
    x = np.asarray(x, dtype=float)
    analytic = H.derivative(x, j)
    if analytic is not None:
        return analytic
    if step is None:
        step = getattr(H, "derivative_step", DEFAULT_STEP)
    chart = H.local_evaluator(x)
    shift = np.zeros_like(x)
    shift[j] = step
    plus, centre, minus = chart(x + shift), chart(x), chart(x - shift)
    first = float(np.max(np.abs(plus - minus)))
    second = float(np.max(np.abs(plus - 2.0 * centre + minus)))
    floor = 1e-6 * max(1.0, float(np.max(np.abs(centre))))
    if second > max(1e-2 * first, floor):
        raise NonSmoothHamiltonianError(
            f"H(x) is not smooth along parameter {j}",
            parameter=j,
            second_difference=second,
            first_difference=first,
        )
    return (plus - minus) / (2.0 * step)


def spectral_derivative(
    H: ParametrizedHamiltonian,
    x: np.ndarray,
    j: int,
    psi: np.ndarray,
    phase_map: Optional[PhaseMap] = None,
    eig: Optional[EigenSystem] = None,
    dH: Optional[np.ndarray] = None,
) -> SpectralDerivative:
    """
    Perturbative eigenphase and overlap-weight derivatives along x_j.

    Args:
        H: parametrized Hamiltonian
        x: base point
        j: parameter index
        psi: fixed input state
        phase_map: energy-to-phase map (from the spectrum at x when omitted)
        eig: eigensystem at x, reused when the caller already has it
        dH: dH/dx_j, reused when already evaluated

    Returns:
        SpectralDerivative over all eigenstates
    """
    x = np.asarray(x, dtype=float)
    psi = as_statevector(psi)
    if eig is None:
        eig = eigendecompose(H.evaluate(x))
    if phase_map is None:
        phase_map = PhaseMap.from_spectrum(eig.eigenvalues)
    if dH is None:
        dH = hamiltonian_derivative(H, x, j)

    adapted = adapt_to_state(eig, psi)
    V = adapted.eigenvectors
    lam = adapted.eigenvalues
    c = adapted.coefficients(psi)
    w = np.abs(c) ** 2
    dHt = V.conj().T @ dH @ V
    dE = np.real(np.diag(dHt)).copy()

    weighted = w > WEIGHT_FLOOR
    dH_scale = max(1.0, float(np.max(np.abs(dHt))))
    block_of = np.empty(lam.size, dtype=int)
    for b, block in enumerate(degenerate_blocks(lam, DEGENERACY_TOL)):
        block_of[block] = b
        members = np.arange(block.start, block.stop)
        if members.size < 2:
            continue
        for v in members[weighted[members]]:
            coupling = np.abs(dHt[members, v]) * abs(c[v])
            coupling[members == v] = 0.0
            if coupling.max() > COUPLING_TOL * dH_scale:
                raise DegenerateSpectrumError(
                    f"Perturbation couples degenerate eigenstates at {lam[v]:.12f}",
                    parameter=j,
                    eigenvalue=float(lam[v]),
                    coupling=float(coupling.max()),
                )

    dw = np.zeros_like(w)
    for u in np.flatnonzero(weighted):
        others = (block_of != block_of[u]) & weighted
        if not np.any(others):
            continue
        dc = np.sum(dHt[u, others] * c[others] / (lam[u] - lam[others]))
        dw[u] = 2.0 * np.real(np.conj(c[u]) * dc)

    return SpectralDerivative(
        phase_derivatives=phase_map.scale * dE,
        weight_derivatives=dw,
        energy_derivatives=dE,
        eigenvalues=lam,
        weights=w,
    )


def distribution_derivative(
    phases: np.ndarray,
    weights: np.ndarray,
    derivative: SpectralDerivative,
    grid: ReadoutGrid,
) -> np.ndarray:
    """dP(j)/dx = sum_u [d|c_u|^2 P_u(j) + |c_u|^2 dP_u(j)/dphi_u dphi_u]."""
    dP = np.zeros(grid.size)
    for u in np.flatnonzero((weights > WEIGHT_FLOOR) | (derivative.weight_derivatives != 0.0)):
        if derivative.weight_derivatives[u] != 0.0:
            dP += derivative.weight_derivatives[u] * kernel(phases[u], grid)
        if weights[u] > WEIGHT_FLOOR:
            dP += weights[u] * derivative.phase_derivatives[u] * kernel_derivative(phases[u], grid)
    return dP


def phase_gradient(dist: ParentDistribution, estimator: str, config: Optional[GceConfig] = None) -> np.ndarray:
    """Gradient of the estimated phase with respect to each distribution entry."""
    if estimator == "gce":
        return gce_phase_gradient(dist, config or GceConfig.for_register(dist.grid.t))
    if estimator in ("expectation", "cruz"):
        phasors = np.exp(2j * np.pi * dist.grid.values)
        theta = np.sum(dist.probabilities * phasors)
        if abs(theta) < 1e-12:
            raise EstimatorError("Moment magnitude underflow in gradient")
        return np.imag(np.conj(theta) * phasors) / (2.0 * np.pi * abs(theta) ** 2)
    raise GradientError(
        f"Estimator {estimator!r} is piecewise constant and has no smooth gradient",
        estimator=estimator,
    )


def estimator_gradient(
    H: ParametrizedHamiltonian,
    x: np.ndarray,
    psi: np.ndarray,
    grid: ReadoutGrid,
    config: Optional[GceConfig] = None,
    estimator: str = "gce",
    phase_map: Optional[PhaseMap] = None,
    readout: Optional[ParentDistribution] = None,
) -> np.ndarray:
    """
    Smooth dE/dx of the estimated energy.

    Args:
        H: parametrized Hamiltonian
        x: base point
        psi: input state
        grid: readout grid
        config: GCE hyperparameters
        estimator: gce, expectation or cruz
        phase_map: map held fixed while differentiating (from the spectrum at x if omitted)
        readout: distribution the estimator sees (an empirical one in sampled mode);
            the exact parent distribution when omitted

    Returns:
        gradient in hartree per parameter unit, offset gradient included
    """
    x = np.asarray(x, dtype=float)
    psi = as_statevector(psi)
    eig = eigendecompose(H.evaluate(x))
    if phase_map is None:
        phase_map = PhaseMap.from_spectrum(eig.eigenvalues)
    adapted = adapt_to_state(eig, psi)
    phases = np.atleast_1d(phase_map.phase_of_energy(adapted.eigenvalues))
    weights = np.abs(adapted.coefficients(psi)) ** 2
    if readout is None:
        readout = spectral_distribution(phases, weights / weights.sum(), grid)
    grad_p = phase_gradient(readout, estimator, config)

    gradient = np.zeros(H.n_params)
    for j in range(H.n_params):
        derivative = spectral_derivative(H, x, j, psi, phase_map=phase_map, eig=eig)
        dP = distribution_derivative(phases, weights, derivative, grid)
        gradient[j] = float(grad_p @ dP) / phase_map.scale
    gradient += H.offset_gradient(x)
    logger.debug(f"Smooth gradient at x: norm={np.linalg.norm(gradient):.6e}")
    return gradient


def hellmann_feynman_oracle(
    H: ParametrizedHamiltonian,
    x: np.ndarray,
    target: int,
    psi: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    <u|dH/dx_j|u> for eigenstate `target`, plus the offset gradient.

    A degenerate target is accepted only when psi is given: the block is adapted to psi
    and the perturbation must not couple the weighted vector to its partners.
    """
    x = np.asarray(x, dtype=float)
    eig = eigendecompose(H.evaluate(x))
    if psi is None:
        eig.require_nondegenerate(target)
    else:
        eig = adapt_to_state(eig, psi)
    u = eig.eigenvectors[:, target]
    gradient = np.zeros(H.n_params)
    for j in range(H.n_params):
        dH = hamiltonian_derivative(H, x, j)
        if psi is not None:
            # raises when dH couples the weighted vector to its degenerate partners
            spectral_derivative(H, x, j, psi, eig=eig, dH=dH)
        gradient[j] = float(np.real(np.vdot(u, dH @ u)))
    return gradient + H.offset_gradient(x)


def fd_stencil(m: int, step: float) -> FdStencil:
    """
    Central difference coefficients b_l = (-1)^(l-1) / (dx l) C(m,|l|) / C(m+|l|,|l|).

    Exactness on x^p for p <= 2m is checked here.
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise InputError(f"Stencil order m must be a positive integer, got {m!r}")
    if not step > 0:
        raise InputError(f"Stencil step must be positive, got {step}")
    m = int(m)
    offsets = np.arange(-m, m + 1)
    unit = np.zeros(offsets.size)
    for idx, l in enumerate(offsets):
        if l == 0:
            continue
        a = abs(int(l))
        unit[idx] = (-1.0) ** (a - 1) / l * math.comb(m, a) / math.comb(m + a, a)
    for p in range(2 * m + 1):
        moment = float(np.sum(unit * offsets.astype(float) ** p))
        expected = 1.0 if p == 1 else 0.0
        if abs(moment - expected) > 1e-9 * max(1.0, float(m) ** p):
            raise GradientError(
                f"Stencil of order {m} is not exact on x^{p}", m=m, power=p, moment=moment
            )
    return FdStencil(m=m, step=float(step), offsets=offsets, coefficients=unit / step)


Direction = Union[int, np.ndarray]


def _direction_vector(x: np.ndarray, direction: Direction) -> np.ndarray:
    if isinstance(direction, (int, np.integer)):
        v = np.zeros_like(x)
        v[int(direction)] = 1.0
        return v
    v = np.asarray(direction, dtype=float)
    if v.shape != x.shape:
        raise InputError(f"Direction shape {v.shape} does not match x {x.shape}")
    return v


def fd_gradient(
    f: Callable[[np.ndarray], float],
    stencil: FdStencil,
    x: np.ndarray,
    direction: Direction,
) -> float:
    """sum_l b_l f(x + l dx v) for the stencil's offsets."""
    x = np.asarray(x, dtype=float)
    v = _direction_vector(x, direction)
    total = 0.0
    for l, b in zip(stencil.offsets, stencil.coefficients):
        if b == 0.0:
            continue
        point = x + l * stencil.step * v
        try:
            value = float(f(point))
        except DqpeError as exc:
            logger.error(f"Failed to evaluate stencil point l={int(l)}: {exc}")
            raise
        total += b * value
    return total


def richardson_check(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    direction: Direction,
    step: float = DEFAULT_STEP,
) -> dict:
    """Central differences at step and 2*step, their Richardson extrapolation and residual."""
    stencil = fd_stencil(1, step)
    fine = fd_gradient(f, stencil, x, direction)
    coarse = fd_gradient(f, fd_stencil(1, 2.0 * step), x, direction)
    return {
        "step": step,
        "derivative": fine,
        "derivative_double_step": coarse,
        "richardson": (4.0 * fine - coarse) / 3.0,
        "residual": abs(fine - coarse),
    }


def resolves_on_grid(values: Sequence[float], t: int) -> bool:
    """True when the stencil-point phases span more than one grid spacing 1/2^t."""
    values = np.asarray(values, dtype=float)
    return bool(values.max() - values.min() > 1.0 / (1 << t))
