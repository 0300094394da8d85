"""
QPE readout distributions.

The parent distribution is produced two independent ways: the spectral kernel sum
and a full statevector simulation of the circuit (Hadamards, controlled powers of U,
inverse QFT). Readout index j encodes the binary fraction 0.b_1...b_t, b_1 most
significant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from dqpe.core.spectral import as_hermitian, as_statevector, eigendecompose
from dqpe.errors import AliasingError, InputError, NormalizationError, RegisterSizeError
from dqpe.logging_config import get_logger

logger = get_logger("core.qpe")

MAX_READOUT_QUBITS = 24
MAX_TOTAL_QUBITS = 24
WEIGHT_SUM_TOL = 1e-8


@dataclass(frozen=True)
class ReadoutGrid:
    """The 2^t readout phases j/2^t."""

    t: int

    def __post_init__(self) -> None:
        if isinstance(self.t, bool) or int(self.t) != self.t:
            raise RegisterSizeError(f"Readout size must be an integer, got {self.t!r}")
        if not 1 <= self.t <= MAX_READOUT_QUBITS:
            raise RegisterSizeError(
                f"Readout size t={self.t} outside [1, {MAX_READOUT_QUBITS}]", t=self.t
            )

    @property
    def size(self) -> int:
        return 1 << self.t

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.size) / self.size

    @property
    def spacing(self) -> float:
        return 1.0 / self.size

    def bitstring(self, j: int) -> str:
        return format(int(j), f"0{self.t}b")


@dataclass(frozen=True)
class PhaseMap:
    """
    Affine energy-to-phase map phi = margin + (1 - 2 margin)(E - e_min)/span.

    Energies in [e_min - tolerance, e_min + span + tolerance] are accepted; anything
    further out raises AliasingError. The tolerance (hartree, 0 by default) must fit
    inside the margin band, so an accepted energy never wraps around the unit circle.
    """

    e_min: float
    span: float
    margin: float = 0.05
    tolerance: float = 0.0

    def __post_init__(self) -> None:
        if not self.span > 0:
            raise InputError(f"Phase map span must be positive, got {self.span}")
        if not 0.0 <= self.margin < 0.5:
            raise InputError(f"Phase map margin must lie in [0, 0.5), got {self.margin}")
        if self.tolerance < 0.0:
            raise InputError(f"Phase map tolerance must be >= 0, got {self.tolerance}")
        if self.tolerance > 0.0 and self.tolerance * self.scale >= self.margin:
            raise InputError(
                "Phase map tolerance must stay inside the margin band",
                tolerance=self.tolerance,
                margin=self.margin,
            )

    @classmethod
    def from_spectrum(
        cls, eigenvalues: np.ndarray, margin: float = 0.05, tolerance: float = 0.0
    ) -> PhaseMap:
        eigenvalues = np.asarray(eigenvalues, dtype=float)
        e_min = float(eigenvalues.min())
        span = float(eigenvalues.max() - e_min)
        if span <= 0.0:
            span = 1.0
        return cls(e_min=e_min, span=span, margin=margin, tolerance=tolerance)

    @property
    def scale(self) -> float:
        """d(phi)/dE in 1/hartree."""
        return (1.0 - 2.0 * self.margin) / self.span

    @property
    def guard_band(self) -> float:
        """Energy width of one margin band, in hartree."""
        return self.margin / self.scale

    def phase_of_energy(self, energy):
        energy = np.asarray(energy, dtype=float)
        slack = self.tolerance + 1e-12 * self.span
        low = self.e_min - slack
        high = self.e_min + self.span + slack
        if np.any(energy < low) or np.any(energy > high) or not np.all(np.isfinite(energy)):
            raise AliasingError(
                "Energy outside the phase-map span",
                e_min=self.e_min,
                span=self.span,
                tolerance=self.tolerance,
                energy=energy,
            )
        phi = np.maximum(self.margin + self.scale * (energy - self.e_min), 0.0)
        if np.any(phi >= 1.0):
            # margin 0 puts the top of the span on phi = 1, which reads back as 0
            raise AliasingError(
                "Energy maps onto phase 1 and aliases to 0",
                e_min=self.e_min,
                span=self.span,
                energy=energy,
            )
        outside = (energy < self.e_min) | (energy > self.e_min + self.span)
        if np.any(outside):
            logger.debug("Energy accepted within the phase-map tolerance")
        return float(phi) if np.ndim(phi) == 0 else phi

    def energy_of_phase(self, phi):
        energy = self.e_min + (np.asarray(phi, dtype=float) - self.margin) / self.scale
        return float(energy) if np.ndim(energy) == 0 else energy

    def to_dict(self) -> dict:
        return {
            "e_min": self.e_min,
            "span": self.span,
            "margin": self.margin,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class ParentDistribution:
    """Probabilities over the 2^t readout bitstrings."""

    probabilities: np.ndarray
    grid: ReadoutGrid

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (self.grid.size,):
            raise InputError(
                f"Distribution length {p.shape} does not match grid size {self.grid.size}"
            )
        if np.any(p < -1e-14):
            raise NormalizationError("Distribution has negative entries", min=float(p.min()))
        total = float(p.sum())
        if abs(total - 1.0) > 1e-10 + 1e-15 * self.grid.size:
            raise NormalizationError(
                f"Distribution sums to {total!r}, not 1", deviation=total - 1.0
            )
        object.__setattr__(self, "probabilities", np.clip(p, 0.0, None))

    @property
    def phases(self) -> np.ndarray:
        return self.grid.values

    def rotate(self, m: int) -> ParentDistribution:
        """Cyclic shift by m grid points (adds m/2^t to every phase)."""
        return ParentDistribution(np.roll(self.probabilities, m), self.grid)

    def rows(self) -> Iterator[dict]:
        for j, (phase, p) in enumerate(zip(self.phases, self.probabilities)):
            yield {"index": j, "phase": float(phase), "probability": float(p)}


def circular_offset(x):
    """Reduce phase differences to (-0.5, 0.5]."""
    x = np.asarray(x, dtype=float)
    return x - np.ceil(x - 0.5)


def _sin_cos_n_pi(n_d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # reducing mod 2 first keeps sin(pi k) ~ 1e-16 for integer k
    reduced = np.mod(n_d, 2.0) * np.pi
    return np.sin(reduced), np.cos(reduced)


def kernel(phi_u: float, grid: ReadoutGrid) -> np.ndarray:
    """P_{phi_u}(j) for every grid index j."""
    N = grid.size
    d = circular_offset(phi_u - grid.values)
    sin_n, _ = _sin_cos_n_pi(N * d)
    s = np.sin(np.pi * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (sin_n / (N * s)) ** 2
    p[d == 0.0] = 1.0
    return p


def kernel_probability(phi_u: float, j: int, grid: ReadoutGrid) -> float:
    """
    Probability of readout index j for a single eigenphase phi_u.

    Returns 1 when the circular mismatch is exactly zero, otherwise
    sin^2(2^t pi d) / (2^{2t} sin^2(pi d)).
    """
    N = grid.size
    d = float(circular_offset(phi_u - j / N))
    if d == 0.0:
        return 1.0
    sin_n, _ = _sin_cos_n_pi(np.array(N * d))
    return float((sin_n / (N * np.sin(np.pi * d))) ** 2)


def kernel_derivative(phi_u: float, grid: ReadoutGrid) -> np.ndarray:
    """Analytic dP_{phi_u}(j)/dphi_u for every grid index j."""
    N = float(grid.size)
    d = circular_offset(phi_u - grid.values)
    x = np.pi * d
    sin_n, cos_n = _sin_cos_n_pi(N * d)
    s = np.sin(x)
    c = np.cos(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = sin_n / (N * s)
        dratio = (N * cos_n * s - sin_n * c) / (N * s * s)
        dp_dx = 2.0 * ratio * dratio
    # series branch where the closed form cancels catastrophically
    small = np.abs(N * x) < 1e-3
    if np.any(small):
        xs = x[small]
        D = N - (N**3 - N) * xs**2 / 6.0 + (3 * N**5 - 10 * N**3 + 7 * N) * xs**4 / 360.0
        dD = -(N**3 - N) * xs / 3.0 + (3 * N**5 - 10 * N**3 + 7 * N) * xs**3 / 90.0
        dp_dx[small] = 2.0 * D * dD / N**2
    return np.pi * dp_dx


def _checked_weights(phases: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if phases.shape != weights.shape:
        raise InputError(
            f"phases and weights differ in shape: {phases.shape} vs {weights.shape}"
        )
    if np.any(weights < -1e-14):
        raise NormalizationError("Negative weight", min=float(weights.min()))
    total = float(weights.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise NormalizationError(
            f"Weights sum to {total!r}, not 1", deviation=total - 1.0
        )
    return np.mod(phases, 1.0), np.clip(weights, 0.0, None) / total


def spectral_distribution(
    phases: np.ndarray, weights: np.ndarray, grid: ReadoutGrid
) -> ParentDistribution:
    """
    Parent distribution as the weighted sum of single-eigenphase kernels.

    Args:
        phases: eigenphases in [0, 1)
        weights: |c_u|^2 per eigenphase, summing to 1
        grid: readout grid

    Returns:
        ParentDistribution over 2^t bitstrings
    """
    phases, weights = _checked_weights(phases, weights)
    p = np.zeros(grid.size)
    for phi, w in zip(phases, weights):
        if w == 0.0:
            continue
        p += w * kernel(phi, grid)
    return ParentDistribution(p, grid)


def circuit_distribution(
    H: np.ndarray, psi: np.ndarray, phase_map: PhaseMap, grid: ReadoutGrid
) -> ParentDistribution:
    """
    Statevector simulation of the QPE circuit.

    Controlled powers U^{2^p} are applied as V diag(exp(i 2 pi 2^p phi_u)) V^dagger and
    the inverse QFT gate by gate (swaps, controlled phases, Hadamards).
    """
    H = as_hermitian(H)
    dim = H.shape[0]
    n = int(round(np.log2(dim)))
    if 1 << n != dim:
        raise InputError(f"Hamiltonian dimension {dim} is not a power of two")
    t = grid.t
    if t + n > MAX_TOTAL_QUBITS:
        raise RegisterSizeError(
            f"t + n = {t + n} exceeds {MAX_TOTAL_QUBITS} qubits", t=t, n=n
        )
    psi = as_statevector(psi)
    if psi.size != dim:
        raise InputError(f"State dimension {psi.size} does not match {dim}")

    eig = eigendecompose(H)
    phases = np.atleast_1d(phase_map.phase_of_energy(eig.eigenvalues))
    V = eig.eigenvectors
    N = grid.size

    state = np.empty((N, dim), dtype=complex)
    state[:] = psi / np.sqrt(N)
    tensor = state.reshape((2,) * t + (dim,))

    for p in range(t):
        angles = 2.0 * np.pi * np.mod(phases * float(1 << p), 1.0)
        U_p = (V * np.exp(1j * angles)) @ V.conj().T
        axis = t - 1 - p
        index = _select(t, {axis: 1})
        tensor[index] = tensor[index] @ U_p.T

    tensor = _inverse_qft(tensor, t)
    probabilities = np.sum(np.abs(tensor) ** 2, axis=-1).reshape(N)
    logger.debug(f"Circuit simulation done: t={t}, n={n}")
    return ParentDistribution(probabilities, grid)


def _select(t: int, bits: dict[int, int]) -> tuple:
    index = [slice(None)] * (t + 1)
    for axis, bit in bits.items():
        index[axis] = bit
    return tuple(index)


def _hadamard(tensor: np.ndarray, axis: int) -> np.ndarray:
    x0 = np.take(tensor, 0, axis=axis)
    x1 = np.take(tensor, 1, axis=axis)
    return np.stack([(x0 + x1), (x0 - x1)], axis=axis) / np.sqrt(2.0)


def _inverse_qft(tensor: np.ndarray, t: int) -> np.ndarray:
    # qubit i (1-based) lives on axis i - 1; axis 0 is the most significant bit
    tensor = np.ascontiguousarray(np.transpose(tensor, list(reversed(range(t))) + [t]))
    for i in range(t, 0, -1):
        for m in range(t - i + 1, 1, -1):
            control = i + m - 1
            index = _select(t, {i - 1: 1, control - 1: 1})
            tensor[index] *= np.exp(-2j * np.pi / (1 << m))
        tensor = _hadamard(tensor, i - 1)
    return tensor


def decoupling_error(
    phases: np.ndarray,
    weights: np.ndarray,
    grid: ReadoutGrid,
    target: int,
    half_width: float,
) -> float:
    """
    Largest deviation, inside the window around phases[target], between the full
    parent distribution and the target's own weighted kernel.
    """
    phases, weights = _checked_weights(phases, weights)
    full = spectral_distribution(phases, weights, grid).probabilities
    own = weights[target] * kernel(phases[target], grid)
    window = np.abs(circular_offset(grid.values - phases[target])) <= half_width
    return float(np.max(np.abs(full - own)[window]))
