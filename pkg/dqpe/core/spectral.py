"""
Dense Hermitian linear algebra for dqpe.

Eigendecomposition with deterministic phases, statevector checks, overlaps, and the
ParametrizedHamiltonian contract every downstream module consumes.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from dqpe.errors import (
    DegenerateSpectrumError,
    InputError,
    NonHermitianError,
    NormalizationError,
    RegisterSizeError,
)
from dqpe.logging_config import get_logger

logger = get_logger("core.spectral")

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
DEGENERACY_TOL = 1e-9  # hartree
MAX_DIMENSION = 2**10


def as_hermitian(H: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """
    Validate a square matrix as Hermitian and return its symmetrized copy.

    The asymmetry tolerance is scaled by max(1, max|H_ij|).
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InputError(f"Hamiltonian must be square, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    asymmetry = float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0
    if asymmetry > tol * scale:
        raise NonHermitianError(
            f"Matrix is not Hermitian: max asymmetry {asymmetry:.3e}",
            max_asymmetry=asymmetry,
        )
    return 0.5 * (H + H.conj().T)


def as_statevector(psi: np.ndarray, normalized: bool = True) -> np.ndarray:
    """Return psi as a complex vector, checking its norm when it is flagged normalized."""
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size == 0:
        raise InputError("Empty statevector")
    if normalized:
        deviation = abs(float(np.vdot(psi, psi).real) - 1.0)
        if deviation > NORM_TOL * 10:
            raise NormalizationError(
                f"Statevector is not normalized (|norm^2 - 1| = {deviation:.3e})",
                deviation=deviation,
            )
    return psi


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues (hartree) and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        """c_u = <u|psi> for every eigenvector."""
        return self.eigenvectors.conj().T @ psi

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def blocks(self, tol: float = DEGENERACY_TOL) -> list[slice]:
        return degenerate_blocks(self.eigenvalues, tol)

    def is_degenerate(self, index: int, tol: float = DEGENERACY_TOL) -> bool:
        gaps = np.abs(np.delete(self.eigenvalues, index) - self.eigenvalues[index])
        return bool(gaps.size and gaps.min() < tol)

    def require_nondegenerate(self, index: int, tol: float = DEGENERACY_TOL) -> None:
        if self.is_degenerate(index, tol):
            raise DegenerateSpectrumError(
                f"Eigenvalue {index} ({self.eigenvalues[index]:.12f}) is degenerate",
                index=index,
                eigenvalue=float(self.eigenvalues[index]),
            )


def degenerate_blocks(eigenvalues: np.ndarray, tol: float = DEGENERACY_TOL) -> list[slice]:
    """Contiguous runs of ascending eigenvalues whose neighbouring gaps are below tol."""
    blocks = []
    start = 0
    for k in range(1, len(eigenvalues) + 1):
        if k == len(eigenvalues) or eigenvalues[k] - eigenvalues[k - 1] >= tol:
            blocks.append(slice(start, k))
            start = k
    return blocks


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """
    Rotate each column so its largest-magnitude component is real positive.

    Near-ties are resolved toward the first component within 1e-8 relative of the maximum.
    """
    vectors = np.array(vectors, dtype=complex, copy=True)
    magnitudes = np.abs(vectors)
    for col in range(vectors.shape[1]):
        peak = magnitudes[:, col].max()
        if peak == 0.0:
            continue
        k = int(np.argmax(magnitudes[:, col] >= peak * (1.0 - 1e-8)))
        vectors[:, col] *= np.conj(vectors[k, col]) / magnitudes[k, col]
    return vectors


def eigendecompose(H: np.ndarray) -> EigenSystem:
    """
    Diagonalize a Hermitian matrix.

    Args:
        H: Hermitian matrix (hartree), dimension at most 2^10

    Returns:
        EigenSystem with ascending eigenvalues and phase-fixed eigenvectors
    """
    H = as_hermitian(H)
    if H.shape[0] > MAX_DIMENSION:
        raise RegisterSizeError(
            f"Dimension {H.shape[0]} exceeds the dense limit {MAX_DIMENSION}",
            dimension=H.shape[0],
        )
    if np.iscomplexobj(H) and not np.any(H.imag):
        H = H.real
    eigenvalues, eigenvectors = scipy.linalg.eigh(H)
    return EigenSystem(eigenvalues=eigenvalues, eigenvectors=fix_phases(eigenvectors))


def overlaps(psi: np.ndarray, eig: EigenSystem) -> np.ndarray:
    """|<u|psi>|^2 for every eigenstate u."""
    psi = as_statevector(psi)
    if psi.size != eig.dimension:
        raise InputError(
            f"State dimension {psi.size} does not match Hamiltonian dimension {eig.dimension}"
        )
    weights = np.abs(eig.coefficients(psi)) ** 2
    return np.clip(weights, 0.0, 1.0)


def adapt_to_state(
    eig: EigenSystem, psi: np.ndarray, tol: float = DEGENERACY_TOL
) -> EigenSystem:
    """
    Rotate each degenerate block so psi projects onto its first vector only.

    After adaptation every block carries at most one weighted eigenvector and that
    vector's coefficient <u|psi> is real positive.
    """
    psi = as_statevector(psi)
    vectors = eig.eigenvectors.astype(complex, copy=True)
    for block in degenerate_blocks(eig.eigenvalues, tol):
        size = block.stop - block.start
        if size < 2:
            continue
        sub = vectors[:, block]
        c = sub.conj().T @ psi
        norm = np.linalg.norm(c)
        if norm < 1e-14:
            continue
        direction = c / norm
        Q, _ = scipy.linalg.qr(np.column_stack([direction, np.eye(size)]))
        Q[:, 0] *= np.vdot(Q[:, 0], direction)
        vectors[:, block] = sub @ Q
        logger.debug(f"Adapted degenerate block {block.start}:{block.stop} to input state")
    return EigenSystem(eigenvalues=eig.eigenvalues, eigenvectors=vectors)


class ParametrizedHamiltonian(ABC):
    """
    A Hamiltonian H(x) over a real parameter vector x.

    Subclasses supply the evaluator; the directional derivative is optional and, when
    absent (None), gradients fall back to central differences.
    """

    @property
    @abstractmethod
    def n_params(self) -> int:
        ...

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        ...

    def derivative(self, x: np.ndarray, j: int) -> Optional[np.ndarray]:
        return None

    def local_evaluator(self, x0: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Evaluator whose matrix representation is continuous around x0 (default: evaluate)."""
        return self.evaluate

    def offset(self, x: np.ndarray) -> float:
        """Constant energy added after estimation (nuclear repulsion, frozen core)."""
        return 0.0

    def offset_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.n_params)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)


class FunctionalHamiltonian(ParametrizedHamiltonian):
    """ParametrizedHamiltonian assembled from plain callables."""

    def __init__(
        self,
        evaluator: Callable[[np.ndarray], np.ndarray],
        n_params: int,
        derivative: Optional[Callable[[np.ndarray, int], np.ndarray]] = None,
        offset: Optional[Callable[[np.ndarray], float]] = None,
        offset_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        dimension: Optional[int] = None,
    ) -> None:
        self._evaluator = evaluator
        self._n_params = int(n_params)
        self._derivative = derivative
        self._offset = offset
        self._offset_gradient = offset_gradient
        if dimension is None:
            dimension = np.asarray(evaluator(np.zeros(self._n_params))).shape[0]
        self._dimension = int(dimension)

    @property
    def n_params(self) -> int:
        return self._n_params

    @property
    def dimension(self) -> int:
        return self._dimension

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._evaluator(np.asarray(x, dtype=float)))

    def derivative(self, x: np.ndarray, j: int) -> Optional[np.ndarray]:
        if self._derivative is None:
            return None
        return np.asarray(self._derivative(np.asarray(x, dtype=float), j))

    def offset(self, x: np.ndarray) -> float:
        return 0.0 if self._offset is None else float(self._offset(x))

    def offset_gradient(self, x: np.ndarray) -> np.ndarray:
        if self._offset_gradient is None:
            return np.zeros(self.n_params)
        return np.asarray(self._offset_gradient(x), dtype=float)
