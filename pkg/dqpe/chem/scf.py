"""
Restricted Hartree-Fock.

Roothaan iterations from the core-Hamiltonian guess with symmetric (Lowdin)
orthogonalization, density damping whenever the energy rises, and orbital
canonicalization / alignment so that MO-basis quantities vary smoothly with geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from dqpe.chem.geometry import Geometry, nuclear_repulsion
from dqpe.chem.integrals import AOIntegrals
from dqpe.core.spectral import degenerate_blocks
from dqpe.errors import GeometryError, SCFConvergenceError
from dqpe.logging_config import get_logger

logger = get_logger("chem.scf")

MAX_ITERATIONS = 200
COMMUTATOR_TOL = 1e-10
ENERGY_TOL = 1e-12
ORBITAL_DEGENERACY_TOL = 1e-6


@dataclass(frozen=True)
class SCFResult:
    coefficients: np.ndarray
    orbital_energies: np.ndarray
    energy: float  # total, hartree
    electronic_energy: float
    nuclear_repulsion: float
    n_occupied: int
    converged: bool
    iterations: int
    initial_energy: float
    damped: bool = False
    energies: tuple[float, ...] = field(default=(), repr=False)

    def density(self) -> np.ndarray:
        occ = self.coefficients[:, : self.n_occupied]
        return 2.0 * occ @ occ.T


def _fock(core: np.ndarray, eri: np.ndarray, density: np.ndarray) -> np.ndarray:
    J = np.einsum("pqrs,rs->pq", eri, density)
    K = np.einsum("prqs,rs->pq", eri, density)
    return core + J - 0.5 * K


def _electronic_energy(core: np.ndarray, fock: np.ndarray, density: np.ndarray) -> float:
    return float(0.5 * np.sum(density * (core + fock)))


def _orthogonalizer(S: np.ndarray) -> np.ndarray:
    s, U = scipy.linalg.eigh(S)
    if s.min() <= 1e-10:
        raise GeometryError("AO overlap matrix is not positive definite", min_eigenvalue=float(s.min()))
    return (U / np.sqrt(s)) @ U.T


def _diagonalize(fock: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eps, Cp = scipy.linalg.eigh(X.T @ fock @ X)
    return eps, X @ Cp


def canonical_signs(C: np.ndarray) -> np.ndarray:
    """Flip each orbital so its largest-magnitude coefficient is positive (first index on ties)."""
    C = np.array(C, copy=True)
    for k in range(C.shape[1]):
        col = np.abs(C[:, k])
        idx = int(np.argmax(col >= col.max() * (1.0 - 1e-8)))
        if C[idx, k] < 0:
            C[:, k] *= -1.0
    return C


def rhf_scf(
    geom: Geometry,
    integrals: AOIntegrals,
    max_iter: int = MAX_ITERATIONS,
    damping: float = 0.5,
) -> SCFResult:
    """
    Closed-shell SCF.

    Converged when the Fock/density commutator norm is at most 1e-10 and the energy
    change at most 1e-12 hartree.

    Args:
        geom: geometry (even electron count)
        integrals: AO integrals at that geometry
        max_iter: iteration cap
        damping: density mixing weight applied when an iteration raises the energy

    Returns:
        SCFResult with energy-ordered, sign-fixed canonical orbitals
    """
    n_elec = geom.n_electrons
    if n_elec % 2:
        raise GeometryError(
            f"Restricted Hartree-Fock needs an even electron count, got {n_elec}",
            n_electrons=n_elec,
        )
    n_occ = n_elec // 2
    if n_occ > integrals.n_basis:
        raise GeometryError(f"{n_elec} electrons do not fit in {integrals.n_basis} orbitals")

    S = integrals.overlap
    core = integrals.core
    eri = integrals.eri
    X = _orthogonalizer(S)
    e_nuc = nuclear_repulsion(geom)

    eps, C = _diagonalize(core, X)
    density = 2.0 * C[:, :n_occ] @ C[:, :n_occ].T
    fock = _fock(core, eri, density)
    energy = _electronic_energy(core, fock, density)
    initial_energy = energy + e_nuc
    energies = [energy + e_nuc]
    damped = False
    commutator = np.inf

    for iteration in range(1, max_iter + 1):
        eps, C = _diagonalize(fock, X)
        new_density = 2.0 * C[:, :n_occ] @ C[:, :n_occ].T
        new_fock = _fock(core, eri, new_density)
        new_energy = _electronic_energy(core, new_fock, new_density)

        mix = damping
        while new_energy > energy + ENERGY_TOL and mix > 1e-3:
            damped = True
            trial = (1.0 - mix) * new_density + mix * density
            new_fock = _fock(core, eri, trial)
            new_energy = _electronic_energy(core, new_fock, trial)
            new_density = trial
            mix *= 0.5
        if damped and new_energy > energy + ENERGY_TOL:
            logger.warning(f"SCF energy rose by {new_energy - energy:.3e} Ha at iteration {iteration}")

        delta = new_energy - energy
        density, fock, energy = new_density, new_fock, new_energy
        energies.append(energy + e_nuc)
        commutator = float(np.linalg.norm(fock @ density @ S - S @ density @ fock))
        logger.debug(f"SCF iteration {iteration}: E={energy + e_nuc:.12f} dE={delta:.3e} comm={commutator:.3e}")

        if commutator <= COMMUTATOR_TOL and abs(delta) <= ENERGY_TOL:
            eps, C = _diagonalize(fock, X)
            result = SCFResult(
                coefficients=canonical_signs(C),
                orbital_energies=eps,
                energy=energy + e_nuc,
                electronic_energy=energy,
                nuclear_repulsion=e_nuc,
                n_occupied=n_occ,
                converged=True,
                iterations=iteration,
                initial_energy=initial_energy,
                damped=damped,
                energies=tuple(energies),
            )
            logger.debug(f"SCF converged in {iteration} iterations: E={result.energy:.10f} Ha")
            return result

    raise SCFConvergenceError(
        f"SCF did not converge in {max_iter} iterations",
        iterations=max_iter,
        commutator=commutator,
        energy=energy + e_nuc,
        damped=damped,
    )


def align_orbitals(
    C: np.ndarray,
    orbital_energies: np.ndarray,
    reference: np.ndarray,
    S: np.ndarray,
    reference_energies: Optional[np.ndarray] = None,
    tol: float = ORBITAL_DEGENERACY_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Match orbitals to a reference set by overlap.

    Orbitals are reordered with a maximum-overlap assignment, signs follow the
    reference, and inside blocks where the reference energies are degenerate (within
    tol) the new orbitals are rotated onto the reference by an orthogonal Procrustes fit.

    Returns:
        (aligned coefficients, orbital energies in the new order)
    """
    M = reference.T @ S @ C
    _, order = linear_sum_assignment(-np.abs(M))
    C = C[:, order].copy()
    eps = np.asarray(orbital_energies)[order].copy()
    if reference_energies is None:
        blocks = [slice(k, k + 1) for k in range(C.shape[1])]
    else:
        blocks = degenerate_blocks(np.asarray(reference_energies), tol)

    for block in blocks:
        overlap = reference[:, block].T @ S @ C[:, block]
        if block.stop - block.start == 1:
            if overlap[0, 0] < 0:
                C[:, block] *= -1.0
            continue
        U, _, Wt = scipy.linalg.svd(overlap)
        C[:, block] = C[:, block] @ (Wt.T @ U.T)
        logger.debug(f"Procrustes alignment of degenerate orbitals {block.start}:{block.stop}")
    return C, eps
