"""
Molecular Hamiltonians as ParametrizedHamiltonians over nuclear coordinates.

The evaluated matrix is the electronic qubit Hamiltonian in canonical RHF orbitals;
nuclear repulsion and any core energy are the offset added after estimation.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from dqpe.chem.fcidump import fcidump_read
from dqpe.chem.geometry import Geometry, nuclear_repulsion, nuclear_repulsion_gradient
from dqpe.chem.hamiltonian import (
    SecondQuantizedHamiltonian,
    jordan_wigner,
    mo_transform,
    state_from_spec,
)
from dqpe.chem.integrals import AOIntegrals, sto3g_integrals
from dqpe.chem.scf import SCFResult, align_orbitals, rhf_scf
from dqpe.core.spectral import ParametrizedHamiltonian
from dqpe.errors import InputError
from dqpe.logging_config import get_logger

logger = get_logger("chem.system")

DERIVATIVE_STEP = 1e-5  # Å

# input determinants for shipped molecules whose target is not the RHF reference;
# "010100" occupies 0-beta and 1-beta (an M_S = -1 triplet component)
DEFAULT_DETERMINANTS = {"h3+-triplet": "010100"}


class MolecularSystem(ParametrizedHamiltonian):
    """
    Built-in STO-3G molecule; x is the flattened Cartesian coordinate vector in Å.

    No analytic dH/dx: gradients take central differences through local_evaluator,
    whose displaced orbitals are aligned to those at the base point.
    """

    def __init__(self, geometry: Geometry, derivative_step: float = DERIVATIVE_STEP,
                 cache_size: int = 128) -> None:
        if not derivative_step > 0:
            raise InputError(f"Derivative step must be positive, got {derivative_step}")
        self.geometry = geometry
        self.derivative_step = float(derivative_step)
        self._solve = lru_cache(maxsize=cache_size)(self._solve_uncached)
        n_orbitals = sto3g_integrals(geometry).n_basis
        self._n_qubits = 2 * n_orbitals

    @property
    def n_params(self) -> int:
        return 3 * self.geometry.n_atoms

    @property
    def dimension(self) -> int:
        return 1 << self._n_qubits

    @property
    def n_qubits(self) -> int:
        return self._n_qubits

    @property
    def n_electrons(self) -> int:
        return self.geometry.n_electrons

    @property
    def initial_x(self) -> np.ndarray:
        return self.geometry.flat

    def geometry_at(self, x: np.ndarray) -> Geometry:
        return self.geometry.with_coordinates(x)

    def _solve_uncached(self, key: tuple) -> tuple[AOIntegrals, SCFResult]:
        geom = self.geometry_at(np.array(key))
        integrals = sto3g_integrals(geom)
        return integrals, rhf_scf(geom, integrals)

    def scf(self, x: np.ndarray) -> SCFResult:
        return self._solve(tuple(np.asarray(x, dtype=float).ravel()))[1]

    def second_quantized(self, x: np.ndarray, include_constants: bool = False) -> SecondQuantizedHamiltonian:
        integrals, scf = self._solve(tuple(np.asarray(x, dtype=float).ravel()))
        core = nuclear_repulsion(self.geometry_at(x)) if include_constants else 0.0
        return mo_transform(scf, integrals, core_energy=core)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return jordan_wigner(self.second_quantized(x)).matrix

    def local_evaluator(self, x0: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        reference = self.scf(x0)

        def evaluate_aligned(x: np.ndarray) -> np.ndarray:
            integrals, scf = self._solve(tuple(np.asarray(x, dtype=float).ravel()))
            C, _ = align_orbitals(
                scf.coefficients,
                scf.orbital_energies,
                reference.coefficients,
                integrals.overlap,
                reference_energies=reference.orbital_energies,
            )
            return jordan_wigner(mo_transform(scf, integrals, coefficients=C)).matrix

        return evaluate_aligned

    def offset(self, x: np.ndarray) -> float:
        return nuclear_repulsion(self.geometry_at(x))

    def offset_gradient(self, x: np.ndarray) -> np.ndarray:
        return nuclear_repulsion_gradient(self.geometry_at(x))

    def input_state(self, determinant: Optional[str] = None, csf=None) -> np.ndarray:
        return state_from_spec(self.n_qubits, self.n_electrons, determinant, csf)


class FixedSystem(ParametrizedHamiltonian):
    """A Hamiltonian without geometry parameters, e.g. from an FCIDUMP file."""

    def __init__(self, sq: SecondQuantizedHamiltonian) -> None:
        self.sq = sq
        self._qubit = jordan_wigner(sq)

    @classmethod
    def from_fcidump(cls, path: Union[str, Path]) -> FixedSystem:
        return cls(fcidump_read(path))

    @property
    def n_params(self) -> int:
        return 0

    @property
    def dimension(self) -> int:
        return self._qubit.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return self._qubit.n_qubits

    @property
    def n_electrons(self) -> Optional[int]:
        return self.sq.n_electrons

    @property
    def initial_x(self) -> np.ndarray:
        return np.zeros(0)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self._qubit.matrix

    def offset(self, x: np.ndarray) -> float:
        return self._qubit.offset

    def input_state(self, determinant: Optional[str] = None, csf=None) -> np.ndarray:
        return state_from_spec(self.n_qubits, self.n_electrons, determinant, csf)
