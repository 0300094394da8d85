"""
Second-quantized and qubit Hamiltonians.

Spatial-orbital integrals (chemist notation) are mapped to a dense qubit matrix by the
Jordan-Wigner encoding with interleaved spin orbitals: spin orbital 2i is orbital i
spin alpha, 2i+1 is spin beta, and qubit 0 is the leftmost (most significant) bit
of a basis-state index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Optional, Sequence

import numpy as np
import scipy.sparse

from dqpe.chem.integrals import AOIntegrals
from dqpe.chem.scf import SCFResult
from dqpe.errors import InputError, RegisterSizeError, StateSpecError
from dqpe.logging_config import get_logger

logger = get_logger("chem.hamiltonian")

MAX_SPIN_ORBITALS = 10
SYMMETRY_TOL = 1e-10
CONVENTION = "chemist"

_IDENTITY = scipy.sparse.identity(2, format="csr")
_PARITY = scipy.sparse.diags([1.0, -1.0], format="csr")
# |1> -> |0> on one qubit
_LOWER = scipy.sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))


def canonical_quartets(n: int):
    """(i, j, k, l) with i >= j, k >= l and ij >= kl as compound indices."""
    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(n):
                for l in range(k + 1):
                    if ij >= k * (k + 1) // 2 + l:
                        yield i, j, k, l


def eri_permutations(i: int, j: int, k: int, l: int) -> set[tuple[int, int, int, int]]:
    return {
        (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
        (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
    }


def _symmetrized_eri(g: np.ndarray) -> np.ndarray:
    out = np.empty_like(g)
    for quartet in canonical_quartets(g.shape[0]):
        perms = sorted(eri_permutations(*quartet))
        values = [g[p] for p in perms]
        if all(v == values[0] for v in values):
            value = values[0]
        else:
            value = sum(values) / len(values)
        for p in perms:
            out[p] = value
    return out


@dataclass(frozen=True)
class SecondQuantizedHamiltonian:
    """
    Spatial-orbital Hamiltonian sum h_pq E_pq + 1/2 sum (pq|rs)(E_pq E_rs - d_qr E_ps) + core.

    Construction validates the symmetries within 1e-10 and stores exactly symmetric
    copies.
    """

    one_body: np.ndarray
    two_body: np.ndarray
    core_energy: float = 0.0
    n_electrons: Optional[int] = None
    ms2: int = 0
    convention: str = CONVENTION

    def __post_init__(self) -> None:
        h = np.asarray(self.one_body, dtype=float)
        g = np.asarray(self.two_body, dtype=float)
        n = h.shape[0]
        if h.shape != (n, n) or g.shape != (n, n, n, n):
            raise InputError(f"Integral shapes {h.shape} and {g.shape} are inconsistent")
        if self.convention != CONVENTION:
            raise InputError(f"Unsupported two-electron convention {self.convention!r}")
        scale = max(1.0, float(np.max(np.abs(g))) if g.size else 1.0)
        asym_h = float(np.max(np.abs(h - h.T))) if h.size else 0.0
        sym_g = _symmetrized_eri(g) if g.size else g
        asym_g = float(np.max(np.abs(g - sym_g))) if g.size else 0.0
        if asym_h > SYMMETRY_TOL * scale or asym_g > SYMMETRY_TOL * scale:
            raise InputError(
                "Integrals violate permutational symmetry",
                one_body_asymmetry=asym_h,
                two_body_asymmetry=asym_g,
            )
        object.__setattr__(self, "one_body", np.where(h == h.T, h, 0.5 * (h + h.T)))
        object.__setattr__(self, "two_body", sym_g)
        object.__setattr__(self, "core_energy", float(self.core_energy))

    @property
    def n_orbitals(self) -> int:
        return self.one_body.shape[0]

    @property
    def n_spin_orbitals(self) -> int:
        return 2 * self.n_orbitals


@dataclass(frozen=True)
class QubitHamiltonian:
    """Dense electronic matrix over 2^n basis states plus a constant offset (hartree)."""

    matrix: np.ndarray
    offset: float = 0.0

    @property
    def n_qubits(self) -> int:
        return int(round(np.log2(self.matrix.shape[0])))

    def full(self) -> np.ndarray:
        return self.matrix + self.offset * np.eye(self.matrix.shape[0])


def mo_transform(
    scf: SCFResult,
    integrals: AOIntegrals,
    coefficients: Optional[np.ndarray] = None,
    core_energy: float = 0.0,
) -> SecondQuantizedHamiltonian:
    """
    AO -> MO transformation: h = C^T h C and four quarter transforms of (pq|rs).

    Args:
        scf: converged SCF result, supplies C and the electron count
        integrals: AO integrals
        coefficients: orbitals to use instead of scf.coefficients (aligned sets)
        core_energy: constant carried by the result
    """
    C = scf.coefficients if coefficients is None else coefficients
    h = C.T @ integrals.core @ C
    g = np.einsum("pqrs,pi->iqrs", integrals.eri, C, optimize=True)
    g = np.einsum("iqrs,qj->ijrs", g, C, optimize=True)
    g = np.einsum("ijrs,rk->ijks", g, C, optimize=True)
    g = np.einsum("ijks,sl->ijkl", g, C, optimize=True)
    return SecondQuantizedHamiltonian(
        one_body=h,
        two_body=g,
        core_energy=core_energy,
        n_electrons=2 * scf.n_occupied,
    )


def annihilation_operators(n_qubits: int) -> list[scipy.sparse.csr_matrix]:
    """Jordan-Wigner a_p = Z x ... x Z x |0><1| x I x ... x I for every qubit p."""
    ops = []
    for p in range(n_qubits):
        factors = [_PARITY] * p + [_LOWER] + [_IDENTITY] * (n_qubits - p - 1)
        ops.append(reduce(lambda a, b: scipy.sparse.kron(a, b, format="csr"), factors))
    return ops


@lru_cache(maxsize=8)
def excitation_operators(n_orbitals: int) -> list[list[scipy.sparse.csr_matrix]]:
    """Spin-summed E_pq = sum_sigma a+_{p sigma} a_{q sigma}."""
    a = annihilation_operators(2 * n_orbitals)
    return [
        [
            (a[2 * p].T @ a[2 * q] + a[2 * p + 1].T @ a[2 * q + 1]).tocsr()
            for q in range(n_orbitals)
        ]
        for p in range(n_orbitals)
    ]


def jordan_wigner(sq: SecondQuantizedHamiltonian) -> QubitHamiltonian:
    """
    Dense qubit matrix of a spatial-orbital Hamiltonian.

    Args:
        sq: second-quantized Hamiltonian with at most 5 spatial orbitals

    Returns:
        QubitHamiltonian with the electronic matrix and core_energy as offset
    """
    n_qubits = sq.n_spin_orbitals
    if n_qubits > MAX_SPIN_ORBITALS:
        raise RegisterSizeError(
            f"{n_qubits} spin orbitals exceed the dense limit {MAX_SPIN_ORBITALS}",
            n_qubits=n_qubits,
        )
    n = sq.n_orbitals
    dim = 1 << n_qubits
    if n == 0:
        return QubitHamiltonian(np.zeros((1, 1)), sq.core_energy)
    E = excitation_operators(n)
    h, g = sq.one_body, sq.two_body

    H = scipy.sparse.csr_matrix((dim, dim))
    contracted = np.einsum("pqqs->ps", g)
    for p, q in itertools.product(range(n), repeat=2):
        coefficient = h[p, q] - 0.5 * contracted[p, q]
        if coefficient != 0.0:
            H = H + coefficient * E[p][q]
        W = scipy.sparse.csr_matrix((dim, dim))
        for r, s in itertools.product(range(n), repeat=2):
            if g[p, q, r, s] != 0.0:
                W = W + g[p, q, r, s] * E[r][s]
        if W.nnz:
            H = H + 0.5 * (E[p][q] @ W)
    matrix = H.toarray()
    return QubitHamiltonian(0.5 * (matrix + matrix.T), sq.core_energy)


def number_operator(n_qubits: int) -> np.ndarray:
    """Total particle number, diagonal in the computational basis."""
    counts = np.array([bin(k).count("1") for k in range(1 << n_qubits)], dtype=float)
    return np.diag(counts)


def hartree_fock_bitstring(n_electrons: int, n_qubits: int) -> str:
    if not 0 <= n_electrons <= n_qubits:
        raise StateSpecError(f"{n_electrons} electrons do not fit in {n_qubits} spin orbitals")
    return "1" * n_electrons + "0" * (n_qubits - n_electrons)


def determinant_state(occupations: str) -> np.ndarray:
    """Computational basis vector for an occupation bitstring (qubit 0 leftmost)."""
    occupations = occupations.strip()
    if not occupations or set(occupations) - {"0", "1"}:
        raise StateSpecError(f"Invalid occupation bitstring {occupations!r}")
    state = np.zeros(1 << len(occupations), dtype=complex)
    state[int(occupations, 2)] = 1.0
    return state


def csf_state(terms: Sequence[tuple[complex, str]]) -> np.ndarray:
    """Normalized linear combination of determinants given as (coefficient, bitstring)."""
    if not terms:
        raise StateSpecError("Empty determinant combination")
    lengths = {len(bits.strip()) for _, bits in terms}
    if len(lengths) != 1:
        raise StateSpecError(f"Determinants of different lengths: {sorted(lengths)}")
    state = sum(complex(c) * determinant_state(bits) for c, bits in terms)
    norm = float(np.linalg.norm(state))
    if norm < 1e-12:
        raise StateSpecError("Determinant combination has zero norm")
    if abs(norm - 1.0) > 1e-12:
        logger.debug(f"Normalizing determinant combination (norm {norm:.6g})")
    return state / norm


def state_from_spec(
    n_qubits: int,
    n_electrons: Optional[int] = None,
    determinant: Optional[str] = None,
    csf: Optional[Sequence[Sequence]] = None,
) -> np.ndarray:
    """Input state from a determinant string, a CSF term list, or the HF default."""
    if determinant and csf:
        raise StateSpecError("Give either a determinant or a CSF, not both")
    if csf:
        state = csf_state([(complex(c), str(bits)) for c, bits in csf])
    elif determinant:
        state = determinant_state(determinant)
    else:
        if n_electrons is None:
            raise StateSpecError("Default Hartree-Fock state needs the electron count")
        state = determinant_state(hartree_fock_bitstring(n_electrons, n_qubits))
    if state.size != 1 << n_qubits:
        raise StateSpecError(
            f"State has {int(np.log2(state.size))} qubits, Hamiltonian has {n_qubits}"
        )
    return state
