"""
Analytic contracted-Gaussian integrals over 1s functions.

Overlap, kinetic, nuclear attraction and electron repulsion (chemist notation,
(pq|rs)) from closed-form primitive formulas and the Boys function F_0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, hyp1f1

from dqpe.chem.basis import ContractedGaussian, sto3g_basis
from dqpe.chem.geometry import Geometry
from dqpe.logging_config import get_logger

logger = get_logger("chem.integrals")

_BOYS_SERIES_BELOW = 1e-2


def boys_f0(x):
    """F_0(x) = 1F1(1/2; 3/2; -x), switching to the erf form away from zero."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x < _BOYS_SERIES_BELOW, 1.0, x)
    large = 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe))
    return np.where(x < _BOYS_SERIES_BELOW, hyp1f1(0.5, 1.5, -x), large)


@dataclass(frozen=True)
class AOIntegrals:
    """Atomic-orbital integrals in hartree; eri in chemist notation (pq|rs)."""

    overlap: np.ndarray
    kinetic: np.ndarray
    nuclear: np.ndarray
    eri: np.ndarray

    @property
    def core(self) -> np.ndarray:
        return self.kinetic + self.nuclear

    @property
    def n_basis(self) -> int:
        return self.overlap.shape[0]


def _flatten(basis: list[ContractedGaussian]):
    alpha = np.concatenate([bf.exponents for bf in basis])
    centers = np.concatenate([np.tile(bf.center, (len(bf.exponents), 1)) for bf in basis])
    contraction = np.zeros((len(basis), alpha.size))
    start = 0
    for i, bf in enumerate(basis):
        stop = start + len(bf.exponents)
        contraction[i, start:stop] = bf.coefficients
        start = stop
    return alpha, centers, contraction


def sto3g_integrals(geom: Geometry) -> AOIntegrals:
    """
    STO-3G integrals for an s-orbital molecule.

    Args:
        geom: geometry of H/He atoms

    Returns:
        AOIntegrals (S, T, V, ERI) in the AO basis
    """
    alpha, A, C = _flatten(sto3g_basis(geom))

    p = alpha[:, None] + alpha[None, :]
    mu = alpha[:, None] * alpha[None, :] / p
    diff = A[:, None, :] - A[None, :, :]
    r2 = np.sum(diff**2, axis=-1)
    K = np.exp(-mu * r2)
    P = (alpha[:, None, None] * A[:, None, :] + alpha[None, :, None] * A[None, :, :]) / p[..., None]

    s_prim = (np.pi / p) ** 1.5 * K
    t_prim = mu * (3.0 - 2.0 * mu * r2) * s_prim

    v_prim = np.zeros_like(s_prim)
    for Z, center in zip(geom.atomic_numbers, geom.bohr):
        pc2 = np.sum((P - center) ** 2, axis=-1)
        v_prim -= Z * 2.0 * np.pi / p * K * boys_f0(p * pc2)

    pq = p[:, :, None, None] * p[None, None, :, :]
    psum = p[:, :, None, None] + p[None, None, :, :]
    PQ2 = np.sum((P[:, :, None, None, :] - P[None, None, :, :, :]) ** 2, axis=-1)
    eri_prim = (
        2.0 * np.pi**2.5 / (pq * np.sqrt(psum))
        * K[:, :, None, None] * K[None, None, :, :]
        * boys_f0(pq / psum * PQ2)
    )

    overlap = C @ s_prim @ C.T
    kinetic = C @ t_prim @ C.T
    nuclear = C @ v_prim @ C.T
    eri = np.einsum("ia,jb,kc,ld,abcd->ijkl", C, C, C, C, eri_prim, optimize=True)
    logger.debug(f"STO-3G integrals for {geom.n_atoms} atoms ({C.shape[0]} functions)")
    return AOIntegrals(overlap=overlap, kinetic=kinetic, nuclear=nuclear, eri=eri)
