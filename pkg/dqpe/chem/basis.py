"""
STO-3G contraction data for the s-orbital elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dqpe.chem.geometry import Geometry
from dqpe.errors import UnsupportedElementError

STO3G_COEFFICIENTS = (0.15432897, 0.53532814, 0.44463454)

# 1s exponents already scaled by the Slater zeta (H 1.24, He 2.0925)
STO3G_EXPONENTS = {
    "H": (3.42525091, 0.62391373, 0.16885540),
    "He": (6.36242139, 1.15892300, 0.31364979),
}


@dataclass(frozen=True)
class ContractedGaussian:
    """Normalized contracted 1s Gaussian centred on an atom (bohr)."""

    center: np.ndarray
    exponents: np.ndarray
    coefficients: np.ndarray  # primitive normalization folded in
    atom: int


def _primitive_norm(alpha: np.ndarray) -> np.ndarray:
    return (2.0 * alpha / np.pi) ** 0.75


def sto3g_basis(geom: Geometry) -> list[ContractedGaussian]:
    """One contracted 1s function per atom; elements needing p shells are rejected."""
    basis = []
    for atom, (symbol, center) in enumerate(zip(geom.symbols, geom.bohr)):
        if symbol not in STO3G_EXPONENTS:
            raise UnsupportedElementError(
                f"Element {symbol} needs p orbitals; provide integrals through an FCIDUMP file",
                symbol=symbol,
            )
        alpha = np.array(STO3G_EXPONENTS[symbol])
        coeffs = np.array(STO3G_COEFFICIENTS) * _primitive_norm(alpha)
        pair = alpha[:, None] + alpha[None, :]
        self_overlap = coeffs @ ((np.pi / pair) ** 1.5) @ coeffs
        coeffs = coeffs / np.sqrt(self_overlap)
        basis.append(ContractedGaussian(center.copy(), alpha, coeffs, atom))
    return basis
