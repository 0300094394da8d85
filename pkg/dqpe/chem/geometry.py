"""
Molecular geometries.

Coordinates are held in Å (the CLI and file boundary unit) and converted to bohr for
integral evaluation. XYZ import/export, bond lengths, nuclear repulsion with its
analytic gradient, and the rigid-body (translation/rotation) basis used to project
optimizer gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import scipy.linalg
from scipy.constants import physical_constants

from dqpe.errors import GeometryError, UnsupportedElementError
from dqpe.logging_config import get_logger

logger = get_logger("chem.geometry")

BOHR_IN_ANGSTROM = physical_constants["Bohr radius"][0] * 1e10
MIN_SEPARATION_BOHR = 1e-6

ATOMIC_NUMBERS = {"H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9}


def _normalize_symbol(symbol: str) -> str:
    symbol = symbol.strip()
    return symbol[:1].upper() + symbol[1:].lower()


@dataclass(frozen=True)
class Geometry:
    """Atoms, Cartesian coordinates in Å, net charge and spin multiplicity."""

    symbols: tuple[str, ...]
    coordinates: np.ndarray = field(repr=False)
    charge: int = 0
    multiplicity: int = 1

    def __post_init__(self) -> None:
        symbols = tuple(_normalize_symbol(s) for s in self.symbols)
        coords = np.asarray(self.coordinates, dtype=float).reshape(-1, 3)
        if not symbols:
            raise GeometryError("Geometry needs at least one atom")
        if coords.shape[0] != len(symbols):
            raise GeometryError(
                f"{len(symbols)} symbols but {coords.shape[0]} coordinate rows"
            )
        for symbol in symbols:
            if symbol not in ATOMIC_NUMBERS:
                raise UnsupportedElementError(f"Unknown element symbol {symbol!r}", symbol=symbol)
        if self.multiplicity < 1:
            raise GeometryError(f"Multiplicity must be >= 1, got {self.multiplicity}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "coordinates", coords)

        bohr = coords / BOHR_IN_ANGSTROM
        for i in range(len(symbols)):
            for j in range(i):
                if np.linalg.norm(bohr[i] - bohr[j]) < MIN_SEPARATION_BOHR:
                    raise GeometryError(f"Atoms {j} and {i} coincide", atoms=[j, i])
        if self.n_electrons < 0:
            raise GeometryError(f"Charge {self.charge} leaves a negative electron count")

    @property
    def n_atoms(self) -> int:
        return len(self.symbols)

    @property
    def atomic_numbers(self) -> np.ndarray:
        return np.array([ATOMIC_NUMBERS[s] for s in self.symbols], dtype=float)

    @property
    def n_electrons(self) -> int:
        return int(self.atomic_numbers.sum()) - int(self.charge)

    @property
    def bohr(self) -> np.ndarray:
        return self.coordinates / BOHR_IN_ANGSTROM

    @property
    def flat(self) -> np.ndarray:
        """Parameter vector x (Å), atom-major."""
        return self.coordinates.ravel().copy()

    def with_coordinates(self, x: np.ndarray) -> Geometry:
        return Geometry(self.symbols, np.asarray(x, dtype=float).reshape(-1, 3), self.charge, self.multiplicity)

    def bond_lengths(self) -> dict[tuple[int, int], float]:
        """Every pairwise distance in Å keyed by (i, j), i < j."""
        lengths = {}
        for i in range(self.n_atoms):
            for j in range(i + 1, self.n_atoms):
                lengths[(i, j)] = float(np.linalg.norm(self.coordinates[i] - self.coordinates[j]))
        return lengths

    def bond_spread(self) -> float:
        values = list(self.bond_lengths().values())
        return max(values) - min(values) if values else 0.0

    def rigid_body_basis(self) -> np.ndarray:
        """Orthonormal columns spanning rigid translations and rotations of x."""
        coords = self.coordinates
        centered = coords - coords.mean(axis=0)
        vectors = []
        for axis in np.eye(3):
            vectors.append(np.tile(axis, self.n_atoms))
        for axis in np.eye(3):
            vectors.append(np.cross(axis, centered).ravel())
        return scipy.linalg.orth(np.column_stack(vectors), rcond=1e-10)

    def project_internal(self, gradient: np.ndarray) -> np.ndarray:
        """Remove rigid-body components from a gradient over x."""
        basis = self.rigid_body_basis()
        gradient = np.asarray(gradient, dtype=float)
        return gradient - basis @ (basis.T @ gradient)

    @classmethod
    def from_xyz(cls, source: Union[str, Path], charge: int = 0, multiplicity: int = 1) -> Geometry:
        """
        Parse XYZ text (or a file path): atom count, comment line, then symbol x y z rows in Å.

        A multi-frame file yields its last frame.
        """
        if isinstance(source, Path):
            text = source.read_text()
        elif "\n" in source:
            text = source
        else:
            text = Path(source).read_text()
        frames = list(_iter_xyz_frames(text.splitlines()))
        if not frames:
            raise GeometryError("No XYZ frame found")
        symbols, coords = frames[-1]
        return cls(tuple(symbols), np.array(coords), charge=charge, multiplicity=multiplicity)

    def to_xyz(self, comment: str = "") -> str:
        lines = [str(self.n_atoms), comment.replace("\n", " ")]
        for symbol, (x, y, z) in zip(self.symbols, self.coordinates):
            lines.append(f"{symbol:<2s} {x:18.12f} {y:18.12f} {z:18.12f}")
        return "\n".join(lines) + "\n"


def _iter_xyz_frames(lines: list[str]) -> Iterable[tuple[list[str], list[list[float]]]]:
    pos = 0
    while pos < len(lines):
        head = lines[pos].strip()
        if not head:
            pos += 1
            continue
        try:
            count = int(head)
        except ValueError as exc:
            raise GeometryError(f"Bad XYZ atom count on line {pos + 1}: {head!r}") from exc
        body = lines[pos + 2:pos + 2 + count]
        if len(body) != count:
            raise GeometryError(f"XYZ frame at line {pos + 1} is truncated")
        symbols, coords = [], []
        for offset, row in enumerate(body):
            parts = row.split()
            if len(parts) < 4:
                raise GeometryError(f"Bad XYZ row on line {pos + 3 + offset}: {row!r}")
            symbols.append(parts[0])
            try:
                coords.append([float(v) for v in parts[1:4]])
            except ValueError as exc:
                raise GeometryError(f"Bad XYZ coordinate on line {pos + 3 + offset}") from exc
        yield symbols, coords
        pos += 2 + count


def nuclear_repulsion(geom: Geometry) -> float:
    """Sum of Z_i Z_j / r_ij in hartree."""
    Z = geom.atomic_numbers
    R = geom.bohr
    energy = 0.0
    for i in range(geom.n_atoms):
        for j in range(i):
            energy += Z[i] * Z[j] / np.linalg.norm(R[i] - R[j])
    return float(energy)


def nuclear_repulsion_gradient(geom: Geometry) -> np.ndarray:
    """Analytic gradient of the nuclear repulsion over x, hartree/Å."""
    Z = geom.atomic_numbers
    R = geom.bohr
    grad = np.zeros_like(R)
    for i in range(geom.n_atoms):
        for j in range(geom.n_atoms):
            if i == j:
                continue
            diff = R[i] - R[j]
            grad[i] -= Z[i] * Z[j] * diff / np.linalg.norm(diff) ** 3
    return grad.ravel() / BOHR_IN_ANGSTROM


def h2(bond: float = 0.74) -> Geometry:
    return Geometry(("H", "H"), np.array([[0.0, 0.0, 0.0], [0.0, 0.0, bond]]))


def h3_plus_ground_start(side: float = 0.99, stretch: float = 0.05) -> Geometry:
    """Isosceles H3+ with one bond stretched by `stretch` Å from the equilateral guess."""
    base = side + stretch
    height = np.sqrt(side**2 - (base / 2.0) ** 2)
    coords = np.array([
        [-base / 2.0, 0.0, 0.0],
        [base / 2.0, 0.0, 0.0],
        [0.0, height, 0.0],
    ])
    return Geometry(("H", "H", "H"), coords, charge=1)


def h3_plus_triplet_start(first: float = 0.90, second: float = 1.00) -> Geometry:
    """Linear asymmetric H3+ for the lowest triplet."""
    coords = np.array([[0.0, 0.0, 0.0], [first, 0.0, 0.0], [first + second, 0.0, 0.0]])
    return Geometry(("H", "H", "H"), coords, charge=1, multiplicity=3)


BUILTIN_GEOMETRIES = {
    "h2": h2,
    "h3+": h3_plus_ground_start,
    "h3+-triplet": h3_plus_triplet_start,
}


def builtin_geometry(name: str) -> Geometry:
    try:
        return BUILTIN_GEOMETRIES[name]()
    except KeyError:
        raise GeometryError(
            f"Unknown built-in molecule {name!r}", known=sorted(BUILTIN_GEOMETRIES)
        ) from None


def load_geometry(path: Optional[Union[str, Path]], name: Optional[str], charge: int = 0,
                  multiplicity: int = 1) -> Geometry:
    """Geometry from an XYZ file when a path is given, otherwise a shipped start."""
    if path:
        path = Path(path)
        if not path.exists():
            raise GeometryError(f"Geometry file not found: {path}")
        logger.info(f"Loading geometry from {path}")
        return Geometry.from_xyz(path, charge=charge, multiplicity=multiplicity)
    return builtin_geometry(name or "h3+")
