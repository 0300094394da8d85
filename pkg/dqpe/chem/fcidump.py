"""
FCIDUMP import and export.

Header ` &FCI NORB=..,NELEC=..,MS2=.., ORBSYM=.., ISYM=.. &END` followed by
`value i j k l` records with 1-based indices in chemist notation: all four nonzero is a
two-electron integral, k = l = 0 a one-electron integral, all zero the core energy.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Union

import numpy as np

from dqpe.chem.hamiltonian import SecondQuantizedHamiltonian, canonical_quartets, eri_permutations
from dqpe.errors import FcidumpFormatError
from dqpe.logging_config import get_logger

logger = get_logger("chem.fcidump")

CONFLICT_TOL = 1e-12

_HEADER_END = re.compile(r"&END|^\s*/\s*$", re.IGNORECASE | re.MULTILINE)


def _header_int(header: str, key: str, required: bool = True, default: int = 0) -> int:
    match = re.search(rf"\b{key}\s*=\s*(-?\d+)", header, re.IGNORECASE)
    if match is None:
        if required:
            raise FcidumpFormatError(f"FCIDUMP header is missing {key}", key=key)
        return default
    return int(match.group(1))


def _store(table: dict, key: tuple, value: float, lineno: int) -> None:
    previous = table.get(key)
    if previous is not None and abs(previous - value) > CONFLICT_TOL * max(1.0, abs(value)):
        raise FcidumpFormatError(
            f"Conflicting duplicate record on line {lineno}",
            indices=list(key),
            previous=previous,
            value=value,
        )
    table[key] = value


def fcidump_read(path: Union[str, Path]) -> SecondQuantizedHamiltonian:
    """
    Parse an FCIDUMP file.

    Args:
        path: file location

    Returns:
        SecondQuantizedHamiltonian with symmetry-completed integrals and the core energy
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FcidumpFormatError(f"Failed to read FCIDUMP {path}: {exc}") from exc

    if "&FCI" not in text.upper():
        raise FcidumpFormatError("FCIDUMP header (&FCI) not found", path=str(path))
    end = _HEADER_END.search(text)
    if end is None:
        raise FcidumpFormatError("FCIDUMP header is not terminated", path=str(path))
    header = text[: end.start()]
    body = text[end.end():]

    norb = _header_int(header, "NORB")
    nelec = _header_int(header, "NELEC")
    ms2 = _header_int(header, "MS2", required=False)
    if norb < 1:
        raise FcidumpFormatError(f"NORB must be >= 1, got {norb}")

    one: dict[tuple, float] = {}
    two: dict[tuple, float] = {}
    core: dict[tuple, float] = {}
    first_line = text[: end.end()].count("\n") + 1
    for offset, line in enumerate(body.splitlines()):
        lineno = first_line + offset
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpFormatError(f"Malformed record on line {lineno}: {line!r}")
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise FcidumpFormatError(f"Malformed record on line {lineno}: {line!r}") from exc
        if any(not 0 <= idx <= norb for idx in (i, j, k, l)):
            raise FcidumpFormatError(
                f"Index out of range on line {lineno}", indices=[i, j, k, l], norb=norb
            )
        if i == j == k == l == 0:
            _store(core, (0, 0, 0, 0), value, lineno)
        elif k == 0 and l == 0 and i and j:
            _store(one, (max(i, j) - 1, min(i, j) - 1), value, lineno)
        elif i and j and k and l:
            _store(two, min(eri_permutations(i - 1, j - 1, k - 1, l - 1)), value, lineno)
        else:
            logger.debug(f"Ignoring orbital-energy record on line {lineno}")

    h = np.zeros((norb, norb))
    for (p, q), value in one.items():
        h[p, q] = h[q, p] = value
    g = np.zeros((norb,) * 4)
    for quartet, value in two.items():
        for perm in eri_permutations(*quartet):
            g[perm] = value
    logger.info(f"Read FCIDUMP {path}: NORB={norb} NELEC={nelec} MS2={ms2}")
    core_energy = core.get((0, 0, 0, 0), 0.0)
    return SecondQuantizedHamiltonian(h, g, core_energy=core_energy, n_electrons=nelec, ms2=ms2)


def fcidump_write(path: Union[str, Path], sq: SecondQuantizedHamiltonian) -> None:
    """Write the unique nonzero integrals; values use the shortest round-trip repr."""
    path = Path(path)
    n = sq.n_orbitals
    nelec = sq.n_electrons if sq.n_electrons is not None else 0
    lines = [
        f" &FCI NORB={n},NELEC={nelec},MS2={sq.ms2},",
        "  ORBSYM=" + "1," * n,
        "  ISYM=1,",
        " &END",
    ]
    for i, j, k, l in canonical_quartets(n):
        value = float(sq.two_body[i, j, k, l])
        if value != 0.0:
            lines.append(f"{value!r} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            value = float(sq.one_body[i, j])
            if value != 0.0:
                lines.append(f"{value!r} {i + 1} {j + 1} 0 0")
    lines.append(f"{float(sq.core_energy)!r} 0 0 0 0")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.debug(f"Wrote FCIDUMP {path}")
