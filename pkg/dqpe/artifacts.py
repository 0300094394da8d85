"""
Run directories for dqpe.

Every subcommand writes into one output directory: CSV tables, JSON documents with a
format version, multi-frame XYZ snapshots, the resolved configuration and, on
failure, the machine-readable error.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from dqpe.chem.geometry import Geometry
from dqpe.errors import DqpeError, InputError, _jsonable
from dqpe.logging_config import get_logger

logger = get_logger("artifacts")

FORMAT_VERSION = 1


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return _jsonable(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _cell(value: Any) -> Any:
    if isinstance(value, (np.generic,)):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return str(value).lower()
    return value


class RunDirectory:
    """Owns one output directory and writes every artifact of a run into it."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        try:
            self.path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            logger.error(f"Failed to create output directory {self.path}: {exc}")
            raise InputError(f"Cannot create output directory {self.path}: {exc}") from exc

    def file(self, name: str) -> Path:
        return self.path / name

    def write_csv(
        self,
        name: str,
        rows: Iterable[dict],
        columns: Optional[Sequence[str]] = None,
    ) -> Path:
        """
        Write records as a CSV table with a header row.

        Args:
            name: file name inside the run directory
            rows: dict records; missing keys are left empty
            columns: column order; defaults to the union of keys in first-seen order

        Returns:
            Path of the written file
        """
        rows = list(rows)
        if columns is None:
            columns = []
            for row in rows:
                columns.extend(key for key in row if key not in columns)
        target = self.file(name)
        try:
            with open(target, "w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="raise")
                writer.writeheader()
                for row in rows:
                    writer.writerow({key: _cell(value) for key, value in row.items()})
        except OSError as exc:
            logger.error(f"Failed to write {target}: {exc}")
            raise InputError(f"Cannot write {target}: {exc}", path=str(target)) from exc
        logger.info(f"Wrote {len(rows)} rows to {target}")
        return target

    def read_csv(self, name: str) -> list[dict]:
        with open(self.file(name), newline="") as f:
            return list(csv.DictReader(f))

    def write_json(self, name: str, data: dict) -> Path:
        """Write a JSON document (indent 2) carrying the artifact format version."""
        target = self.file(name)
        document = {"version": FORMAT_VERSION, **data}
        try:
            with open(target, "w") as f:
                json.dump(document, f, indent=2, default=_json_default)
        except OSError as exc:
            logger.error(f"Failed to write {target}: {exc}")
            raise InputError(f"Cannot write {target}: {exc}", path=str(target)) from exc
        logger.info(f"Wrote {target}")
        return target

    def read_json(self, name: str) -> dict:
        with open(self.file(name), "r") as f:
            return json.load(f)

    def write_xyz_frames(self, name: str, frames: Iterable[tuple[Geometry, str]]) -> Path:
        """Multi-frame XYZ: one block per (geometry, comment)."""
        target = self.file(name)
        blocks = [geometry.to_xyz(comment) for geometry, comment in frames]
        try:
            with open(target, "w") as f:
                f.write("".join(block if block.endswith("\n") else block + "\n" for block in blocks))
        except OSError as exc:
            logger.error(f"Failed to write {target}: {exc}")
            raise InputError(f"Cannot write {target}: {exc}", path=str(target)) from exc
        logger.info(f"Wrote {len(blocks)} geometry frames to {target}")
        return target

    def write_config(self, resolved: dict) -> Path:
        return self.write_json("config.json", resolved)

    def write_error(self, exc: DqpeError) -> Path:
        return self.write_json("error.json", exc.to_dict())
