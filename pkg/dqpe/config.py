"""
Run configuration for dqpe.

Handles loading/saving the JSON run configuration and validating it before a
subcommand executes. The resolved configuration is written beside every run's
outputs so the run can be repeated.
"""

from __future__ import annotations

import copy
import json
import platform
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy

from dqpe import __version__
from dqpe.core.estimator import GceConfig
from dqpe.errors import ConfigError
from dqpe.logging_config import get_logger

logger = get_logger("config")

ESTIMATORS = ("gce", "majority", "expectation", "cruz")
SOURCES = ("builtin", "xyz", "fcidump", "synthetic")
BUILTIN_MOLECULES = ("h2", "h3+", "h3+-triplet")
OPTIMIZERS = ("gd", "bfgs")
QPE_METHODS = ("spectral", "circuit")


class RunConfig:
    """
    Run configuration with JSON persistence and schema validation.
    """

    DEFAULT_CONFIG = {
        "run": {
            "output_dir": "runs/latest",
            "seed": 20240101,
            "workers": 1,  # thread pool size for reproduce sweeps
        },
        "qpe": {
            "t": 13,  # readout qubits
            "margin": 0.05,  # phase-map guard band
            "method": "spectral",  # spectral | circuit
        },
        "estimator": {
            "name": "gce",
            "temperature": 0.0035,
            "steepness": 1000.0,
            "window_strings": 8,  # h = window_strings / 2^t
            "half_width": None,  # overrides window_strings when set
        },
        "sampling": {
            "shots": 0,  # 0 = exact parent distribution
        },
        "system": {
            "source": "builtin",
            "molecule": "h3+",
            "path": None,  # XYZ or FCIDUMP file
            "charge": None,  # None = molecule default
            "phases": None,  # synthetic source only
            "weights": None,
        },
        "state": {
            "determinant": None,  # None = molecule default
            "csf": None,  # [[weight, bitstring], ...]
        },
        "gradient": {
            "fd_order": 1,  # stencil m, degree 2m
            "fd_step": 1e-5,  # angstrom
            "derivative_step": 1e-5,  # angstrom, dH/dR central difference
        },
        "optimizer": {
            "method": "gd",
            "step": 0.3,  # angstrom^2 / hartree
            "tol": 1e-4,  # hartree / angstrom
            "max_iter": 200,
        },
        "stats": {
            "epsilon": 1e-3,  # phase units
            "gate_count": 100,
            "n_params": 9,
            "overlap": 1.0,
            "delta_phi": 0.0,
        },
    }

    def __init__(self, config_path: Optional[Path] = None) -> None:
        """
        Initialize configuration.

        Args:
            config_path: JSON file to merge over the defaults. If None, defaults only.
        """
        self.config_path = Path(config_path) if config_path is not None else None
        self._data: dict[str, Any] = copy.deepcopy(self.DEFAULT_CONFIG)
        if self.config_path is not None:
            self.load()

    def load(self) -> None:
        """Load configuration from file; a missing or malformed file is a ConfigError."""
        if self.config_path is None or not self.config_path.exists():
            raise ConfigError(f"Config file not found: {self.config_path}", path=str(self.config_path))
        try:
            with open(self.config_path, "r") as f:
                loaded = json.load(f)
        except (json.JSONDecodeError, OSError) as exc:
            logger.error(f"Failed to load config from {self.config_path}: {exc}")
            raise ConfigError(f"Unreadable config file {self.config_path}: {exc}") from exc

        if not isinstance(loaded, dict):
            raise ConfigError(
                f"Invalid config format: expected dict, got {type(loaded).__name__}"
            )
        # run directories echo the format version and library versions beside the sections
        loaded = {k: v for k, v in loaded.items() if k not in ("version", "versions")}
        self._data = self._merge_defaults(loaded)
        logger.debug(f"Loaded config from {self.config_path}")

    def _merge_defaults(self, loaded: dict[str, Any]) -> dict[str, Any]:
        """Merge loaded config with defaults; unknown sections or keys are rejected."""
        result = copy.deepcopy(self.DEFAULT_CONFIG)
        for section_key, section_values in loaded.items():
            if section_key not in self.DEFAULT_CONFIG:
                raise ConfigError(f"Unknown config section: {section_key}")
            if not isinstance(section_values, dict):
                raise ConfigError(
                    f"Invalid section {section_key}: expected dict, got {type(section_values).__name__}"
                )
            unknown = set(section_values) - set(self.DEFAULT_CONFIG[section_key])
            if unknown:
                raise ConfigError(
                    f"Unknown keys in section {section_key}: {sorted(unknown)}"
                )
            result[section_key].update(section_values)
        return result

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Get a configuration value."""
        return self._data.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any) -> None:
        """Set a configuration value."""
        if section not in self.DEFAULT_CONFIG or key not in self.DEFAULT_CONFIG[section]:
            raise ConfigError(f"Unknown config key: {section}.{key}")
        self._data[section][key] = value

    def get_section(self, section: str) -> dict[str, Any]:
        """Get an entire configuration section."""
        return copy.deepcopy(self._data.get(section, {}))

    def validate(self) -> None:
        """Check the whole schema; raises ConfigError on the first violation."""
        _check_int(self, "qpe", "t", 1, 24)
        _check_float(self, "qpe", "margin", 0.0, 0.25, lo_open=True, hi_open=True)
        _check_choice(self, "qpe", "method", QPE_METHODS)
        _check_choice(self, "estimator", "name", ESTIMATORS)
        _check_float(self, "estimator", "temperature", 0.0, None, lo_open=True)
        _check_float(self, "estimator", "steepness", 0.0, 5000.0, lo_open=True)
        if self.get("estimator", "half_width") is None:
            _check_float(self, "estimator", "window_strings", 0.0, None, lo_open=True)
        else:
            _check_float(self, "estimator", "half_width", 0.0, 0.5, lo_open=True)
        _check_int(self, "sampling", "shots", 0, None)
        _check_int(self, "run", "seed", 0, None)
        _check_int(self, "run", "workers", 1, None)
        _check_choice(self, "system", "source", SOURCES)
        if self.system_source == "builtin":
            _check_choice(self, "system", "molecule", BUILTIN_MOLECULES)
        if self.system_source in ("xyz", "fcidump") and not self.get("system", "path"):
            raise ConfigError(f"system.path is required for source {self.system_source}")
        if self.system_source == "synthetic":
            phases = self.get("system", "phases")
            if not phases:
                raise ConfigError("system.phases is required for the synthetic source")
            weights = self.get("system", "weights")
            if weights is not None and len(weights) != len(phases):
                raise ConfigError("system.weights must match system.phases in length")
        _check_int(self, "gradient", "fd_order", 1, None)
        _check_float(self, "gradient", "fd_step", 0.0, None, lo_open=True)
        _check_float(self, "gradient", "derivative_step", 0.0, None, lo_open=True)
        _check_choice(self, "optimizer", "method", OPTIMIZERS)
        _check_float(self, "optimizer", "step", 0.0, None, lo_open=True)
        _check_float(self, "optimizer", "tol", 0.0, None, lo_open=True)
        _check_int(self, "optimizer", "max_iter", 1, None)
        _check_float(self, "stats", "epsilon", 0.0, None, lo_open=True)
        _check_int(self, "stats", "gate_count", 1, None)
        _check_int(self, "stats", "n_params", 1, None)
        _check_float(self, "stats", "overlap", 0.0, 1.0)

    def resolved(self) -> dict[str, Any]:
        """Merged configuration plus the library versions, as written beside outputs."""
        data = copy.deepcopy(self._data)
        data["versions"] = {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "dqpe": __version__,
        }
        return data

    def gce_config(self, t: Optional[int] = None, window_strings: Optional[float] = None) -> GceConfig:
        """GCE hyperparameters resolved for a register of t qubits (default qpe.t)."""
        section = self._data["estimator"]
        return GceConfig.for_register(
            self.t if t is None else t,
            temperature=section["temperature"],
            steepness=section["steepness"],
            window_strings=section["window_strings"] if window_strings is None else window_strings,
            half_width=section["half_width"] if window_strings is None else None,
        )

    @property
    def t(self) -> int:
        return self.get("qpe", "t", 13)

    @t.setter
    def t(self, value: int) -> None:
        if int(value) != value or not 1 <= value <= 24:
            raise ConfigError(f"Invalid readout size t: {value}")
        self.set("qpe", "t", int(value))

    @property
    def margin(self) -> float:
        return self.get("qpe", "margin", 0.05)

    @property
    def qpe_method(self) -> str:
        return self.get("qpe", "method", "spectral")

    @property
    def shots(self) -> int:
        return self.get("sampling", "shots", 0)

    @shots.setter
    def shots(self, value: int) -> None:
        if int(value) != value or value < 0:
            raise ConfigError(f"Invalid shot count: {value}")
        self.set("sampling", "shots", int(value))

    @property
    def seed(self) -> int:
        return self.get("run", "seed", 20240101)

    @seed.setter
    def seed(self, value: int) -> None:
        if int(value) != value or value < 0:
            raise ConfigError(f"Invalid seed: {value}")
        self.set("run", "seed", int(value))

    @property
    def estimator_name(self) -> str:
        """Get estimator name (gce, majority, expectation, cruz)."""
        return self.get("estimator", "name", "gce")

    @estimator_name.setter
    def estimator_name(self, value: str) -> None:
        """Set estimator name."""
        if value not in ESTIMATORS:
            raise ConfigError(f"Invalid estimator: {value}")
        self.set("estimator", "name", value)

    @property
    def output_dir(self) -> Path:
        return Path(self.get("run", "output_dir", "runs/latest"))

    @property
    def workers(self) -> int:
        return self.get("run", "workers", 1)

    @property
    def system_source(self) -> str:
        return self.get("system", "source", "builtin")


def _check_choice(config: RunConfig, section: str, key: str, choices: tuple[str, ...]) -> None:
    value = config.get(section, key)
    if value not in choices:
        raise ConfigError(f"{section}.{key} must be one of {list(choices)}, got {value!r}")


def _check_int(config: RunConfig, section: str, key: str, lo: int, hi: Optional[int]) -> None:
    value = config.get(section, key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    if value < lo or (hi is not None and value > hi):
        raise ConfigError(f"{section}.{key} out of range [{lo}, {hi}]: {value}")


def _check_float(
    config: RunConfig,
    section: str,
    key: str,
    lo: float,
    hi: Optional[float],
    lo_open: bool = False,
    hi_open: bool = False,
) -> None:
    value = config.get(section, key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    below = value <= lo if lo_open else value < lo
    above = hi is not None and (value >= hi if hi_open else value > hi)
    if below or above:
        raise ConfigError(f"{section}.{key} out of range: {value}")
