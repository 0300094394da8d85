"""
Phase estimators over a parent distribution.

Majority rule, the single-eigenstate circular moment, its expectation-value reading,
and the smooth generalized circular estimator (GCE): tempered softmax, circular peak
location, tanh boxcar window, windowed circular average. Every GCE stage is smooth in
the distribution entries and gce_phase_gradient gives the analytic gradient of the
mean direction with respect to them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from dqpe.core.qpe import ParentDistribution, ReadoutGrid, circular_offset
from dqpe.errors import ConfigError, EstimatorError
from dqpe.logging_config import get_logger

logger = get_logger("core.estimator")

MAGNITUDE_FLOOR = 1e-12
MAX_STEEPNESS = 5000.0
DEFAULT_TEMPERATURE = 0.0035
DEFAULT_STEEPNESS = 1000.0
DEFAULT_WINDOW_STRINGS = 8


@dataclass(frozen=True)
class GceConfig:
    """Smoothing hyperparameters of the GCE."""

    temperature: float = DEFAULT_TEMPERATURE
    steepness: float = DEFAULT_STEEPNESS  # boxcar k
    half_width: float = DEFAULT_WINDOW_STRINGS / 2**13  # phase units
    window_strings: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ConfigError(f"Softmax temperature must be positive, got {self.temperature}")
        if not self.steepness > 0:
            raise ConfigError(f"Boxcar steepness must be positive, got {self.steepness}")
        if self.steepness > MAX_STEEPNESS:
            raise ConfigError(
                f"Boxcar steepness {self.steepness} above {MAX_STEEPNESS} is numerically unstable"
            )
        if not 0.0 < self.half_width <= 0.5:
            raise ConfigError(f"Window half-width must lie in (0, 0.5], got {self.half_width}")
        if self.steepness * self.half_width < 3.0:
            logger.debug(
                f"Boxcar is soft (steepness*h = {self.steepness * self.half_width:.3g} < 3)"
            )

    @classmethod
    def for_register(
        cls,
        t: int,
        temperature: float = DEFAULT_TEMPERATURE,
        steepness: float = DEFAULT_STEEPNESS,
        window_strings: Optional[float] = DEFAULT_WINDOW_STRINGS,
        half_width: Optional[float] = None,
    ) -> GceConfig:
        """Resolve h = window_strings / 2^t unless half_width is given explicitly."""
        if half_width is None:
            if window_strings is None:
                raise ConfigError("Either window_strings or half_width is required")
            half_width = min(float(window_strings) / 2**t, 0.5)
        return cls(
            temperature=float(temperature),
            steepness=float(steepness),
            half_width=float(half_width),
            window_strings=window_strings,
        )

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "steepness": self.steepness,
            "half_width": self.half_width,
            "window_strings": self.window_strings,
        }


@dataclass(frozen=True)
class TrigMoment:
    """First trigonometric moment and its mean direction."""

    value: complex
    magnitude: float
    mean_direction: float
    estimator_name: str = "gce"

    @classmethod
    def from_value(cls, value: complex, estimator_name: str) -> TrigMoment:
        magnitude = abs(value)
        if magnitude < MAGNITUDE_FLOOR:
            raise EstimatorError(
                f"Resultant magnitude {magnitude:.3e} too small for a mean direction",
                estimator=estimator_name,
            )
        mu = float(np.mod(np.angle(value) / (2.0 * np.pi), 1.0))
        return cls(complex(value), float(magnitude), mu, estimator_name)

    def to_dict(self) -> dict:
        return {
            "theta_re": self.value.real,
            "theta_im": self.value.imag,
            "magnitude": self.magnitude,
            "mu": self.mean_direction,
            "estimator_name": self.estimator_name,
        }


def _unit_phasors(grid: ReadoutGrid) -> np.ndarray:
    return np.exp(2j * np.pi * grid.values)


def majority_rule(dist: ParentDistribution) -> float:
    """Grid phase of the most probable bitstring; ties go to the lowest index."""
    return int(np.argmax(dist.probabilities)) / dist.grid.size


def cruz_moment(dist: ParentDistribution) -> TrigMoment:
    """Circular mean over the whole grid, read as a single-eigenstate phase."""
    theta = np.sum(dist.probabilities * _unit_phasors(dist.grid))
    return TrigMoment.from_value(theta, "cruz")


def expectation_moment(dist: ParentDistribution) -> TrigMoment:
    """Circular mean over a multi-peak distribution, read as a phase-mapped expectation value."""
    theta = np.sum(dist.probabilities * _unit_phasors(dist.grid))
    return TrigMoment.from_value(theta, "expectation")


def _softmax(p: np.ndarray, temperature: float) -> np.ndarray:
    z = np.exp((p - p.max()) / temperature)
    return z / z.sum()


def tempered_softmax(dist: ParentDistribution, temperature: float) -> ParentDistribution:
    """exp(P/T) normalized; one-hot at argmax as T -> 0, uniform as T -> infinity."""
    if not temperature > 0:
        raise ConfigError(f"Softmax temperature must be positive, got {temperature}")
    return ParentDistribution(_softmax(dist.probabilities, temperature), dist.grid)


def _circular_mean(weights: np.ndarray, grid: ReadoutGrid) -> tuple[float, complex]:
    z = np.sum(weights * _unit_phasors(grid))
    if abs(z) < MAGNITUDE_FLOOR:
        raise EstimatorError(f"Peak direction undefined (|z| = {abs(z):.3e})")
    return float(np.mod(np.angle(z) / (2.0 * np.pi), 1.0)), z


def peak_location(softened: ParentDistribution) -> float:
    """Circular weighted mean of the softened distribution."""
    center, _ = _circular_mean(softened.probabilities, softened.grid)
    return center


def _log_cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def boxcar(phase, center: float, config: GceConfig):
    """
    Smooth window 1/2 [tanh(k(d + h)) - tanh(k(d - h))] at circular distance d from center.

    Evaluated as sinh(2kh) / (2 cosh(k(d+h)) cosh(k(d-h))) in log space so the tails
    stay positive until they underflow.
    """
    k, h = config.steepness, config.half_width
    d = circular_offset(np.asarray(phase, dtype=float) - center)
    a = k * (d + h)
    b = k * (d - h)
    two_kh = 2.0 * k * h
    log_sinh = two_kh + np.log1p(-np.exp(-2.0 * two_kh)) - np.log(2.0)
    weight = np.exp(log_sinh - _log_cosh(a) - _log_cosh(b) - np.log(2.0))
    return float(weight) if np.ndim(weight) == 0 else weight


def _boxcar_center_derivative(weights: np.ndarray, phase: np.ndarray, center: float,
                              config: GceConfig) -> np.ndarray:
    k, h = config.steepness, config.half_width
    d = circular_offset(phase - center)
    return k * weights * (np.tanh(k * (d + h)) + np.tanh(k * (d - h)))


def gce_moment(dist: ParentDistribution, config: GceConfig) -> TrigMoment:
    """
    Generalized circular estimator.

    Args:
        dist: parent (or empirical) distribution
        config: temperature, steepness and half-width

    Returns:
        TrigMoment of the boxcar-weighted circular sum
    """
    p = dist.probabilities
    grid = dist.grid
    center, _ = _circular_mean(_softmax(p, config.temperature), grid)
    weights = boxcar(grid.values, center, config)
    theta = np.sum(weights * p * _unit_phasors(grid))
    return TrigMoment.from_value(theta, "gce")


def gce_phase_gradient(dist: ParentDistribution, config: GceConfig) -> np.ndarray:
    """
    Analytic gradient of the GCE mean direction with respect to each P(j).

    Chains the complex-argument derivative through the boxcar (via its center) and the
    circular softmax peak location.
    """
    p = dist.probabilities
    grid = dist.grid
    phasors = _unit_phasors(grid)
    T = config.temperature

    s = _softmax(p, T)
    center, z = _circular_mean(s, grid)
    weights = boxcar(grid.values, center, config)
    theta = np.sum(weights * p * phasors)
    if abs(theta) < MAGNITUDE_FLOOR:
        raise EstimatorError(f"GCE magnitude underflow (|theta| = {abs(theta):.3e})")

    # d(center)/dP_j = S_j g_j / T; the softmax mean term vanishes since sum S g = 0
    g = np.imag(np.conj(z) * phasors) / (2.0 * np.pi * abs(z) ** 2)
    dcenter = s * g / T
    dweights_dcenter = _boxcar_center_derivative(weights, grid.values, center, config)
    shift = np.sum(p * phasors * dweights_dcenter)

    dtheta = weights * phasors + dcenter * shift
    return np.imag(np.conj(theta) * dtheta) / (2.0 * np.pi * abs(theta) ** 2)


def estimate(dist: ParentDistribution, name: str, config: Optional[GceConfig] = None) -> TrigMoment:
    """Dispatch to an estimator by name (gce, majority, expectation, cruz)."""
    if name == "gce":
        if config is None:
            config = GceConfig.for_register(dist.grid.t)
        return gce_moment(dist, config)
    if name == "majority":
        phi = majority_rule(dist)
        return TrigMoment(complex(np.exp(2j * np.pi * phi)), 1.0, phi, "majority")
    if name == "expectation":
        return expectation_moment(dist)
    if name == "cruz":
        return cruz_moment(dist)
    raise ConfigError(f"Unknown estimator: {name}")
