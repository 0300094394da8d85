"""
Closed-form GCE statistics and cost calculators.

The windowed moment in the continuum limit (closed form and quadrature), its bias
term, variances of the moment and of the mean direction, Chebyshev sample counts,
gradient shot budgets and the total query cost.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np
from scipy.special import roots_legendre

from dqpe.core.estimator import TrigMoment
from dqpe.errors import InputError, QuadratureError
from dqpe.logging_config import get_logger

logger = get_logger("core.statistics")

# guards ceil() against ratios like 99.99999999999999 from binary rounding
_CEIL_SLACK = 1e-12


@dataclass(frozen=True)
class MomentAnalysis:
    theta_closed: complex
    bias_magnitude: float
    bias_phase: float  # radians
    half_width: float
    delta_phi: float
    overlap: float

    def to_dict(self) -> dict:
        data = asdict(self)
        data["theta_closed"] = [self.theta_closed.real, self.theta_closed.imag]
        return data


@dataclass(frozen=True)
class CostReport:
    variance_theta: float
    variance_mu: float
    n_samples_estimate: int
    n_shots_gradient: int
    n_calls: int
    total_queries: int
    t: int
    epsilon: float
    gate_count: int
    n_params: int
    stencil_one_norm: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_half_width(h: float) -> None:
    if not 0.0 < h <= 0.5:
        raise InputError(f"Window half-width must lie in (0, 0.5], got {h}")


def theta_closed_form(
    t: int, delta_phi: float, h: float, overlap: float, phi: float = 0.0
) -> complex:
    """
    Windowed first moment of a single eigenstate in the continuum limit.

    The double sum over readout indices n, n' is grouped by m = n + n' - 2^t, whose
    multiplicity is 2^t + 1 + m for m < 0 and 2^t - 1 - m for m > 0.

    Args:
        t: readout qubits (continuum regime, t >= 10)
        delta_phi: eigenphase minus window center
        h: window half-width
        overlap: |c_u|^2
        phi: eigenphase; the result carries the factor exp(i 2 pi phi)

    Returns:
        complex moment
    """
    _check_half_width(h)
    if t < 10:
        logger.debug(f"theta_closed_form outside the continuum regime (t={t})")
    N = 1 << t
    m = np.arange(-N, N - 1)
    m = m[m != 0]
    multiplicity = np.where(m < 0, N + 1 + m, N - 1 - m).astype(float)
    phase = np.exp(2j * np.pi * np.mod(m * delta_phi, 1.0))
    series = np.sum(multiplicity * phase * np.sin(2.0 * np.pi * np.mod(m * h, 1.0)) / m)
    bracket = 2.0 * np.pi * (N - 1) * h + series
    return complex(overlap * np.exp(2j * np.pi * phi) * bracket / (np.pi * N))


def _fejer(y: np.ndarray, N: int) -> np.ndarray:
    s = np.sin(np.pi * y)
    num = np.sin(np.pi * np.mod(N * y, 2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (num / s) ** 2
    return np.where(y == 0.0, float(N) ** 2, k)


def _segment_integral(a: float, b: float, N: int, order: int, weight_fn) -> complex:
    # breakpoints at the kernel zeros k/N keep every segment smooth
    lo = math.floor(a * N) + 1
    hi = math.ceil(b * N) - 1
    inner = np.arange(lo, hi + 1) / N
    edges = np.concatenate([[a], inner[(inner > a) & (inner < b)], [b]])
    x, w = roots_legendre(order)
    total = 0.0 + 0.0j
    batch = 1 << 15
    for start in range(0, len(edges) - 1, batch):
        left = edges[start:start + batch]
        right = edges[start + 1:start + batch + 1]
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        y = mid[:, None] + half[:, None] * x[None, :]
        values = _fejer(y, N) * weight_fn(y)
        total += np.sum(half[:, None] * w[None, :] * values)
    return complex(total)


def theta_numeric(
    t: int,
    delta_phi: float,
    h: float,
    overlap: float,
    phi: float = 0.0,
    order: int = 16,
    rtol: float = 1e-10,
) -> complex:
    """
    Same moment by Gauss-Legendre quadrature of the continuum integral.

    Each segment between consecutive kernel zeros is integrated at two orders; a
    relative disagreement above rtol is reported as QuadratureError.
    """
    _check_half_width(h)
    N = 1 << t

    def rotation(y):
        return np.exp(-2j * np.pi * y)

    a, b = delta_phi - h, delta_phi + h
    coarse = _segment_integral(a, b, N, order, rotation)
    fine = _segment_integral(a, b, N, 2 * order, rotation)
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > rtol * scale:
        raise QuadratureError(
            "Quadrature did not converge",
            coarse=coarse,
            fine=fine,
            t=t,
            delta_phi=delta_phi,
            h=h,
        )
    return complex(overlap * np.exp(2j * np.pi * phi) * fine / N)


def bias_term(t: int, delta_phi: float) -> tuple[float, float]:
    """Modulus |B| and phase alpha of B = |B| exp(-i alpha) = (1 - i 2 pi dphi) 2^t + (2^t - 1)/2^t."""
    N = float(1 << t)
    if abs(delta_phi) > 1.0 / N:
        logger.debug(f"bias_term used with |delta_phi| > 1/2^t (t={t})")
    B = (1.0 - 2j * np.pi * delta_phi) * N + (N - 1.0) / N
    return float(abs(B)), float(-np.angle(B))


def theta_narrow_window(
    t: int, delta_phi: float, window_strings: float, overlap: float
) -> complex:
    """Leading narrow-window expansion 2|c_u|^2 |G| |B| / 2^t exp(-i alpha); valid for |G| << 1."""
    magnitude, alpha = bias_term(t, delta_phi)
    return complex(2.0 * overlap * window_strings * magnitude / (1 << t) * np.exp(-1j * alpha))


def analyze_moment(t: int, delta_phi: float, h: float, overlap: float) -> MomentAnalysis:
    magnitude, alpha = bias_term(t, delta_phi)
    return MomentAnalysis(
        theta_closed=theta_closed_form(t, delta_phi, h, overlap),
        bias_magnitude=magnitude,
        bias_phase=alpha,
        half_width=h,
        delta_phi=delta_phi,
        overlap=overlap,
    )


def cruz_closed_form(t: int, phi: float) -> complex:
    """Full-grid first moment of a single eigenstate."""
    N = 1 << t
    return complex(
        (N - 1) / N * np.exp(2j * np.pi * phi)
        + np.exp(-2j * np.pi * np.mod((N - 1) * phi, 1.0)) / N
    )


def cruz_magnitude(t: int, phi: float) -> float:
    N = float(1 << t)
    value = (N * N - 2.0 * N + 2.0 + 2.0 * (N - 1.0) * np.cos(2.0 * np.pi * np.mod(N * phi, 1.0))) / (N * N)
    return float(np.sqrt(max(value, 0.0)))


def variance_theta(magnitude: float) -> float:
    """Circular variance 1 - |theta|."""
    if not -1e-12 <= magnitude <= 1.0 + 1e-12:
        raise InputError(f"Moment magnitude must lie in [0, 1], got {magnitude}")
    return float(max(0.0, 1.0 - magnitude))


def _as_complex(theta: Union[TrigMoment, complex]) -> complex:
    return theta.value if isinstance(theta, TrigMoment) else complex(theta)


def variance_mu(theta: Union[TrigMoment, complex]) -> float:
    """
    Propagated variance of the mean direction, 1/2 [(dmu/dRe)^2 + (dmu/dIm)^2] Var(theta).
    """
    value = _as_complex(theta)
    r2 = abs(value) ** 2
    if r2 == 0.0:
        raise InputError("Variance of the mean direction is undefined at zero magnitude")
    dmu_dre = -value.imag / (2.0 * np.pi * r2)
    dmu_dim = value.real / (2.0 * np.pi * r2)
    return 0.5 * (dmu_dre**2 + dmu_dim**2) * variance_theta(min(abs(value), 1.0))


def variance_mu_closed(magnitude: float) -> float:
    """(1 - |theta|) / (8 pi^2 |theta|^2)."""
    if magnitude <= 0.0:
        raise InputError("Variance of the mean direction is undefined at zero magnitude")
    return variance_theta(magnitude) / (8.0 * np.pi**2 * magnitude**2)


def _positive_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise InputError(f"Target precision must be positive, got {epsilon}")


def _ceil_count(value: float) -> int:
    return max(1, math.ceil(value * (1.0 - _CEIL_SLACK)))


def chebyshev_samples(variance: float, epsilon: float) -> int:
    """Samples needed for precision epsilon by Chebyshev's inequality: ceil(Var/eps^2)."""
    _positive_epsilon(epsilon)
    return _ceil_count(variance / epsilon**2)


def gradient_shot_budget(variance: float, stencil_one_norm: float, epsilon: float) -> int:
    """ceil(Var ||y||_1^2 / eps^2) shots for a stencil-based gradient component."""
    _positive_epsilon(epsilon)
    if stencil_one_norm < 0:
        raise InputError(f"Stencil one-norm must be non-negative, got {stencil_one_norm}")
    return _ceil_count(variance * stencil_one_norm**2 / epsilon**2)


def n_calls(gate_count: int, t: int, n_params: int) -> int:
    """Circuit calls for one gradient: G t M."""
    return int(gate_count) * int(t) * int(n_params)


def total_cost(gate_count: int, t: int, n_params: int, n_shots: int) -> int:
    """Total circuit queries G t M N."""
    for name, value in (("gate_count", gate_count), ("t", t), ("n_params", n_params), ("n_shots", n_shots)):
        if value < 1:
            raise InputError(f"{name} must be >= 1, got {value}")
    return n_calls(gate_count, t, n_params) * int(n_shots)


def cost_report(
    t: int,
    magnitude: float,
    epsilon: float,
    gate_count: int,
    n_params: int,
    stencil_one_norm: float,
) -> CostReport:
    var_theta = variance_theta(magnitude)
    var_mu = variance_mu_closed(magnitude)
    shots = gradient_shot_budget(var_mu, stencil_one_norm, epsilon)
    return CostReport(
        variance_theta=var_theta,
        variance_mu=var_mu,
        n_samples_estimate=chebyshev_samples(var_mu, epsilon),
        n_shots_gradient=shots,
        n_calls=n_calls(gate_count, t, n_params),
        total_queries=total_cost(gate_count, t, n_params, shots),
        t=t,
        epsilon=epsilon,
        gate_count=gate_count,
        n_params=n_params,
        stencil_one_norm=stencil_one_norm,
    )


def fwhm(t: int) -> float:
    if t < 1:
        raise InputError(f"t must be >= 1, got {t}")
    return 1.0 / (1 << t)


def measured_fwhm(t: int, oversample: int = 256) -> float:
    """Full width at half maximum of the continuous kernel main lobe, found by scanning."""
    N = 1 << t
    d = np.arange(1, oversample + 1) / (N * oversample)
    p = _fejer(d, N) / N**2
    below = int(np.argmax(p < 0.5))
    d0, d1, p0, p1 = d[below - 1], d[below], p[below - 1], p[below]
    half = d0 + (p0 - 0.5) * (d1 - d0) / (p0 - p1)
    return float(2.0 * half)


def coverage_fraction(t: int, h: float) -> float:
    """Fraction of the single-eigenstate kernel area inside [-h, h]."""
    _check_half_width(h)
    N = 1 << t
    d = np.arange(1, N)
    tail = np.sum((N - d) * np.sin(2.0 * np.pi * np.mod(d * h, 1.0)) / (np.pi * d))
    return float(2.0 * h + 2.0 * tail / N)


def window_for_coverage(t: int, fraction: float) -> float:
    """Smallest h = m/2^t whose window holds at least the given fraction of the kernel area."""
    if not 0.0 < fraction < 1.0:
        raise InputError(f"Coverage fraction must lie in (0, 1), got {fraction}")
    N = 1 << t
    lo, hi = 1, N // 2
    if coverage_fraction(t, hi / N) < fraction:
        raise InputError(f"Coverage fraction {fraction} unreachable at t={t}")
    # coverage grows with the window, so the first sufficient m is found by bisection
    while lo < hi:
        mid = (lo + hi) // 2
        if coverage_fraction(t, mid / N) >= fraction:
            hi = mid
        else:
            lo = mid + 1
    return lo / N
