import numpy as np
import pytest
from numpy.testing import assert_allclose

from dqpe.core.estimator import GceConfig, cruz_moment, gce_moment
from dqpe.core.qpe import ReadoutGrid, spectral_distribution
from dqpe.core.statistics import (
    analyze_moment,
    bias_term,
    chebyshev_samples,
    cost_report,
    coverage_fraction,
    cruz_closed_form,
    cruz_magnitude,
    fwhm,
    gradient_shot_budget,
    measured_fwhm,
    n_calls,
    theta_closed_form,
    theta_narrow_window,
    theta_numeric,
    total_cost,
    variance_mu,
    variance_mu_closed,
    variance_theta,
    window_for_coverage,
)
from dqpe.errors import InputError


@pytest.mark.parametrize("t", [10, 13])
@pytest.mark.parametrize("offset", [0.0, 0.3, -0.45])
@pytest.mark.parametrize("strings", [4, 16])
def test_closed_form_matches_quadrature(t, offset, strings):
    N = 1 << t
    dphi, h = offset / N, strings / N
    closed = theta_closed_form(t, dphi, h, 0.8)
    numeric = theta_numeric(t, dphi, h, 0.8)
    assert abs(closed - numeric) <= 1e-8 * abs(numeric)


@pytest.mark.parametrize("t", [10, 13])
def test_full_window_limit(t):
    N = 1 << t
    assert_allclose(theta_closed_form(t, 0.0, 0.5, 1.0), (N - 1) / N, atol=1e-12)


def test_closed_form_carries_eigenphase():
    t = 10
    base = theta_closed_form(t, 0.1 / 1024, 8 / 1024, 1.0)
    rotated = theta_closed_form(t, 0.1 / 1024, 8 / 1024, 1.0, phi=0.25)
    assert_allclose(rotated, 1j * base, rtol=1e-12)


def test_gce_matches_closed_form_for_sharp_window():
    t, N = 12, 4096
    phi = (1500 + 0.3) / N
    config = GceConfig.for_register(t, steepness=5000.0, window_strings=64)
    dist = spectral_distribution(np.array([phi]), np.array([1.0]), ReadoutGrid(t))
    theta = gce_moment(dist, config).value
    closed = theta_closed_form(t, 0.3 / N, 64 / N, 1.0, phi=phi)
    assert abs(theta - closed) <= 0.01 * abs(closed)


def test_narrow_window_expansion():
    t, N = 10, 1024
    dphi = 0.01 / N
    narrow = theta_narrow_window(t, dphi, 0.01, 1.0)
    closed = theta_closed_form(t, dphi, 0.01 / N, 1.0)
    assert abs(narrow - closed) <= 0.05 * abs(closed)


def test_bias_term_small_offset():
    magnitude, alpha = bias_term(10, 0.0)
    assert_allclose(magnitude, 1024 + 1023 / 1024)
    assert alpha == 0.0
    _, alpha = bias_term(10, 0.1 / 1024)
    assert_allclose(alpha, 2 * np.pi * 0.1 / 1024, rtol=1e-2)


def test_analyze_moment_record():
    record = analyze_moment(10, 0.0, 8 / 1024, 0.5).to_dict()
    assert record["half_width"] == 8 / 1024
    assert len(record["theta_closed"]) == 2


@pytest.mark.parametrize("t", [4, 6, 9])
def test_cruz_closed_form_matches_distribution(t, rng):
    for phi in rng.uniform(0, 1, size=4):
        dist = spectral_distribution(np.array([phi]), np.array([1.0]), ReadoutGrid(t))
        closed = cruz_closed_form(t, phi)
        assert_allclose(cruz_moment(dist).value, closed, atol=1e-12)
        assert_allclose(cruz_magnitude(t, phi), abs(closed), atol=1e-12)


def test_variance_forms_agree(rng):
    for _ in range(20):
        r = rng.uniform(0.05, 1.0)
        theta = r * np.exp(2j * np.pi * rng.uniform())
        assert_allclose(variance_mu(theta), variance_mu_closed(r), rtol=1e-12, atol=1e-15)


def test_variance_edges():
    assert variance_theta(1.0) == 0.0
    assert variance_mu_closed(1.0) == 0.0
    with pytest.raises(InputError):
        variance_theta(1.5)
    with pytest.raises(InputError):
        variance_mu(0j)
    with pytest.raises(InputError):
        variance_mu_closed(0.0)


def test_sample_counts():
    assert chebyshev_samples(1e-4, 1e-2) == 1
    assert chebyshev_samples(2e-4, 1e-2) == 2
    assert chebyshev_samples(2.5e-4, 1e-2) == 3
    assert chebyshev_samples(0.0, 1e-2) == 1
    assert gradient_shot_budget(1e-4, 10.0, 1e-2) == 100
    with pytest.raises(InputError):
        chebyshev_samples(1e-4, 0.0)


def test_cost_chain():
    assert n_calls(100, 13, 9) == 11700
    assert total_cost(100, 13, 9, 5) == 58500
    with pytest.raises(InputError):
        total_cost(100, 13, 9, 0)
    report = cost_report(13, 0.9, 1e-3, 100, 9, 1.0)
    assert report.n_calls == 11700
    assert report.total_queries == report.n_calls * report.n_shots_gradient
    assert report.n_samples_estimate == report.n_shots_gradient
    assert_allclose(report.variance_theta, 0.1)
    assert set(report.to_dict()) >= {"variance_theta", "variance_mu", "total_queries"}


def test_fwhm():
    assert fwhm(10) == 1 / 1024
    assert_allclose(measured_fwhm(10) * 1024, 0.8859, atol=2e-3)


def test_coverage():
    t = 10
    assert_allclose(coverage_fraction(t, 0.5), 1.0, atol=1e-10)
    values = [coverage_fraction(t, m / 1024) for m in (1, 2, 4, 8, 16)]
    assert all(a < b for a, b in zip(values, values[1:]))
    h = window_for_coverage(t, 0.95)
    assert coverage_fraction(t, h) >= 0.95
    assert coverage_fraction(t, h - 1 / 1024) < 0.95
    with pytest.raises(InputError):
        window_for_coverage(t, 1.0)


@pytest.mark.parametrize("fraction", [0.5, 0.9, 0.95, 0.99, 0.999])
def test_window_for_coverage_is_first_sufficient_window(fraction):
    t = 8
    N = 1 << t
    first = next(m for m in range(1, N // 2 + 1) if coverage_fraction(t, m / N) >= fraction)
    assert window_for_coverage(t, fraction) == first / N
    assert window_for_coverage(13, fraction) <= window_for_coverage(13, min(fraction + 0.0005, 0.9999))
