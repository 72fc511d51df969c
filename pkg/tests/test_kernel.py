"""Kernel and incomplete-gamma tests against independent numerical oracles."""

import math

import numpy as np
import pytest

from hawkcast import ParameterError, discretize_gamma, gamma_cdf
from hawkcast.kernel import _lower_series, _upper_cf


def _gamma_pdf(x, shape, scale):
    if x <= 0.0:
        return 0.0
    return math.exp((shape - 1.0) * math.log(x / scale) - x / scale
                    - math.lgamma(shape)) / scale


def _adaptive_simpson(f, a, b, tol=1e-13, depth=60):
    """Independent quadrature: recursive Simpson with Richardson correction."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, level):
        mid = 0.5 * (lo + hi)
        flm = f(0.5 * (lo + mid))
        frm = f(0.5 * (mid + hi))
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        if level <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, flm, fmid, left, eps / 2.0, level - 1)
                + recurse(mid, hi, fmid, frm, fhi, right, eps / 2.0, level - 1))

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, depth)


def quadrature_lag_weights(shape, scale, lags):
    """Bin masses of the Gamma density computed purely by quadrature."""
    pdf = lambda x: _gamma_pdf(x, shape, scale)
    weights = [_adaptive_simpson(pdf, 0.0, 1.5)]
    for lag in range(2, lags + 1):
        weights.append(_adaptive_simpson(pdf, lag - 0.5, lag + 0.5))
    return np.array(weights)


def test_exponential_first_lag_closed_form():
    kernel = discretize_gamma(1.0, 1.0, lags=40, renormalize=False)
    assert kernel.phi(1) == pytest.approx(1.0 - math.exp(-1.5), abs=1e-12)


def test_exponential_mass_telescopes():
    kernel = discretize_gamma(1.0, 1.0, lags=40, renormalize=False)
    assert kernel.mass() == pytest.approx(1.0 - math.exp(-40.5), abs=1e-14)


def test_default_kernel_matches_quadrature_oracle():
    kernel = discretize_gamma(5.807, 1.055, lags=30, renormalize=False)
    oracle = quadrature_lag_weights(5.807, 1.055, 30)
    assert np.max(np.abs(kernel.probs - oracle)) < 1e-8


def test_mass_identity_telescopes_exactly():
    for shape, scale, lags in [(5.807, 1.055, 30), (1.0, 1.0, 40),
                               (2.0, 0.8, 25), (0.7, 2.0, 60)]:
        kernel = discretize_gamma(shape, scale, lags=lags, renormalize=False)
        assert abs(kernel.mass() - gamma_cdf(lags + 0.5, shape, scale)) < 1e-12


def test_renormalized_mass_is_one():
    kernel = discretize_gamma(5.807, 1.055, lags=30)
    assert abs(kernel.mass() - 1.0) < 1e-12
    assert kernel.renormalized


def test_default_kernel_is_unimodal():
    kernel = discretize_gamma(5.807, 1.055, lags=30)
    peak = int(np.argmax(kernel.probs))
    diffs = np.diff(kernel.probs)
    assert np.all(diffs[:peak] > 0)
    assert np.all(diffs[peak:] < 0)


def test_truncation_with_too_little_mass_rejected():
    # Gamma(40, 1) has essentially no mass below day 10.5.
    with pytest.raises(ParameterError):
        discretize_gamma(40.0, 1.0, lags=10, renormalize=False)


def test_lag_validation():
    with pytest.raises(ParameterError):
        discretize_gamma(5.807, 1.055, lags=1)
    with pytest.raises(ParameterError):
        discretize_gamma(5.807, 1.055, lags=2.5)
    with pytest.raises(ParameterError):
        discretize_gamma(-1.0, 1.055)
    with pytest.raises(ParameterError):
        discretize_gamma(5.807, 0.0)


def test_phi_outside_window_is_zero():
    kernel = discretize_gamma(5.807, 1.055, lags=30)
    assert kernel.phi(0) == 0.0
    assert kernel.phi(31) == 0.0
    assert kernel.phi(1) == float(kernel.probs[0])


def test_kernel_probs_are_immutable():
    kernel = discretize_gamma(5.807, 1.055)
    with pytest.raises(ValueError):
        kernel.probs[0] = 0.5


def test_gamma_cdf_boundaries():
    assert gamma_cdf(0.0, 2.0, 1.0) == 0.0
    assert gamma_cdf(math.inf, 2.0, 1.0) == 1.0
    with pytest.raises(ParameterError):
        gamma_cdf(-0.1, 2.0, 1.0)
    with pytest.raises(ParameterError):
        gamma_cdf(1.0, 0.0, 1.0)
    with pytest.raises(ParameterError):
        gamma_cdf(1.0, 2.0, -1.0)


def test_gamma_cdf_exponential_closed_form():
    for x in (0.1, 0.5, 1.0, 3.0, 10.0, 40.5):
        assert gamma_cdf(x, 1.0, 1.0) == pytest.approx(1.0 - math.exp(-x), abs=1e-13)


def test_gamma_cdf_monotone_on_grid():
    xs = np.linspace(0.0, 30.0, 400)
    vals = [gamma_cdf(float(x), 5.807, 1.055) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_series_and_continued_fraction_agree_at_crossover():
    """The two evaluation branches must agree where either could be used."""
    shape = 5.807
    for x in (5.0, 6.13, 6.5, 7.0, 9.0):
        y = x / 1.055
        from_series = _lower_series(shape, y)
        from_cf = 1.0 - _upper_cf(shape, y)
        assert from_series == pytest.approx(from_cf, abs=1e-10)


def test_gamma_cdf_matches_quadrature():
    pdf = lambda x: _gamma_pdf(x, 5.807, 1.055)
    for x in (1.0, 3.0, 6.13, 12.0, 20.0):
        oracle = _adaptive_simpson(pdf, 0.0, x)
        assert gamma_cdf(x, 5.807, 1.055) == pytest.approx(oracle, abs=1e-10)


def test_scale_parameter_scales_the_argument():
    # F(x; k, s) = F(x/s; k, 1) by construction of the scale family.
    for x in (0.5, 2.0, 7.5):
        assert gamma_cdf(x, 3.0, 2.0) == pytest.approx(
            gamma_cdf(x / 2.0, 3.0, 1.0), abs=1e-14)
