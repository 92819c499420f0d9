"""Tests for the variance-normalized Student's t family and its limits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from oracles import student_tail_integral
from symtail.dist import (
    ScaledTailLaw,
    TailModel,
    cdf,
    lagrange_to_nu,
    log_pdf,
    pdf,
    ppf,
    sample,
    scaled_to_normalized,
)
from symtail.errors import (
    InfiniteVarianceError,
    InputError,
    InvalidTailIndexError,
    NonFiniteInputError,
)

GAUSS = TailModel.gaussian()
CAUCHY = TailModel.cauchy()


class TestPdf:
    def test_gaussian_at_zero(self):
        assert pdf(GAUSS, 0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=1e-12)

    def test_cauchy_at_zero(self):
        assert pdf(CAUCHY, 0.0) == pytest.approx(1.0 / math.pi, abs=1e-12)

    def test_student3_at_zero_is_two_over_pi(self):
        # Gamma(2) / (sqrt(pi) * Gamma(1.5)) = 2/pi
        assert pdf(TailModel.student_t(3), 0.0) == pytest.approx(2.0 / math.pi, abs=1e-12)

    def test_even_and_positive(self):
        ys = np.array([0.3, 1.7, 4.0, 12.0])
        for model in (GAUSS, CAUCHY, TailModel.student_t(2.7)):
            assert np.all(pdf(model, ys) > 0)
            assert np.allclose(pdf(model, ys), pdf(model, -ys), rtol=0, atol=0)

    def test_tail_ordering_at_ten(self):
        y = 10.0
        assert pdf(TailModel.student_t(3), y) > pdf(TailModel.student_t(10), y) > pdf(GAUSS, y)

    def test_rejects_nonfinite_input(self):
        with pytest.raises(NonFiniteInputError):
            pdf(GAUSS, np.nan)
        with pytest.raises(NonFiniteInputError):
            log_pdf(TailModel.student_t(4), np.inf)

    def test_invalid_nu(self):
        for bad in (2.0, 1.5, 0.0, -3.0, np.nan):
            with pytest.raises(InvalidTailIndexError):
                TailModel.student_t(bad)
        with pytest.raises(InputError):
            TailModel(kind=TailModel.gaussian().kind, nu=5.0)


class TestLogPdf:
    def test_gaussian_at_zero(self):
        assert log_pdf(GAUSS, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_student3_at_zero(self):
        assert log_pdf(TailModel.student_t(3), 0.0) == pytest.approx(
            math.log(2.0 / math.pi), abs=1e-12
        )

    def test_matches_log_of_pdf(self):
        ys = np.linspace(-30, 30, 201)
        for model in (GAUSS, CAUCHY, TailModel.student_t(2.3), TailModel.student_t(40)):
            p = pdf(model, ys)
            keep = p > 1e-300
            assert np.allclose(log_pdf(model, ys)[keep], np.log(p[keep]), rtol=1e-12)

    def test_finite_in_extreme_tail(self):
        # asymptotic oracle: log p ~ log_norm - (nu+1)/2 * log(y^2/(nu-2))
        nu = 3.0
        model = TailModel.student_t(nu)
        for y in (1e100, 1e150):
            got = log_pdf(model, y)
            assert np.isfinite(got)
            norm = math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(
                math.pi * (nu - 2)
            )
            expect = norm - 0.5 * (nu + 1) * math.log(y * y / (nu - 2))
            assert got == pytest.approx(expect, rel=1e-12)

    def test_against_scipy(self):
        ys = np.array([-8.0, -2.5, 0.1, 1.0, 6.0, 55.0])
        for nu in (2.1, 3.0, 7.5, 120.0):
            scale = math.sqrt((nu - 2) / nu)
            ours = log_pdf(TailModel.student_t(nu), ys)
            ref = stats.t.logpdf(ys, df=nu, scale=scale)
            assert np.allclose(ours, ref, rtol=1e-10, atol=1e-10)


class TestNormalizationAndVariance:
    @pytest.mark.parametrize("nu", [2.1, 2.5, 3.0, 5.0, 10.0, 50.0])
    def test_integrates_to_one(self, nu):
        model = TailModel.student_t(nu)
        body, _ = integrate.quad(lambda y: pdf(model, y), -50.0, 50.0, limit=300)
        total = body + 2.0 * student_tail_integral(nu, 50.0, moment=0)
        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("nu", [2.5, 3.0, 5.0, 10.0, 50.0])
    def test_unit_variance(self, nu):
        model = TailModel.student_t(nu)
        body, _ = integrate.quad(
            lambda y: y * y * pdf(model, y), -50.0, 50.0, limit=300
        )
        total = body + 2.0 * student_tail_integral(nu, 50.0, moment=2)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_gaussian_limit_sup_norm(self):
        ys = np.linspace(-6.0, 6.0, 1201)
        gap = np.abs(pdf(TailModel.student_t(500), ys) - pdf(GAUSS, ys))
        assert gap.max() < 1e-3


class TestCdfPpf:
    def test_cdf_against_scipy(self):
        ys = np.linspace(-12, 12, 97)
        for nu in (2.2, 3.0, 9.0):
            scale = math.sqrt((nu - 2) / nu)
            ours = cdf(TailModel.student_t(nu), ys)
            ref = stats.t.cdf(ys, df=nu, scale=scale)
            assert np.allclose(ours, ref, atol=1e-9)

    def test_scalar_matches_array_path(self):
        model = TailModel.student_t(3.4)
        ys = np.linspace(-4, 7, 23)
        arr = cdf(model, ys)
        for y, v in zip(ys[:6], arr[:6]):
            assert cdf(model, float(y)) == pytest.approx(v, abs=1e-10)

    def test_ppf_round_trip(self):
        model = TailModel.student_t(3)
        for p in (0.01, 0.2, 0.5, 0.9, 0.999):
            assert cdf(model, ppf(model, p)) == pytest.approx(p, abs=1e-7)

    def test_ppf_closed_forms(self):
        assert ppf(GAUSS, 0.975) == pytest.approx(1.959963985, abs=1e-8)
        assert ppf(CAUCHY, 0.75) == pytest.approx(1.0, abs=1e-12)

    def test_ppf_rejects_bad_levels(self):
        with pytest.raises(InputError):
            ppf(GAUSS, 0.0)
        with pytest.raises(InputError):
            ppf(GAUSS, 1.0)


class TestSample:
    def test_gaussian_variance(self):
        batch = sample(GAUSS, 10**6, seed=123)
        assert 0.995 <= batch.values.var() <= 1.005

    def test_student5_variance(self):
        batch = sample(TailModel.student_t(5), 10**6, seed=123)
        assert 0.98 <= batch.values.var() <= 1.02

    def test_student4_mean(self):
        batch = sample(TailModel.student_t(4), 10**6, seed=7)
        assert -0.01 <= batch.values.mean() <= 0.01

    def test_deterministic(self):
        a = sample(TailModel.student_t(3), 1000, seed=42)
        b = sample(TailModel.student_t(3), 1000, seed=42)
        c = sample(TailModel.student_t(3), 1000, seed=43)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_shape_and_n_validation(self):
        batch = sample(CAUCHY, 17, seed=0)
        assert batch.values.shape == (1, 17)
        with pytest.raises(InputError):
            sample(GAUSS, 0, seed=0)

    @pytest.mark.parametrize("nu", [3.0, 5.0, 20.0])
    def test_ks_agreement_with_cdf(self, nu):
        n = 10**5
        model = TailModel.student_t(nu)
        vals = np.sort(sample(model, n, seed=int(nu)).flat())
        model_cdf = cdf(model, vals)
        k = np.arange(1, n + 1)
        ks = max(np.max(k / n - model_cdf), np.max(model_cdf - (k - 1) / n))
        assert ks < 1.95 / math.sqrt(n) * 1.5


class TestConversions:
    def test_unit_scale_law(self):
        # variance of p ~ (1+y^2)^-2 is exactly 1: check by direct integration
        wt = lambda y: (1.0 + y * y) ** -2.0
        z, _ = integrate.quad(wt, -np.inf, np.inf)
        v, _ = integrate.quad(lambda y: y * y * wt(y), -np.inf, np.inf)
        assert v / z == pytest.approx(1.0, abs=1e-10)
        model, rescale = scaled_to_normalized(ScaledTailLaw(s=1.0, nu_t=2.0))
        assert model.nu == pytest.approx(3.0)
        assert rescale == pytest.approx(1.0)

    def test_scaled_law(self):
        model, rescale = scaled_to_normalized(ScaledTailLaw(s=2.0, nu_t=2.5))
        assert model.nu == pytest.approx(4.0)
        assert rescale == pytest.approx(math.sqrt(2.0) / 2.0)

    def test_rescaled_law_matches_model_density(self):
        # after rescaling, the scaled law IS the unit-variance model
        s, nu_t = 1.7, 2.2
        model, rescale = scaled_to_normalized(ScaledTailLaw(s=s, nu_t=nu_t))
        wt = lambda y: (1.0 + (y / s) ** 2) ** -nu_t
        z, _ = integrate.quad(wt, -np.inf, np.inf)
        ys = np.linspace(-5, 5, 41)
        # density of rescaled variable at x: (1/rescale?) change of variables y = x/rescale
        ref = wt(ys / rescale) / z / rescale
        assert np.allclose(pdf(model, ys), ref, rtol=1e-9)

    def test_infinite_variance_boundary(self):
        with pytest.raises(InfiniteVarianceError):
            scaled_to_normalized(ScaledTailLaw(s=1.0, nu_t=1.5))

    def test_lagrange_to_nu(self):
        assert lagrange_to_nu(2.0) == pytest.approx(3.0)
        with pytest.raises(InputError):
            lagrange_to_nu(1.5)

    def test_large_multiplier_is_near_gaussian(self):
        # density-weighted NLL gap on [-5, 5]: expected extra nats when scoring
        # Gaussian-weighted points with t(2*1000-1) instead of the true normal
        nu = lagrange_to_nu(1000.0)
        assert nu == pytest.approx(1999.0)
        ys = np.linspace(-5.0, 5.0, 2001)
        w = pdf(GAUSS, ys)
        w = w / w.sum()
        gap = float(np.sum(w * (log_pdf(GAUSS, ys) - log_pdf(TailModel.student_t(nu), ys))))
        assert abs(gap) < 1e-4


@settings(max_examples=60, deadline=None)
@given(
    nu=st.floats(min_value=2.05, max_value=300.0),
    y=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
)
def test_pdf_even_positive_property(nu, y):
    model = TailModel.student_t(nu)
    lp = log_pdf(model, y)
    assert np.isfinite(lp)
    assert lp == log_pdf(model, -y)
    assert pdf(model, y) == pdf(model, -y)
    if lp > -700.0:
        assert pdf(model, y) > 0


@settings(max_examples=30, deadline=None)
@given(nu=st.floats(min_value=2.05, max_value=100.0))
def test_cdf_monotone_property(nu):
    model = TailModel.student_t(nu)
    ys = np.linspace(-20, 20, 41)
    c = cdf(model, ys)
    assert np.all(np.diff(c) >= 0)
    assert np.all((c >= 0.0) & (c <= 1.0))
    bulk = np.abs(ys) <= 8.0
    assert np.all(np.diff(c[bulk]) > 0)
    assert cdf(model, 0.0) == pytest.approx(0.5, abs=1e-12)
