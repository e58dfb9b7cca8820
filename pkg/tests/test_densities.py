from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from gqte.densities import (
    FAMILIES,
    Gamma,
    GammaScaleMixture,
    KernelDensityEstimate,
    LogNormal,
    Pareto,
    Uniform,
    density_from_echo,
    kde_eval,
    make_density,
    pdf,
    quantile,
    silverman_bandwidth,
)
from gqte.errors import DomainError, InputError

FAMILY_CASES = [
    Uniform(2.0),
    LogNormal(1.0, 0.6),
    Pareto(3.0, 1.5),
    Gamma(2.5, 0.8),
    GammaScaleMixture((0.1, 0.0, 0.4, 0.5), 1.7),
]
IDS = [f.name for f in FAMILY_CASES]
P_CHECK = np.linspace(0.001, 0.999, 199)


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_pdf_integrates_to_one(f):
    lo, hi = f.quantile(1e-12), f.quantile(1 - 1e-12)
    total, _ = integrate.quad(f.pdf, lo, hi, limit=400,
                              points=[f.quantile(0.5)] if hi > lo else None)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_cdf_inverts_quantile(f):
    assert np.allclose(f.cdf(f.quantile(P_CHECK)), P_CHECK, atol=1e-8)


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_quantile_inverts_cdf(f):
    y = f.quantile(P_CHECK)
    assert np.allclose(f.quantile(f.cdf(y)), y, rtol=1e-8)


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_sampling_matches_cdf(f):
    draws = f.rvs(np.random.default_rng(11), 100_000)
    assert stats.kstest(draws, f.cdf).statistic < 0.01


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_pdf_nonnegative_and_zero_outside_support(f):
    assert f.pdf(-1.0) == 0.0
    assert np.all(f.pdf(np.linspace(1e-3, 50, 500)) >= 0)


def test_pdf_examples():
    assert pdf(GammaScaleMixture((1.0,), 2.0), 0.5) == pytest.approx(2 * np.exp(-1), rel=1e-12)
    assert pdf(Uniform(1.0), 0.5) == 1.0
    median = np.exp(7.0)
    assert pdf(LogNormal(7.0, 1.5), median) == pytest.approx(
        1 / (median * 1.5 * np.sqrt(2 * np.pi)), rel=1e-12)
    assert pdf(Pareto(2.0, 1.0), 0.5) == 0.0


def test_quantile_examples():
    assert quantile(Uniform(2.0), 0.25) == pytest.approx(0.5)
    assert quantile(Pareto(2.0, 1.0), 0.75) == pytest.approx(2.0)
    assert quantile(GammaScaleMixture((1.0,), 1.0), 1 - np.exp(-1)) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_quantile_outside_unit_interval(f):
    with pytest.raises(DomainError):
        f.quantile(1.2)


def test_closed_forms_agree_with_scipy():
    y = np.linspace(0.5, 40, 60)
    assert np.allclose(LogNormal(1.0, 0.6).pdf(y), stats.lognorm(0.6, scale=np.e).pdf(y))
    assert np.allclose(Pareto(3.0, 1.5).pdf(y), stats.pareto(3.0, scale=1.5).pdf(y))
    assert np.allclose(Gamma(2.5, 0.8).pdf(y), stats.gamma(2.5, scale=1 / 0.8).pdf(y))


def test_gsm_mean_matches_quadrature():
    f = GammaScaleMixture((0.2, 0.3, 0.0, 0.5), 0.9)
    expected = sum(w * (j + 1) / 0.9 for j, w in enumerate(f.weights))
    quad, _ = integrate.quad(lambda y: y * f.pdf(y), 0, np.inf, limit=200)
    assert f.mean() == pytest.approx(expected, rel=1e-12)
    assert quad == pytest.approx(expected, abs=1e-6)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 0.1),
       st.floats(0.05, 20.0))
@settings(max_examples=40, deadline=None)
def test_gsm_quantile_round_trip(raw, rate):
    w = np.array(raw) / sum(raw)
    w[-1] = 1.0 - w[:-1].sum()
    w = np.clip(w, 0, None)
    w = w / w.sum()
    f = GammaScaleMixture(tuple(w), rate)
    p = np.array([0.001, 0.1, 0.5, 0.9, 0.999])
    assert np.allclose(f.cdf(f.quantile(p)), p, atol=1e-8)


def test_gsm_weight_validation():
    with pytest.raises(DomainError):
        GammaScaleMixture((0.5, 0.6), 1.0)
    with pytest.raises(DomainError):
        GammaScaleMixture((1.5, -0.5), 1.0)
    with pytest.raises(DomainError):
        GammaScaleMixture((1.0,), 0.0)


def test_gsm_prior_defaults():
    f = GammaScaleMixture((1.0,), 1.0)
    assert (f.alpha, f.delta) == (845.0, 1300.0)
    assert np.isfinite(f.log_prior())


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_echo_round_trip(f):
    assert density_from_echo(f.echo()) == f


@pytest.mark.parametrize("f", FAMILY_CASES, ids=IDS)
def test_unconstrained_round_trip(f):
    assert np.allclose(f.with_unconstrained(f.unconstrained()).params(), f.params())


@pytest.mark.parametrize("name", sorted(set(FAMILIES) - {"gsm"}))
def test_fit_recovers_parameters(name):
    truth = {"uniform": Uniform(3.0), "lognormal": LogNormal(2.0, 0.7),
             "pareto": Pareto(2.5, 1.2), "gamma": Gamma(3.0, 0.5)}[name]
    y = truth.rvs(np.random.default_rng(5), 20_000)
    fit = FAMILIES[name].fit(y)
    assert np.allclose(fit.params(), truth.params(), rtol=0.05)


def test_gsm_em_fit_improves_likelihood():
    truth = GammaScaleMixture((0.0, 0.5, 0.0, 0.0, 0.5), 1.0)
    y = truth.rvs(np.random.default_rng(2), 4000)
    fit = GammaScaleMixture.fit(y, J=8)
    assert fit.J == 8
    start = GammaScaleMixture(tuple(np.full(8, 1 / 8)), 4.5 / y.mean())
    assert fit.logpdf(y).sum() > start.logpdf(y).sum()
    assert fit.mean() == pytest.approx(y.mean(), rel=0.02)


def test_make_density_unknown():
    with pytest.raises(DomainError):
        make_density("weibull", k=1)


class TestKernelDensity:
    def test_single_point(self):
        assert kde_eval(KernelDensityEstimate([0.0], 1.0), 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi))

    def test_two_points(self):
        k = KernelDensityEstimate([-1.0, 1.0], 1.0)
        assert k(0.0) == pytest.approx(stats.norm.pdf(1.0))

    def test_tails_vanish(self):
        k = KernelDensityEstimate(np.random.default_rng(0).normal(size=50))
        assert k(np.array([-1e3, 1e3])).max() < 1e-300

    def test_integrates_to_one(self):
        sample = np.random.default_rng(1).lognormal(0, 1, 300)
        k = KernelDensityEstimate(sample)
        grid = np.linspace(sample.min() - 10 * k.bandwidth, sample.max() + 10 * k.bandwidth, 40001)
        assert integrate.trapezoid(k(grid), grid) == pytest.approx(1.0, abs=1e-4)

    def test_silverman_rule(self):
        x = np.random.default_rng(3).normal(size=400)
        iqr = np.subtract(*np.percentile(x, [75, 25]))
        expected = 0.9 * min(x.std(ddof=1), iqr / 1.34) * 400 ** -0.2
        assert silverman_bandwidth(x) == pytest.approx(expected)

    def test_empty_sample(self):
        with pytest.raises(InputError):
            KernelDensityEstimate([])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.floats(-200, 200))
    @settings(max_examples=50, deadline=None)
    def test_nonnegative(self, sample, y):
        k = KernelDensityEstimate(sample, 1.0)
        assert k(y) >= 0
