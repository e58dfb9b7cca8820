from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from gqte.basis import LinkFunction, SmootherBasis
from gqte.densities import Gamma, LogNormal, Pareto, Uniform
from gqte.errors import ConvergenceError, DomainError, InputError, SingularityError
from gqte.induced import (
    AUDIT_GRID,
    ModelSpec,
    TwoSampleData,
    audit_constraint,
    constraint_satisfied,
    f2_density_quantile,
    log_likelihood,
    q1_from_q2,
    q2_from_percentile,
    solve_percentiles,
)

GRID99 = np.arange(1, 100) / 100
LOG, IDENT = LinkFunction("log"), LinkFunction("identity")


def case2(mu1=7.5, sigma1=1.75):
    return ModelSpec(LogNormal(mu1, sigma1), LOG, SmootherBasis("normal-quantile-affine", 1))


def case3(a1=2.0, b1=1.0):
    return ModelSpec(Pareto(a1, b1), LOG, SmootherBasis("log-survival-affine", 1))


class TestTwoSampleData:
    def test_sorted_and_read_only(self):
        d = TwoSampleData([3.0, 1.0, 2.0], [5.0, 4.0])
        assert d.y1.tolist() == [1.0, 2.0, 3.0] and (d.n1, d.n2) == (3, 2)
        with pytest.raises(ValueError):
            d.y1[0] = 9.0

    @pytest.mark.parametrize("bad", [[], [1.0, 0.0], [1.0, -2.0], [np.inf], [np.nan]])
    def test_rejects(self, bad):
        with pytest.raises(InputError):
            TwoSampleData(bad, [1.0])


class TestQ1FromQ2:
    def test_zero_beta_log(self):
        assert q1_from_q2(case2(), [0.0, 0.0], 3.3, 0.7) == pytest.approx(3.3)

    def test_identity_constant(self):
        spec = ModelSpec(Uniform(1.0), IDENT, SmootherBasis("poly", 0))
        assert q1_from_q2(spec, [2.0], 0.3, 0.4) == pytest.approx(0.6)

    def test_case2_median(self):
        assert q1_from_q2(case2(), [0.5, 0.25], 1.0, 0.5) == pytest.approx(np.exp(0.5))

    def test_wrong_beta_length(self):
        with pytest.raises(DomainError):
            q1_from_q2(case2(), [0.5], 1.0, 0.5)


class TestConstraint:
    def test_constant_basis_always_true(self):
        spec = ModelSpec(LogNormal(0, 1), LOG, SmootherBasis("poly", 0))
        assert np.all(constraint_satisfied(spec, [5.0], GRID99))

    def test_case2_examples(self):
        spec = case2(7.0, 1.5)
        assert np.all(constraint_satisfied(spec, [0.0, 1.4], AUDIT_GRID))
        assert not np.all(constraint_satisfied(spec, [0.0, 1.6], AUDIT_GRID))

    def test_case3_examples(self):
        spec = case3(2.0, 1.0)
        assert np.all(constraint_satisfied(spec, [0.0, -0.4], AUDIT_GRID))
        assert not np.all(constraint_satisfied(spec, [0.0, -0.6], AUDIT_GRID))

    def test_identity_needs_positive_ratio(self):
        spec = ModelSpec(Uniform(1.0), IDENT, SmootherBasis("poly", 0))
        assert not constraint_satisfied(spec, [-1.0], 0.5)
        assert not audit_constraint(spec, [-1.0])

    @given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
    @settings(max_examples=60, deadline=None)
    def test_audit_agrees_with_pointwise(self, b0, b1):
        spec = case2(0.0, 1.0)
        assert audit_constraint(spec, [b0, b1]) == bool(
            np.all(constraint_satisfied(spec, [b0, b1], AUDIT_GRID)))


class TestInducedDensity:
    def test_uniform_case(self):
        spec = ModelSpec(Uniform(1.0), IDENT, SmootherBasis("poly", 0))
        assert f2_density_quantile(spec, [2.0], 0.3, 0.6) == pytest.approx(2.0)

    def test_case2_matches_lognormal(self):
        spec = case2()
        beta = np.array([0.5, 0.25])
        q2 = q2_from_percentile(spec, beta, GRID99)
        expected = stats.lognorm(1.5, scale=np.exp(7.0)).pdf(q2)
        assert np.allclose(f2_density_quantile(spec, beta, q2, GRID99), expected, rtol=1e-10, atol=0)

    def test_case3_matches_pareto(self):
        spec = case3(2.0, 1.0)
        beta = np.array([np.log(2.0), 0.0])
        q2 = q2_from_percentile(spec, beta, GRID99)
        expected = stats.pareto(2.0, scale=0.5).pdf(q2)
        assert np.allclose(f2_density_quantile(spec, beta, q2, GRID99), expected, rtol=1e-10, atol=0)

    @pytest.mark.parametrize("basis", [SmootherBasis("poly", 3), SmootherBasis("spline", 4)])
    def test_zero_beta_collapses_to_f1(self, basis):
        f1 = Gamma(2.0, 0.5)
        spec = ModelSpec(f1, LOG, basis)
        beta = np.zeros(basis.size)
        q = f1.quantile(GRID99)
        assert np.allclose(f2_density_quantile(spec, beta, q, GRID99), f1.pdf(q), rtol=1e-12)

    def test_singular_denominator(self):
        spec = case2(0.0, 1.0)
        beta = np.array([0.0, 2.0])
        with pytest.raises(SingularityError):
            f2_density_quantile(spec, beta, 1.0, 0.5)


class TestSolver:
    def test_zero_beta_median(self):
        spec = ModelSpec(LogNormal(7.0, 1.5), LOG, SmootherBasis("normal", 1))
        p = solve_percentiles(spec, [0.0, 0.0], [np.exp(7.0)])
        assert p[0] == pytest.approx(0.5, abs=1e-12)

    def test_zero_beta_uniform(self):
        spec = ModelSpec(Uniform(2.0), IDENT, SmootherBasis("poly", 0))
        assert solve_percentiles(spec, [1.0], [0.5])[0] == pytest.approx(0.25)

    def test_case2_matches_closed_form_cdf(self):
        spec = case2()
        beta = np.array([0.5, 0.25])
        y2 = np.sort(np.random.default_rng(1).lognormal(7.0, 1.5, 1000))
        p = solve_percentiles(spec, beta, y2)
        assert np.max(np.abs(q2_from_percentile(spec, beta, p) - y2)) < 1e-8
        assert np.max(np.abs(p - stats.lognorm(1.5, scale=np.exp(7)).cdf(y2))) < 1e-7
        assert np.all(np.diff(p) > 0)

    def test_unreachable_value_raises_with_index(self):
        spec = ModelSpec(Uniform(1.0), IDENT, SmootherBasis("poly", 0))
        with pytest.raises(ConvergenceError) as info:
            solve_percentiles(spec, [1.0], [0.2, 0.5, 3.0])
        assert info.value.index == 2

    @given(st.floats(-1.0, 1.0), st.floats(-0.5, 0.5))
    @settings(max_examples=25, deadline=None)
    def test_monotone_in_y(self, b0, b1):
        spec = case2(0.0, 1.0)
        y = np.sort(np.random.default_rng(0).lognormal(0, 1, 200))
        p = solve_percentiles(spec, [b0, b1], y)
        assert np.all(np.diff(p) >= 0)


class TestLikelihood:
    def test_zero_beta(self):
        f1 = LogNormal(1.0, 0.5)
        spec = ModelSpec(f1, LOG, SmootherBasis("spline", 3))
        rng = np.random.default_rng(4)
        data = TwoSampleData(rng.lognormal(1, 0.5, 50), rng.lognormal(1, 0.7, 80))
        expected = f1.logpdf(data.y1).sum() + f1.logpdf(data.y2).sum()
        assert log_likelihood(spec, np.zeros(4), data) == pytest.approx(expected, rel=1e-10)

    def test_case2_matches_exact(self):
        spec = case2()
        rng = np.random.default_rng(8)
        data = TwoSampleData(rng.lognormal(7.5, 1.75, 1000), rng.lognormal(7.0, 1.5, 1000))
        expected = (stats.lognorm(1.75, scale=np.exp(7.5)).logpdf(data.y1).sum()
                    + stats.lognorm(1.5, scale=np.exp(7.0)).logpdf(data.y2).sum())
        assert log_likelihood(spec, [0.5, 0.25], data) == pytest.approx(expected, abs=1e-6)

    def test_violation_is_minus_inf(self):
        spec = case2(7.0, 1.5)
        data = TwoSampleData([1000.0, 2000.0], [800.0, 900.0])
        assert log_likelihood(spec, [0.0, 1.6], data) == -np.inf

    def test_identity_link_uniform(self):
        spec = ModelSpec(Uniform(1.0), IDENT, SmootherBasis("poly", 0))
        data = TwoSampleData([0.2, 0.9], [0.1, 0.4])
        # Y2 ~ Uniform(0, 0.5): log-density log 2 per control
        assert log_likelihood(spec, [2.0], data) == pytest.approx(2 * np.log(2.0))


def test_log_link_requires_positive_support():
    class Signed(LogNormal):
        @property
        def positive_support(self):
            return False

    with pytest.raises(DomainError):
        ModelSpec(Signed(0.0, 1.0), LOG, SmootherBasis("poly", 1))


def test_special_case_parameter_maps():
    # Case 2: mu2 = mu1 - b0, sigma2 = sigma1 - b1
    spec = case2(1.0, 0.9)
    q2 = q2_from_percentile(spec, [0.3, 0.2], GRID99)
    assert np.allclose(q2, np.exp(0.7 + 0.7 * special.ndtri(GRID99)), rtol=1e-12)
    # Case 3: a2 = a1 / (a1 b1 + 1), b2 = b1 exp(-b0)
    spec = case3(3.0, 2.0)
    q2 = q2_from_percentile(spec, [0.4, 0.1], GRID99)
    a2, b2 = 3.0 / 1.3, 2.0 * np.exp(-0.4)
    assert np.allclose(q2, b2 * (1 - GRID99) ** (-1 / a2), rtol=1e-12)
