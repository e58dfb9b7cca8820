from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gqte.basis import LinkFunction, SmootherBasis
from gqte.densities import KernelDensityEstimate, LogNormal
from gqte.errors import DomainError, SelectionError
from gqte.induced import ModelSpec, TwoSampleData, f2_density_quantile, solve_percentiles
from gqte.mcmc import ols_init
from gqte.selection import fit_case_density, l1_discrepancy, select_df, worker_count

LOG = LinkFunction("log")


def _case2(seed, n=400):
    rng = np.random.default_rng(seed)
    return TwoSampleData(rng.lognormal(7.5, 1.75, n), rng.lognormal(7.0, 1.5, n))


def _brute_force(data, basis_family, df_max):
    f1 = fit_case_density("lognormal", data.y1)
    n = min(data.n1, data.n2)
    scores = {}
    for df in range(1, df_max + 1):
        basis = SmootherBasis.for_sample(basis_family, df, n)
        spec = ModelSpec(f1, LOG, basis)
        scores[df] = l1_discrepancy(spec, ols_init(data, LOG, basis).beta, data)
    return scores


class TestDiscrepancy:
    def test_zero_with_exact_reference(self):
        data = _case2(1)
        spec = ModelSpec(LogNormal.fit(data.y1), LOG, SmootherBasis("spline", 2))
        beta = ols_init(data, LOG, spec.basis).beta
        p = solve_percentiles(spec, beta, data.y2)
        exact = dict(zip(data.y2, f2_density_quantile(spec, beta, data.y2, p)))
        assert l1_discrepancy(spec, beta, data, reference=lambda y: np.array([exact[v] for v in y])) == 0.0

    def test_infeasible_is_inf(self):
        data = _case2(2)
        spec = ModelSpec(LogNormal(7.5, 1.75), LOG, SmootherBasis("normal", 1))
        assert l1_discrepancy(spec, [0.0, 5.0], data) == np.inf

    def test_permutation_invariant(self):
        data = _case2(3)
        spec = ModelSpec(LogNormal.fit(data.y1), LOG, SmootherBasis("spline", 3))
        beta = ols_init(data, LOG, spec.basis).beta
        shuffled = TwoSampleData(data.y1, np.random.default_rng(0).permutation(data.y2))
        assert l1_discrepancy(spec, beta, data) == l1_discrepancy(spec, beta, shuffled)

    @given(st.integers(0, 10_000), st.integers(1, 4))
    @settings(max_examples=15, deadline=None)
    def test_nonnegative(self, seed, df):
        data = _case2(seed, 150)
        spec = ModelSpec(LogNormal.fit(data.y1), LOG, SmootherBasis.for_sample("poly", df, 150))
        beta = ols_init(data, LOG, spec.basis).beta
        assert l1_discrepancy(spec, beta, data) >= 0.0

    def test_low_df_preferred_for_affine_truth(self):
        wins = 0
        for seed in range(8):
            data = _case2(100 + seed, 1000)
            f1 = LogNormal.fit(data.y1)
            score = {}
            for df in (1, 8):
                basis = SmootherBasis.for_sample("poly", df, 1000)
                score[df] = l1_discrepancy(ModelSpec(f1, LOG, basis),
                                           ols_init(data, LOG, basis).beta, data)
            wins += score[1] < score[8]
        assert wins >= 5


class TestSelect:
    @pytest.mark.parametrize("family", ["natural-cubic-spline", "orthonormal-polynomial"])
    def test_matches_brute_force(self, family):
        data = _case2(7, 300)
        scores = _brute_force(data, family, 5)
        sel = select_df(data, "lognormal", LOG, family, 5)
        assert sel.scores == scores
        finite = {k: v for k, v in scores.items() if np.isfinite(v)}
        assert sel.chosen == min(finite, key=lambda k: (finite[k], k))

    def test_singleton(self):
        assert select_df(_case2(8, 200), "lognormal", LOG, "spline", 1).chosen == 1

    def test_affine_family_single_candidate(self):
        sel = select_df(_case2(9, 200), "lognormal", LOG, "normal", 10)
        assert list(sel.scores) == [1] and sel.chosen == 1

    def test_threaded_matches_serial(self):
        data = _case2(10, 300)
        serial = select_df(data, "lognormal", LOG, "spline", 4, workers=1)
        threaded = select_df(data, "lognormal", LOG, "spline", 4, workers=3)
        assert serial == threaded

    def test_ties_go_to_smaller_df(self):
        data = _case2(11, 200)
        sel = select_df(data, "lognormal", LOG, "poly", 3, reference=lambda y: np.full(np.shape(y), 1e6))
        # a huge constant reference makes every score the same up to rounding
        best = min(sel.scores.values())
        assert sel.chosen == min(k for k, v in sel.scores.items() if v == best)

    def test_all_infeasible(self, monkeypatch):
        import gqte.selection as selection

        monkeypatch.setattr(selection, "l1_discrepancy", lambda *a, **k: float("inf"))
        with pytest.raises(SelectionError):
            select_df(_case2(12, 100), "lognormal", LOG, "spline", 3)

    def test_bad_df_max(self):
        with pytest.raises(DomainError):
            select_df(_case2(13, 100), "lognormal", LOG, "spline", 0)

    def test_standin_shapes(self):
        from gqte.simulation import load_standin

        cases, controls = load_standin()
        sel = select_df(TwoSampleData(cases, controls), "lognormal", LOG, "spline", 10)
        assert 1 <= sel.chosen <= 10


def test_worker_count(monkeypatch):
    monkeypatch.setenv("GQTE_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("GQTE_THREADS", "zero")
    assert worker_count() == 1
    monkeypatch.setenv("GQTE_THREADS", "-4")
    assert worker_count() == 1


def test_kde_reference_default_matches_explicit():
    data = _case2(14, 200)
    spec = ModelSpec(LogNormal.fit(data.y1), LOG, SmootherBasis("spline", 2))
    beta = ols_init(data, LOG, spec.basis).beta
    assert l1_discrepancy(spec, beta, data) == l1_discrepancy(
        spec, beta, data, KernelDensityEstimate(data.y2))
