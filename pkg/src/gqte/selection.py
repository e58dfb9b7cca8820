"""Degrees-of-freedom selection by an empirical L1 density discrepancy."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import LinkFunction, SmootherBasis
from .densities import FAMILIES, CaseDensity, GammaScaleMixture, KernelDensityEstimate
from .errors import DomainError, GqteError, SelectionError
from .induced import (
    ModelSpec,
    TwoSampleData,
    audit_constraint,
    constraint_satisfied,
    f2_density_quantile,
    solve_percentiles,
)
from .mcmc import ols_init

__all__ = ["DfSelection", "fit_case_density", "l1_discrepancy", "select_df", "worker_count"]


def worker_count(default: int = 1) -> int:
    """Concurrency cap from ``GQTE_THREADS`` (at least 1)."""
    try:
        return max(1, int(os.environ.get("GQTE_THREADS", default)))
    except ValueError:
        return default


def fit_case_density(family: str, y1, **options) -> CaseDensity:
    """Maximum-likelihood fit of the case family on ``y1`` alone (EM for the mixture)."""
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise DomainError(f"unknown density family {family!r}") from None
    if cls is GammaScaleMixture:
        return cls.fit(y1, **options)
    return cls.fit(y1)


def l1_discrepancy(spec: ModelSpec, beta, data: TwoSampleData,
                   reference: Callable | None = None) -> float:
    """Sum over controls of ``|f2(Q2(p_j)) - reference(y2_j)|``.

    ``reference`` defaults to a Gaussian kernel density estimate of ``y2``;
    ``spec.f1`` should carry the case-only parameter estimate.  Returns
    ``inf`` when the coefficients violate the constraint or the percentile
    solver fails.
    """
    beta = np.asarray(beta, dtype=float)
    if reference is None:
        reference = KernelDensityEstimate(data.y2)
    if not audit_constraint(spec, beta):
        return float("inf")
    try:
        p = solve_percentiles(spec, beta, data.y2)
        if not np.all(constraint_satisfied(spec, beta, p)):
            return float("inf")
        f2 = f2_density_quantile(spec, beta, data.y2, p)
    except GqteError:
        return float("inf")
    return float(np.sum(np.abs(f2 - np.asarray(reference(data.y2)))))


@dataclass(frozen=True)
class DfSelection:
    chosen: int
    scores: dict[int, float]
    f1: CaseDensity


def _candidates(basis_family: str, df_max: int) -> list[int]:
    if df_max < 1:
        raise DomainError("df_max must be at least 1")
    fam = SmootherBasis(basis_family, 0).family
    if fam in ("normal-quantile-affine", "log-survival-affine"):
        return [1]
    return list(range(1, df_max + 1))


def select_df(data: TwoSampleData, family: str | CaseDensity, link: LinkFunction,
              basis_family: str, df_max: int = 10, reference: Callable | None = None,
              workers: int | None = None, **fit_options) -> DfSelection:
    """Pick ``df`` in ``1..df_max`` minimizing the L1 discrepancy; ties go to the smaller df."""
    f1 = family if isinstance(family, CaseDensity) else fit_case_density(family, data.y1, **fit_options)
    if reference is None:
        reference = KernelDensityEstimate(data.y2)
    n = min(data.n1, data.n2)

    def score(df):
        basis = SmootherBasis.for_sample(basis_family, df, n)
        spec = ModelSpec(f1, link, basis)
        try:
            beta = ols_init(data, link, basis).beta
        except (GqteError, np.linalg.LinAlgError):
            return float("inf")
        return l1_discrepancy(spec, beta, data, reference)

    cands = _candidates(basis_family, df_max)
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(score, cands))
    else:
        values = [score(df) for df in cands]
    scores = dict(zip(cands, values))
    finite = [df for df in cands if np.isfinite(scores[df])]
    if not finite:
        raise SelectionError("no degrees-of-freedom candidate is feasible")
    chosen = min(finite, key=lambda df: (scores[df], df))
    return DfSelection(chosen=chosen, scores=scores, f1=f1)
