"""Bayesian two-sample treatment-effect estimation by smoothing the quantile ratio.

The case density ``f1`` is parametric; the control distribution is induced
through a basis expansion of ``h(Q1(p) / Q2(p))`` in the percentile ``p``.
Posterior draws of the basis coefficients give Rao-Blackwellized estimates of
quantile, mean, moment, spread and tail-shape differences.
"""

from __future__ import annotations

from .archive import DrawArchive, read_archive, write_archive
from .basis import LinkFunction, PercentGrid, SmootherBasis, basis_deriv, basis_eval
from .densities import (
    Gamma,
    GammaScaleMixture,
    KernelDensityEstimate,
    LogNormal,
    Pareto,
    Uniform,
    kde_eval,
    make_density,
)
from .errors import (
    ConvergenceError,
    DomainError,
    GqteError,
    InfeasibleModelError,
    InputError,
    NumericError,
    SelectionError,
    SingularityError,
)
from .functionals import GqteEstimate, GqteFunctional, estimate, interpolate_quantile
from .induced import (
    ModelSpec,
    TwoSampleData,
    audit_constraint,
    constraint_satisfied,
    f2_density_quantile,
    log_likelihood,
    q1_from_q2,
    solve_percentiles,
)
from .mcmc import PosteriorDraws, PriorSpec, SamplerConfig, diagnostics, ols_init, run_mh
from .selection import l1_discrepancy, select_df
from .simulation import MetricsReport, ScenarioSpec, generate, run_study, true_delta

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DomainError", "DrawArchive", "Gamma", "GammaScaleMixture",
    "GqteError", "GqteEstimate", "GqteFunctional", "InfeasibleModelError", "InputError",
    "KernelDensityEstimate", "LinkFunction", "LogNormal", "MetricsReport", "ModelSpec",
    "NumericError", "Pareto", "PercentGrid", "PosteriorDraws", "PriorSpec", "SamplerConfig",
    "ScenarioSpec", "SelectionError", "SingularityError", "SmootherBasis", "TwoSampleData",
    "Uniform", "audit_constraint", "basis_deriv", "basis_eval", "constraint_satisfied",
    "diagnostics", "estimate", "f2_density_quantile", "generate", "interpolate_quantile",
    "kde_eval", "l1_discrepancy", "log_likelihood", "make_density", "ols_init", "q1_from_q2",
    "read_archive", "run_mh", "run_study", "select_df", "solve_percentiles", "true_delta",
    "write_archive",
]
