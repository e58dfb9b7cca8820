"""Rao-Blackwellized treatment-effect functionals from posterior coefficient draws.

For each retained coefficient vector the two quantile functions are read off
the opposite sample's order statistics, a functional is evaluated per draw,
and the draws are averaged.  Credible bands are pointwise empirical 2.5% and
97.5% percentiles of the per-draw values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import PercentGrid, check_percentiles, plotting_positions
from .errors import DomainError, InputError
from .induced import ModelSpec, TwoSampleData

__all__ = [
    "GqteEstimate",
    "GqteFunctional",
    "estimate",
    "interpolate_quantile",
    "parse_functional",
    "per_draw_quantiles",
    "per_draw_values",
]

KINDS = ("qte", "ate", "moment", "variance", "sd", "tailweight", "ir")
GRID_KINDS = ("qte", "tailweight")


@dataclass(frozen=True)
class GqteFunctional:
    """Selector for the functional of the two quantile functions.

    ``grid`` is used by ``qte`` and ``tailweight``; ``r`` by ``moment``;
    ``p`` by ``ir`` (inter-p-range ratio difference, ``0 < p < 0.5``).
    """

    kind: str
    grid: PercentGrid | None = None
    r: int | None = None
    p: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown functional {self.kind!r}")
        if self.kind in GRID_KINDS and self.grid is None:
            object.__setattr__(self, "grid", PercentGrid.equispaced())
        if self.kind == "moment" and (self.r is None or int(self.r) != self.r or self.r < 1):
            raise DomainError("moment order r must be a positive integer")
        if self.kind == "ir" and not (self.p is not None and 0.0 < self.p < 0.5):
            raise DomainError("inter-range percentile must lie in (0, 0.5)")

    @property
    def is_grid(self) -> bool:
        return self.kind in GRID_KINDS

    def label(self) -> str:
        if self.kind == "moment":
            return f"moment:{self.r}"
        if self.kind == "ir":
            return f"ir:{self.p:g}"
        return self.kind


def parse_functional(token: str, grid: PercentGrid | None = None) -> GqteFunctional:
    """Parse ``qte``, ``ate``, ``moment:r``, ``variance``, ``sd``, ``tailweight`` or ``ir:p``."""
    name, _, arg = token.strip().partition(":")
    try:
        if name == "moment":
            return GqteFunctional("moment", r=int(arg))
        if name == "ir":
            return GqteFunctional("ir", p=float(arg))
        if arg:
            raise InputError(f"functional {name!r} takes no argument")
        return GqteFunctional(name, grid=grid if name in GRID_KINDS else None)
    except (ValueError, DomainError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad functional token {token!r}: {exc}") from None


@dataclass(frozen=True)
class GqteEstimate:
    functional: GqteFunctional
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    grid: np.ndarray | None = None
    draws: np.ndarray | None = None

    def rows(self) -> list[dict]:
        if self.grid is None:
            return [{"quantity": self.functional.label(), "mean": float(self.mean[0]),
                     "lo95": float(self.lower[0]), "hi95": float(self.upper[0])}]
        return [{"p": float(p), "mean": float(m), "lo95": float(lo), "hi95": float(hi)}
                for p, m, lo, hi in zip(self.grid, self.mean, self.lower, self.upper)]


def interpolate_quantile(pairs_p, pairs_q, p_star):
    """Piecewise-linear interpolation of ``(p, Q)`` pairs, flat beyond the ends."""
    pairs_p = np.asarray(pairs_p, dtype=float)
    pairs_q = np.asarray(pairs_q, dtype=float)
    if pairs_p.size == 0:
        raise InputError("cannot interpolate an empty quantile table")
    out = np.interp(p_star, pairs_p, pairs_q)
    return out if np.ndim(out) else float(out)


def _ratios(spec: ModelSpec, beta: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``h^{-1}(X(p) beta)`` for a stack of coefficient draws; shape (M, len(p))."""
    xb = np.atleast_2d(beta) @ spec.basis.eval(p).T
    r = spec.link.inverse(xb)
    if np.any(r <= 0):
        raise DomainError("quantile ratio is not positive for some draw")
    return r


def per_draw_quantiles(beta, data: TwoSampleData, spec: ModelSpec, power: float | None = None):
    """Estimated quantile functions implied by coefficient draw(s).

    Returns ``(p2, Q1)`` and ``(p1, Q2)`` with ``Q1(p2_i) = y2_(i) h^{-1}(X(p2_i) beta)``
    and ``Q2(p1_i) = y1_(i) / h^{-1}(X(p1_i) beta)``.  ``power`` undoes a power
    transform applied on ingest, mapping every quantile to ``Q ** (1 / power)``.
    For a single draw the quantile arrays are 1-D, otherwise (M, n).
    """
    beta = np.asarray(beta, dtype=float)
    p2, p1 = plotting_positions(data.n2), plotting_positions(data.n1)
    q1 = data.y2 * _ratios(spec, beta, p2)
    q2 = data.y1 / _ratios(spec, beta, p1)
    if power is not None:
        q1, q2 = q1 ** (1.0 / power), q2 ** (1.0 / power)
    if beta.ndim == 1:
        q1, q2 = q1[0], q2[0]
    return (p2, q1), (p1, q2)


def _interp_rows(p_tab, q_tab, p_star):
    return np.stack([np.interp(p_star, p_tab, row) for row in q_tab])


def per_draw_values(functional: GqteFunctional, beta, data: TwoSampleData, spec: ModelSpec,
                    power: float | None = None, chunk: int = 500) -> np.ndarray:
    """Functional value for every draw; shape (M, G) with G = grid size or 1."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    return np.concatenate([_values(functional, beta[i:i + chunk], data, spec, power)
                           for i in range(0, beta.shape[0], chunk)])


def _values(functional, beta, data, spec, power):
    kind = functional.kind

    if kind == "tailweight":
        grid = check_percentiles(np.asarray(functional.grid))
        xpb = beta @ spec.basis.deriv(grid).T
        if spec.link.kind == "log":
            tw = xpb
        else:
            xb = beta @ spec.basis.eval(grid).T
            if np.any(xb <= 0):
                raise DomainError("tailweight needs a positive quantile ratio on the grid")
            # d/dp log h^{-1}(X beta) by the chain rule
            tw = xpb * spec.link.inverse_deriv(xb) / spec.link.inverse(xb)
        return tw / power if power is not None else tw

    (p2, q1), (p1, q2) = per_draw_quantiles(beta, data, spec, power)
    if kind == "qte":
        grid = np.asarray(functional.grid)
        return _interp_rows(p2, q1, grid) - _interp_rows(p1, q2, grid)
    if kind == "ate":
        return (q1.mean(axis=1) - q2.mean(axis=1))[:, None]
    if kind == "moment":
        r = functional.r
        return ((q1**r).mean(axis=1) - (q2**r).mean(axis=1))[:, None]
    if kind in ("variance", "sd"):
        m1, m2 = q1.mean(axis=1), q2.mean(axis=1)
        if kind == "variance":
            d_mu2 = (q1**2).mean(axis=1) - (q2**2).mean(axis=1)
            return (d_mu2 - (m1**2 - m2**2))[:, None]
        v1 = (q1**2).mean(axis=1) - m1**2
        v2 = (q2**2).mean(axis=1) - m2**2
        return (np.sqrt(np.maximum(v1, 0.0)) - np.sqrt(np.maximum(v2, 0.0)))[:, None]
    # inter-p-range ratio difference
    pl, pu = functional.p, 1.0 - functional.p
    ratio1 = _interp_rows(p2, q1, [pu])[:, 0] / _interp_rows(p2, q1, [pl])[:, 0]
    ratio2 = _interp_rows(p1, q2, [pu])[:, 0] / _interp_rows(p1, q2, [pl])[:, 0]
    return (ratio1 - ratio2)[:, None]


def estimate(functional: GqteFunctional, draws, data: TwoSampleData, spec: ModelSpec,
             power: float | None = None, keep_draws: bool = False) -> GqteEstimate:
    """Posterior mean and pointwise 95% band of a functional.

    ``draws`` is a :class:`~gqte.mcmc.PosteriorDraws` or a bare (M, df+1) array
    of coefficient draws.
    """
    beta = getattr(draws, "beta", draws)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if beta.shape[0] == 0:
        raise InputError("no posterior draws to average")
    values = per_draw_values(functional, beta, data, spec, power)
    mean = values.mean(axis=0)
    lower, upper = np.percentile(values, [2.5, 97.5], axis=0)
    # percentile interpolation can undercut the mean by rounding on flat columns
    lower, upper = np.minimum(lower, mean), np.maximum(upper, mean)
    grid = np.asarray(functional.grid) if functional.is_grid else None
    return GqteEstimate(functional, mean, lower, upper, grid, values if keep_draws else None)
