"""Control-sample density induced by a case density and a smooth quantile ratio.

With ``h(Q1(p) / Q2(p)) = X(p) beta`` the control quantile function is
``Q2(p) = Q1(p) / h^{-1}(X(p) beta)`` and its density quantile function has
the closed form evaluated by :func:`f2_density_quantile`.  The percentiles of
the observed controls are recovered by Newton iteration on ``Q2``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .basis import LinkFunction, SmootherBasis, check_percentiles, plotting_positions
from .densities import CaseDensity
from .errors import (
    ConvergenceError,
    DomainError,
    GqteError,
    InputError,
    SingularityError,
)

__all__ = [
    "AUDIT_GRID",
    "ModelSpec",
    "TwoSampleData",
    "audit_constraint",
    "constraint_satisfied",
    "f2_density_quantile",
    "log_f2_density_quantile",
    "log_likelihood",
    "q1_from_q2",
    "q2_from_percentile",
    "solve_percentiles",
]

AUDIT_GRID = np.arange(1, 200) / 200.0
SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 500
SOLVER_EPS = 1e-10
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    f1: CaseDensity
    link: LinkFunction
    basis: SmootherBasis

    def __post_init__(self):
        if self.link.kind == "log" and not self.f1.positive_support:
            raise DomainError("log link needs a case density on the positive reals")

    def with_f1(self, f1: CaseDensity) -> ModelSpec:
        return replace(self, f1=f1)

    def with_basis(self, basis: SmootherBasis) -> ModelSpec:
        return replace(self, basis=basis)


class TwoSampleData:
    """Case sample ``y1`` and control sample ``y2``, both stored sorted."""

    def __init__(self, y1, y2):
        self.y1 = self._validate(y1, "y1")
        self.y2 = self._validate(y2, "y2")

    @staticmethod
    def _validate(y, label):
        y = np.asarray(y, dtype=float).ravel()
        if y.size == 0:
            raise InputError(f"{label} is empty")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            raise InputError(f"{label} must contain finite positive values")
        y = np.sort(y)
        y.setflags(write=False)
        return y

    @property
    def n1(self) -> int:
        return self.y1.size

    @property
    def n2(self) -> int:
        return self.y2.size

    def __repr__(self):
        return f"TwoSampleData(n1={self.n1}, n2={self.n2})"


def _check_beta(spec: ModelSpec, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.basis.size,):
        raise DomainError(f"beta must have length {spec.basis.size}, got shape {beta.shape}")
    return beta


def _smoother(spec: ModelSpec, beta, p):
    """Return ``h^{-1}(X beta)``, its derivative in ``X beta``, ``X beta`` and ``X' beta``."""
    xb = spec.basis.eval(p) @ beta
    xpb = spec.basis.deriv(p) @ beta
    return spec.link.inverse(xb), spec.link.inverse_deriv(xb), xb, xpb


def q1_from_q2(spec: ModelSpec, beta, q2, p):
    """Case quantile implied by a control quantile: ``q2 * h^{-1}(X(p) beta)``."""
    beta = _check_beta(spec, beta)
    r, _, _, _ = _smoother(spec, beta, check_percentiles(p))
    out = np.asarray(q2, dtype=float) * r
    return out if np.ndim(out) else float(out)


def q2_from_percentile(spec: ModelSpec, beta, p, f1: CaseDensity | None = None):
    """Model control quantile ``Q2(p) = Q1(p) / h^{-1}(X(p) beta)``."""
    f1 = spec.f1 if f1 is None else f1
    beta = _check_beta(spec, beta)
    p = check_percentiles(p)
    r, _, _, _ = _smoother(spec, beta, p)
    return f1.quantile(p) / r


def _constraint_terms(spec, beta, p, f1):
    # returns (lhs, rhs, ratio_ok); the constraint reads lhs <= rhs
    r, _, xb, xpb = _smoother(spec, beta, p)
    q1 = f1.quantile(p)
    dens = np.asarray(f1.pdf(q1), dtype=float)
    with np.errstate(divide="ignore"):
        rhs = 1.0 / (dens * q1)
    if spec.link.kind == "log":
        return xpb, rhs, np.ones_like(xb, dtype=bool)
    ok = xb > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(ok, xpb / np.where(ok, xb, 1.0), np.inf)
    return lhs, rhs, ok


def constraint_satisfied(spec: ModelSpec, beta, p, f1: CaseDensity | None = None):
    """Pointwise positivity constraint on the induced density.

    Log link: ``X'(p) beta <= 1 / (f1(Q1(p)) Q1(p))``.  Identity link:
    ``X(p) beta > 0`` and ``X'(p) beta / X(p) beta <= 1 / (f1(Q1(p)) Q1(p))``.
    Returns a boolean (array for array ``p``).
    """
    f1 = spec.f1 if f1 is None else f1
    beta = _check_beta(spec, beta)
    p = check_percentiles(p)
    lhs, rhs, ok = _constraint_terms(spec, beta, p, f1)
    out = ok & (lhs <= rhs)
    return out if out.ndim else bool(out)


@lru_cache(maxsize=256)
def _audit_cache(f1: CaseDensity, basis: SmootherBasis):
    q1 = f1.quantile(AUDIT_GRID)
    dens = np.asarray(f1.pdf(q1), dtype=float)
    with np.errstate(divide="ignore"):
        rhs = 1.0 / (dens * q1)
    return basis.eval(AUDIT_GRID), basis.deriv(AUDIT_GRID), rhs


def audit_constraint(spec: ModelSpec, beta, f1: CaseDensity | None = None) -> bool:
    """Constraint check on the fixed 199-point audit grid."""
    f1 = spec.f1 if f1 is None else f1
    beta = _check_beta(spec, beta)
    try:
        X, Xp, rhs = _audit_cache(f1, spec.basis)
    except TypeError:  # unhashable family instance
        X, Xp = spec.basis.eval(AUDIT_GRID), spec.basis.deriv(AUDIT_GRID)
        q1 = f1.quantile(AUDIT_GRID)
        rhs = 1.0 / (np.asarray(f1.pdf(q1)) * q1)
    xb, xpb = X @ beta, Xp @ beta
    if spec.link.kind == "log":
        return bool(np.all(xpb <= rhs))
    if np.any(xb <= 0):
        return False
    return bool(np.all(xpb / xb <= rhs))


def _log_f2_parts(spec, beta, q2, p, f1):
    r, dr, xb, xpb = _smoother(spec, beta, p)
    if np.any(r <= 0):
        raise SingularityError("quantile ratio is not positive")
    q2 = np.asarray(q2, dtype=float)
    q1 = q2 * r
    logf1 = np.asarray(f1.logpdf(q1), dtype=float)
    denom = 1.0 - np.exp(logf1) * xpb * q2 * dr
    return logf1 + np.log(r), denom


def log_f2_density_quantile(spec: ModelSpec, beta, q2, p, f1: CaseDensity | None = None):
    """Logarithm of :func:`f2_density_quantile`; ``-inf`` where ``f1`` vanishes."""
    f1 = spec.f1 if f1 is None else f1
    beta = _check_beta(spec, beta)
    p = check_percentiles(p)
    lognum, denom = _log_f2_parts(spec, beta, q2, p, f1)
    if np.any(denom <= SINGULAR_TOL):
        raise SingularityError("induced density denominator is not positive")
    out = lognum - np.log(denom)
    return out if np.ndim(out) else float(out)


def f2_density_quantile(spec: ModelSpec, beta, q2, p, f1: CaseDensity | None = None):
    """Control density quantile ``f2(Q2(p))`` evaluated at control quantile ``q2``.

    Numerator ``f1(q2 r) r`` and denominator ``1 - f1(q2 r) X'(p) beta q2 dr``,
    with ``r = h^{-1}(X(p) beta)`` and ``dr`` its derivative in ``X(p) beta``.
    Raises :class:`SingularityError` when the denominator is at or below 1e-12.
    """
    out = np.exp(log_f2_density_quantile(spec, beta, q2, p, f1))
    return out if np.ndim(out) else float(out)


def _q2_and_density(spec, beta, p, f1):
    r, dr, xb, xpb = _smoother(spec, beta, p)
    if np.any(r <= 0):
        raise SingularityError("quantile ratio is not positive")
    q1 = f1.quantile(p)
    q2 = q1 / r
    dens1 = np.asarray(f1.pdf(q1), dtype=float)
    denom = 1.0 - dens1 * xpb * q2 * dr
    return q2, dens1 * r, denom


def solve_percentiles(spec: ModelSpec, beta, y2, f1: CaseDensity | None = None,
                      tol: float = SOLVER_TOL, max_iter: int = SOLVER_MAX_ITER) -> np.ndarray:
    """Percentiles ``p_j`` with ``Q2(p_j) = y2[j]`` for sorted controls ``y2``.

    Newton iteration ``p <- p + (y - Q2(p)) f2(Q2(p))`` started from the
    plotting positions, with step halving to stay inside ``(eps, 1 - eps)``.
    Once Newton stalls at floating-point resolution in ``p`` the neighbouring
    representable percentiles are scanned for the closest fit.  Far in the
    upper tail one ulp of ``p`` can move ``Q2`` by more than ``tol``; such a
    point is accepted when its error is within that one-ulp gap.
    """
    f1 = spec.f1 if f1 is None else f1
    beta = _check_beta(spec, beta)
    y = np.asarray(y2, dtype=float)
    n = y.size
    p = plotting_positions(n)
    lo, hi = SOLVER_EPS, 1.0 - SOLVER_EPS
    active = np.arange(n)
    stalled_best = {}
    for _ in range(max_iter):
        pa = p[active]
        q2, num, denom = _q2_and_density(spec, beta, pa, f1)
        resid = y[active] - q2
        done = np.abs(resid) < tol
        if np.any(denom[~done] <= SINGULAR_TOL):
            raise SingularityError("induced density denominator is not positive")
        keep = ~done
        active, pa, resid = active[keep], pa[keep], resid[keep]
        if active.size == 0:
            return p
        step = resid * num[keep] / denom[keep]
        new = pa + step
        for _ in range(64):
            out = (new <= lo) | (new >= hi) | ~np.isfinite(new)
            if not out.any():
                break
            step = np.where(out, 0.5 * step, step)
            new = pa + step
        new = np.clip(new, lo, hi)
        stuck = np.abs(new - pa) <= 4.0 * np.spacing(pa)
        if stuck.any():
            for idx in active[stuck]:
                stalled_best[idx] = _polish(spec, beta, f1, y[idx], p[idx])
        p[active] = new
        if stuck.any():
            for idx in active[stuck]:
                p[idx] = stalled_best[idx][0]
            # accept when y falls within one ulp step of p, even above tol
            ok = np.array([stalled_best[i][1] < max(tol, stalled_best[i][2])
                           for i in active[stuck]])
            bad = active[stuck][~ok]
            if bad.size:
                raise ConvergenceError("percentile solver stalled above tolerance", int(bad[0]))
            active = active[~stuck]
            if active.size == 0:
                return p
    raise ConvergenceError("percentile solver exceeded the iteration limit", int(active[0]))


def _polish(spec, beta, f1, y, p, width: int = 4):
    # scan a few representable neighbours of p for the best fit to y
    cands = [p]
    up = down = p
    for _ in range(width):
        up, down = np.nextafter(up, 1.0), np.nextafter(down, 0.0)
        cands.extend([up, down])
    cands = np.clip(np.array(cands), SOLVER_EPS, 1.0 - SOLVER_EPS)
    q2 = q2_from_percentile(spec, beta, cands, f1)
    err = np.abs(q2 - y)
    k = int(np.argmin(err))
    # gap to the adjacent representable percentiles: the best any p can do
    pk = cands[k]
    nb = np.clip([np.nextafter(pk, 0.0), np.nextafter(pk, 1.0)], SOLVER_EPS, 1.0 - SOLVER_EPS)
    resolution = float(np.max(np.abs(q2_from_percentile(spec, beta, nb, f1) - q2[k])))
    return float(pk), float(err[k]), resolution


def log_likelihood(spec: ModelSpec, beta, data: TwoSampleData,
                   f1: CaseDensity | None = None) -> float:
    """Joint log-likelihood of both samples; ``-inf`` whenever the model is inadmissible."""
    f1 = spec.f1 if f1 is None else f1
    beta = _check_beta(spec, beta)
    if not audit_constraint(spec, beta, f1):
        return -np.inf
    ll1 = float(np.sum(f1.logpdf(data.y1)))
    if not np.isfinite(ll1):
        return -np.inf
    try:
        p = solve_percentiles(spec, beta, data.y2, f1)
        if not np.all(constraint_satisfied(spec, beta, p, f1)):
            return -np.inf
        ll2 = float(np.sum(log_f2_density_quantile(spec, beta, data.y2, p, f1)))
    except (GqteError, FloatingPointError):
        return -np.inf
    return ll1 + ll2 if np.isfinite(ll2) else -np.inf
