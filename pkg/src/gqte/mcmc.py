"""OLS initialization, blocked Metropolis-Hastings and chain diagnostics.

The coefficient block uses a fixed multivariate-t independence proposal
centred on the OLS fit of the log (or raw) ratio of paired quantiles.  The
case-density block is family specific: a Gaussian random walk on the
unconstrained parameters, or, for the gamma scale mixture, a log-scale random
walk on the shared rate followed by a Dirichlet proposal for the weights.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from .basis import LinkFunction, SmootherBasis, plotting_positions
from .densities import CaseDensity, GammaScaleMixture
from .errors import DomainError, InfeasibleModelError, NumericError
from .induced import ModelSpec, TwoSampleData, audit_constraint, log_likelihood

__all__ = [
    "OlsFit",
    "PosteriorDraws",
    "PriorSpec",
    "SamplerConfig",
    "diagnostics",
    "mh_log_ratio",
    "bootstrap_ols_cov",
    "default_proposal",
    "effective_sample_size",
    "ols_init",
    "paired_quantiles",
    "run_mh",
]


class RankDeficientError(NumericError, np.linalg.LinAlgError):
    """Design matrix of the OLS fit is (numerically) rank deficient."""


@dataclass(frozen=True)
class OlsFit:
    beta: np.ndarray
    sigma2: float
    cov: np.ndarray
    n: int


def paired_quantiles(data: TwoSampleData, pairing: str = "quantile"):
    """Paired case/control quantiles at ``p_i = i / (n + 1)``, ``n = min(n1, n2)``.

    ``pairing="truncate"`` pairs the first ``n`` order statistics of each
    sample literally.  The default ``"quantile"`` keeps the smaller sample's
    order statistics and reads the larger sample at the same plotting
    positions by linear interpolation of its own plotting positions; for
    equal sample sizes both rules coincide.
    """
    n = min(data.n1, data.n2)
    p = plotting_positions(n)
    if pairing == "truncate":
        return p, data.y1[:n].copy(), data.y2[:n].copy()
    if pairing != "quantile":
        raise DomainError(f"unknown pairing rule {pairing!r}")

    def at(y):
        if y.size == n:
            return y.copy()
        return np.interp(p, plotting_positions(y.size), y)

    return p, at(data.y1), at(data.y2)


def ols_init(data: TwoSampleData, link: LinkFunction, basis: SmootherBasis,
             pairing: str = "quantile") -> OlsFit:
    """Least-squares fit of ``h(y1(i) / y2(i))`` on ``X(p_i)`` via QR."""
    p, a, b = paired_quantiles(data, pairing)
    n, k = p.size, basis.size
    if n < k + 1:
        raise DomainError(f"OLS needs n >= df + 2 paired quantiles (n={n}, df={basis.df})")
    X = basis.eval(p)
    y = link.forward(a / b)
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficientError("OLS design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid / (n - k))
    rinv = np.linalg.solve(r, np.eye(k))
    cov = sigma2 * (rinv @ rinv.T)
    return OlsFit(beta=beta, sigma2=sigma2, cov=cov, n=n)


def bootstrap_ols_cov(data: TwoSampleData, link: LinkFunction, basis: SmootherBasis,
                      replicates: int = 200, seed: int = 0, pairing: str = "quantile") -> np.ndarray:
    """Covariance of the OLS coefficients over two-sample bootstrap resamples.

    Paired order statistics are strongly dependent, so the classical OLS
    variance understates the sampling spread of the coefficients by an order
    of magnitude; the bootstrap spread is used to scale the t proposal.
    """
    rng = np.random.default_rng(seed)
    fits = []
    for _ in range(replicates):
        resample = TwoSampleData(rng.choice(data.y1, data.n1), rng.choice(data.y2, data.n2))
        try:
            fits.append(ols_init(resample, link, basis, pairing).beta)
        except RankDeficientError:
            continue
    if len(fits) < basis.size + 2:
        raise NumericError("too few usable bootstrap fits for the proposal covariance")
    cov = np.atleast_2d(np.cov(np.array(fits).T))
    return cov + 1e-12 * np.eye(basis.size)


def default_proposal(data: TwoSampleData, spec: ModelSpec, config: SamplerConfig) -> OlsFit:
    fit = ols_init(data, spec.link, spec.basis)
    if config.proposal_cov == "ols":
        return fit
    seed = np.random.SeedSequence(config.seed).spawn(1)[0]
    cov = bootstrap_ols_cov(data, spec.link, spec.basis, config.bootstrap_replicates,
                            int(seed.generate_state(1)[0]))
    return OlsFit(beta=fit.beta, sigma2=fit.sigma2, cov=cov, n=fit.n)


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors: ``beta ~ N(beta_mean, scale * I)`` and the family's own eta prior."""

    beta_mean: np.ndarray
    beta_variance_scale: float = 100.0
    eta_log_prior: Callable[[CaseDensity], float] | None = None

    def __post_init__(self):
        if not self.beta_variance_scale > 0:
            raise DomainError("beta prior variance must be positive")
        object.__setattr__(self, "beta_mean", np.asarray(self.beta_mean, dtype=float))

    def log_prior_beta(self, beta) -> float:
        d = np.asarray(beta) - self.beta_mean
        return float(-0.5 * d @ d / self.beta_variance_scale)

    def log_prior_eta(self, f1: CaseDensity) -> float:
        if self.eta_log_prior is not None:
            return float(self.eta_log_prior(f1))
        return float(f1.log_prior())


@dataclass(frozen=True)
class SamplerConfig:
    """``iterations`` counts post-burn-in iterations; every ``thin``-th one is kept.

    ``update_eta=False`` holds the case-density parameters at their starting
    values and samples the coefficients alone.
    """

    iterations: int = 20000
    burnin: int = 5000
    thin: int = 1
    proposal_df: float = 3.0
    seed: int = 0
    proposal_scale: float = 1.0
    eta_step: float = 0.5
    gsm_rate_step: float = 0.02
    gsm_concentration: float = 50.0
    proposal_cov: str = "bootstrap"
    bootstrap_replicates: int = 200
    update_eta: bool = True

    def __post_init__(self):
        if self.proposal_cov not in ("bootstrap", "ols"):
            raise DomainError("proposal_cov must be 'bootstrap' or 'ols'")
        if self.iterations <= 0:
            raise DomainError("iterations must be positive")
        if self.burnin < 0:
            raise DomainError("burn-in must be non-negative")
        if self.thin < 1:
            raise DomainError("thin must be at least 1")
        if not self.proposal_df > 0:
            raise DomainError("proposal degrees of freedom must be positive")


@dataclass
class PosteriorDraws:
    beta: np.ndarray
    eta: np.ndarray
    eta_names: list[str]
    accepted: dict[str, int]
    proposed: dict[str, int]
    config: SamplerConfig
    f1_init: dict
    f1_last: dict
    warnings: list[str] = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.beta.shape[0]

    @property
    def acceptance(self) -> dict[str, float]:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0)
                for k in self.proposed}

    def config_echo(self) -> dict:
        return asdict(self.config)


class _MultivariateT:
    """Location-scale multivariate t with cached Cholesky factor."""

    def __init__(self, loc, scale, df):
        self.loc = np.asarray(loc, dtype=float)
        self.df = float(df)
        self.chol = np.linalg.cholesky(np.asarray(scale, dtype=float))
        d = self.loc.size
        self._const = (special.gammaln(0.5 * (self.df + d)) - special.gammaln(0.5 * self.df)
                       - 0.5 * d * np.log(self.df * np.pi)
                       - np.sum(np.log(np.diag(self.chol))))

    def draw(self, rng):
        z = rng.standard_normal(self.loc.size)
        w = rng.chisquare(self.df)
        return self.loc + (self.chol @ z) / np.sqrt(w / self.df)

    def logpdf(self, x):
        u = np.linalg.solve(self.chol, np.asarray(x) - self.loc)
        d = self.loc.size
        return float(self._const - 0.5 * (self.df + d) * np.log1p(u @ u / self.df))


def _eta_walk_cov(f1: CaseDensity, y1: np.ndarray) -> np.ndarray:
    """Inverse observed information of the case-only likelihood in unconstrained coordinates."""
    u0 = f1.unconstrained()
    d = u0.size

    def nll(u):
        return -float(np.sum(f1.with_unconstrained(u).logpdf(y1)))

    h = 1e-4 * np.maximum(1.0, np.abs(u0))
    H = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            ei, ej = np.eye(d)[i] * h[i], np.eye(d)[j] * h[j]
            H[i, j] = (nll(u0 + ei + ej) - nll(u0 + ei - ej)
                       - nll(u0 - ei + ej) + nll(u0 - ei - ej)) / (4 * h[i] * h[j])
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    if not np.all(np.isfinite(w)) or w.min() <= 0:
        return np.diag(np.full(d, 0.01))
    return (V / w) @ V.T


def mh_log_ratio(log_target_new, log_target_old, log_q_new=0.0, log_q_old=0.0) -> float:
    """Log Metropolis-Hastings ratio; ``log_q_*`` are proposal log-densities at each state."""
    return (log_target_new - log_target_old) + (log_q_old - log_q_new)


def run_mh(spec: ModelSpec, data: TwoSampleData, priors: PriorSpec, config: SamplerConfig,
           beta_init=None, proposal: OlsFit | None = None,
           loglik: Callable | None = None) -> PosteriorDraws:
    """Blocked Metropolis-Hastings over ``(beta, eta)``.

    The starting case density is ``spec.f1``.  ``proposal`` supplies the
    centre and scale of the t proposal (defaults to the OLS fit with the
    covariance chosen by ``config.proposal_cov``); ``loglik``
    replaces the joint log-likelihood, which is useful for prior-only runs.
    Every iteration consumes the same random numbers whatever ``thin`` is,
    so post-hoc thinning reproduces in-loop thinning exactly.
    """
    loglik = log_likelihood if loglik is None else loglik
    rng = np.random.default_rng(config.seed)
    if proposal is None:
        proposal = default_proposal(data, spec, config)
    tprop = _MultivariateT(proposal.beta, config.proposal_scale * proposal.cov, config.proposal_df)

    beta = np.array(proposal.beta if beta_init is None else beta_init, dtype=float)
    f1 = spec.f1
    ll = loglik(spec, beta, data, f1)
    if not np.isfinite(ll) or not audit_constraint(spec, beta, f1):
        raise InfeasibleModelError("constraint fails or likelihood is not finite at the initial state")
    lp_beta = priors.log_prior_beta(beta)
    lq_beta = tprop.logpdf(beta)

    gsm = isinstance(f1, GammaScaleMixture)
    if gsm:
        blocks = ["beta", "eta_rate", "eta_weights"]
        eta_names = ["rate"] + [f"w{j}" for j in range(1, f1.J + 1)]
    else:
        blocks = ["beta", "eta"]
        eta_names = list(f1.param_names)
    if not config.update_eta:
        blocks = ["beta"]
    elif not gsm:
        walk_chol = np.linalg.cholesky(
            (2.38**2 / len(eta_names)) * config.eta_step * _eta_walk_cov(f1, data.y1))
    accepted = dict.fromkeys(blocks, 0)
    proposed = dict.fromkeys(blocks, 0)

    total = config.burnin + config.iterations
    keep = config.iterations // config.thin
    beta_out = np.empty((keep, beta.size))
    eta_out = np.empty((keep, len(eta_names)))
    lp_eta = priors.log_prior_eta(f1)
    stored = 0

    for it in range(total):
        # beta block: independence proposal
        cand = tprop.draw(rng)
        log_u = np.log(rng.uniform())
        proposed["beta"] += 1
        ll_c = loglik(spec, cand, data, f1) if audit_constraint(spec, cand, f1) else -np.inf
        if np.isfinite(ll_c):
            lp_c, lq_c = priors.log_prior_beta(cand), tprop.logpdf(cand)
            if log_u < mh_log_ratio(ll_c + lp_c, ll + lp_beta, lq_c, lq_beta):
                beta, ll, lp_beta, lq_beta = cand, ll_c, lp_c, lq_c
                accepted["beta"] += 1

        # eta block
        if not config.update_eta:
            pass
        elif gsm:
            f1, ll, lp_eta = _gsm_step(spec, data, priors, config, rng, beta, f1, ll, lp_eta,
                                       accepted, proposed, loglik)
        else:
            u = f1.unconstrained()
            step = walk_chol @ rng.standard_normal(u.size)
            log_u = np.log(rng.uniform())
            proposed["eta"] += 1
            try:
                f1_c = f1.with_unconstrained(u + step)
            except DomainError:
                f1_c = None
            if f1_c is not None:
                lp_c = priors.log_prior_eta(f1_c)
                ll_c = loglik(spec, beta, data, f1_c) if np.isfinite(lp_c) else -np.inf
                if np.isfinite(ll_c):
                    log_ratio = (ll_c + lp_c + f1_c.log_jacobian()
                                 - ll - lp_eta - f1.log_jacobian())
                    if log_u < log_ratio:
                        f1, ll, lp_eta = f1_c, ll_c, lp_c
                        accepted["eta"] += 1

        if it >= config.burnin and (it - config.burnin) % config.thin == 0 and stored < keep:
            beta_out[stored] = beta
            eta_out[stored] = f1.params()
            stored += 1

    notes = []
    if accepted["beta"] == 0:
        notes.append("degenerate chain: every beta proposal was rejected")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return PosteriorDraws(beta=beta_out, eta=eta_out, eta_names=eta_names,
                          accepted=accepted, proposed=proposed, config=config,
                          f1_init=spec.f1.echo(), f1_last=f1.echo(), warnings=notes)


def _gsm_step(spec, data, priors, config, rng, beta, f1, ll, lp_eta, accepted, proposed, loglik):
    # shared rate: random walk on log scale; the log-Jacobian is log(rate)
    eps = rng.standard_normal()
    log_u = np.log(rng.uniform())
    proposed["eta_rate"] += 1
    rate_c = f1.rate * np.exp(config.gsm_rate_step * eps)
    f1_c = GammaScaleMixture(f1.weights, rate_c, alpha=f1.alpha, delta=f1.delta)
    lp_c = priors.log_prior_eta(f1_c)
    ll_c = loglik(spec, beta, data, f1_c) if np.isfinite(lp_c) else -np.inf
    if np.isfinite(ll_c):
        log_ratio = ll_c + lp_c + np.log(rate_c) - ll - lp_eta - np.log(f1.rate)
        if log_u < log_ratio:
            f1, ll, lp_eta = f1_c, ll_c, lp_c
            accepted["eta_rate"] += 1

    # weights: Dirichlet centred on the current weights, with Hastings correction
    c = config.gsm_concentration
    floor = 1e-3
    w = np.asarray(f1.weights)
    alpha_fwd = c * w + floor
    w_c = rng.dirichlet(alpha_fwd)
    log_u = np.log(rng.uniform())
    proposed["eta_weights"] += 1
    if np.all(w_c > 0) and np.all(np.isfinite(w_c)):
        w_c = w_c / w_c.sum()
        f1_c = GammaScaleMixture(tuple(w_c), f1.rate, alpha=f1.alpha, delta=f1.delta)
        lp_c = priors.log_prior_eta(f1_c)
        ll_c = loglik(spec, beta, data, f1_c) if np.isfinite(lp_c) else -np.inf
        if np.isfinite(ll_c):
            alpha_rev = c * w_c + floor
            log_q_fwd = stats.dirichlet.logpdf(w_c, alpha_fwd)
            log_q_rev = stats.dirichlet.logpdf(w, alpha_rev)
            log_ratio = ll_c + lp_c - ll - lp_eta + log_q_rev - log_q_fwd
            if np.isfinite(log_ratio) and log_u < log_ratio:
                f1, ll, lp_eta = f1_c, ll_c, lp_c
                accepted["eta_weights"] += 1
    return f1, ll, lp_eta


def effective_sample_size(x) -> float:
    """ESS from the initial positive sequence of autocorrelation pair sums."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    var = float(xc @ xc) / n
    if var <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        return 1.0
    spec = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(spec * np.conj(spec))[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    for k in range(n // 2):
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    # strongly antithetic chains can push tau toward zero; cap ESS at n log10(n)
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def _summarize(chain: np.ndarray) -> dict:
    return {
        "mean": chain.mean(axis=0).tolist(),
        "sd": chain.std(axis=0, ddof=1).tolist() if chain.shape[0] > 1 else [0.0] * chain.shape[1],
        "ess": [effective_sample_size(col) for col in chain.T],
        "ci95": np.percentile(chain, [2.5, 97.5], axis=0).T.tolist(),
    }


def diagnostics(draws: PosteriorDraws) -> dict:
    """Acceptance rates, posterior means/sds, ESS and 95% central intervals."""
    if draws.M < 10:
        raise DomainError("diagnostics need at least 10 retained draws")
    return {
        "draws": draws.M,
        "acceptance": draws.acceptance,
        "accepted": dict(draws.accepted),
        "proposed": dict(draws.proposed),
        "beta": _summarize(draws.beta),
        "eta": {"names": list(draws.eta_names), **_summarize(draws.eta)},
        "warnings": list(draws.warnings),
    }
