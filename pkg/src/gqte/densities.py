"""Parametric families for the case sample and a Gaussian kernel density estimate.

Each family is an immutable dataclass exposing vectorized ``pdf``, ``logpdf``,
``cdf`` and ``quantile`` plus the bookkeeping the sampler needs: an
unconstrained parameterization, a log prior and a maximum-likelihood fit on
the case sample alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import ClassVar

import numpy as np
from scipy import special, stats

from .basis import check_percentiles
from .errors import DomainError, InputError, NumericError

__all__ = [
    "FAMILIES",
    "CaseDensity",
    "Gamma",
    "GammaScaleMixture",
    "KernelDensityEstimate",
    "LogNormal",
    "Pareto",
    "Uniform",
    "density_from_echo",
    "kde_eval",
    "make_density",
    "pdf",
    "quantile",
    "silverman_bandwidth",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _positive(y) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    return y, y > 0.0


class CaseDensity:
    """Shared behaviour; concrete families override the distribution methods."""

    name: ClassVar[str] = ""
    param_names: ClassVar[tuple[str, ...]] = ()
    # entries flagged True are sampled on the log scale
    log_scaled: ClassVar[tuple[bool, ...]] = ()

    def pdf(self, y):
        out = np.exp(self.logpdf(y))
        return out if np.ndim(out) else float(out)

    def logpdf(self, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def cdf(self, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def quantile(self, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def rvs(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(rng.uniform(size=size))

    def mean(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    # parameter plumbing ---------------------------------------------------

    def params(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in self.param_names], dtype=float)

    def unconstrained(self) -> np.ndarray:
        theta = self.params()
        mask = np.array(self.log_scaled, dtype=bool)
        theta[mask] = np.log(theta[mask])
        return theta

    def with_unconstrained(self, u) -> CaseDensity:
        u = np.array(u, dtype=float)
        mask = np.array(self.log_scaled, dtype=bool)
        u[mask] = np.exp(u[mask])
        return replace(self, **dict(zip(self.param_names, u.tolist())))

    def log_jacobian(self) -> float:
        """log |d params / d unconstrained| at the current parameters."""
        u = self.unconstrained()
        return float(np.sum(u[np.array(self.log_scaled, dtype=bool)]))

    def log_prior(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def echo(self) -> dict:
        return {"family": self.name, **{k: getattr(self, k) for k in self.param_names}}

    @property
    def positive_support(self) -> bool:
        return True


@dataclass(frozen=True)
class Uniform(CaseDensity):
    """Uniform on [0, theta]."""

    theta: float
    name: ClassVar[str] = "uniform"
    param_names: ClassVar[tuple[str, ...]] = ("theta",)
    log_scaled: ClassVar[tuple[bool, ...]] = (True,)

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError("uniform theta must be positive")

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= 0.0) & (y <= self.theta)
        return np.where(inside, -np.log(self.theta), -np.inf)

    def cdf(self, y):
        return np.clip(np.asarray(y, dtype=float) / self.theta, 0.0, 1.0)

    def quantile(self, p):
        return self.theta * check_percentiles(p)

    def mean(self):
        return self.theta / 2.0

    def log_prior(self):
        # scale-invariant reference prior
        return -np.log(self.theta)

    @classmethod
    def fit(cls, y) -> Uniform:
        return cls(float(np.max(y)))


@dataclass(frozen=True)
class LogNormal(CaseDensity):
    """Log-normal with log-scale location ``mu`` and scale ``sigma``."""

    mu: float
    sigma: float
    prior_mu: tuple[float, float] = field(default=(0.0, 100.0), compare=False, repr=False)
    prior_var: tuple[float, float] = field(default=(0.01, 0.01), compare=False, repr=False)
    name: ClassVar[str] = "lognormal"
    param_names: ClassVar[tuple[str, ...]] = ("mu", "sigma")
    log_scaled: ClassVar[tuple[bool, ...]] = (False, True)

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("lognormal sigma must be positive")

    def logpdf(self, y):
        y, pos = _positive(y)
        ly = np.log(np.where(pos, y, 1.0))
        z = (ly - self.mu) / self.sigma
        out = -0.5 * z * z - ly - np.log(self.sigma) - _LOG_SQRT_2PI
        return np.where(pos, out, -np.inf)

    def cdf(self, y):
        y, pos = _positive(y)
        z = (np.log(np.where(pos, y, 1.0)) - self.mu) / self.sigma
        return np.where(pos, special.ndtr(z), 0.0)

    def quantile(self, p):
        return np.exp(self.mu + self.sigma * special.ndtri(check_percentiles(p)))

    def mean(self):
        return float(np.exp(self.mu + 0.5 * self.sigma**2))

    def log_prior(self):
        # mu ~ N(m, s^2), sigma^2 ~ InvGamma(a, b); density in (mu, sigma)
        m, s = self.prior_mu
        a, b = self.prior_var
        var = self.sigma**2
        lp = stats.norm.logpdf(self.mu, m, s)
        lp += a * np.log(b) - special.gammaln(a) - (a + 1) * np.log(var) - b / var
        return float(lp + np.log(2.0 * self.sigma))

    @classmethod
    def fit(cls, y) -> LogNormal:
        ly = np.log(np.asarray(y, dtype=float))
        return cls(float(ly.mean()), float(ly.std()))


@dataclass(frozen=True)
class Pareto(CaseDensity):
    """Pareto with shape ``a`` and minimum ``b``."""

    a: float
    b: float
    name: ClassVar[str] = "pareto"
    param_names: ClassVar[tuple[str, ...]] = ("a", "b")
    log_scaled: ClassVar[tuple[bool, ...]] = (True, True)

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError("pareto parameters must be positive")

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = y >= self.b
        ly = np.log(np.where(inside, y, self.b))
        out = np.log(self.a) + self.a * np.log(self.b) - (self.a + 1.0) * ly
        return np.where(inside, out, -np.inf)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = y >= self.b
        return np.where(inside, -np.expm1(self.a * np.log(self.b / np.where(inside, y, self.b))), 0.0)

    def quantile(self, p):
        return self.b * np.exp(-np.log1p(-check_percentiles(p)) / self.a)

    def mean(self):
        return float(self.a * self.b / (self.a - 1.0)) if self.a > 1 else float("inf")

    def log_prior(self):
        # a ~ Gamma(1, 1e-3), b log-flat
        return float(stats.gamma.logpdf(self.a, 1.0, scale=1e3) - np.log(self.b))

    @classmethod
    def fit(cls, y) -> Pareto:
        y = np.asarray(y, dtype=float)
        b = float(y.min())
        return cls(float(y.size / np.sum(np.log(y / b))), b)


@dataclass(frozen=True)
class Gamma(CaseDensity):
    """Gamma with ``shape`` and ``rate``."""

    shape: float
    rate: float
    name: ClassVar[str] = "gamma"
    param_names: ClassVar[tuple[str, ...]] = ("shape", "rate")
    log_scaled: ClassVar[tuple[bool, ...]] = (True, True)

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("gamma parameters must be positive")

    def logpdf(self, y):
        y, pos = _positive(y)
        ly = np.log(np.where(pos, y, 1.0))
        out = (self.shape * np.log(self.rate) + (self.shape - 1.0) * ly
               - self.rate * y - special.gammaln(self.shape))
        return np.where(pos, out, -np.inf)

    def cdf(self, y):
        y, pos = _positive(y)
        return np.where(pos, special.gammainc(self.shape, self.rate * np.where(pos, y, 0.0)), 0.0)

    def quantile(self, p):
        q = special.gammaincinv(self.shape, check_percentiles(p)) / self.rate
        if not np.all(np.isfinite(q)):
            raise NumericError("gamma quantile inversion failed")
        return q

    def mean(self):
        return self.shape / self.rate

    def log_prior(self):
        # shape ~ Gamma(1, 1e-3), rate ~ Gamma(1e-3, 1e-3)
        return float(stats.gamma.logpdf(self.shape, 1.0, scale=1e3)
                     + stats.gamma.logpdf(self.rate, 1e-3, scale=1e3))

    @classmethod
    def fit(cls, y) -> Gamma:
        shape, _, scale = stats.gamma.fit(np.asarray(y, dtype=float), floc=0.0)
        return cls(float(shape), float(1.0 / scale))


@dataclass(frozen=True)
class GammaScaleMixture(CaseDensity):
    """Mixture over integer shapes ``1..J`` of gamma densities sharing one rate.

    Conjugate prior metadata: ``rate ~ Gamma(alpha, delta)`` (shape, rate) and
    ``weights ~ Dirichlet(1/J, ..., 1/J)``.
    """

    weights: tuple[float, ...]
    rate: float
    alpha: float = field(default=845.0, compare=False)
    delta: float = field(default=1300.0, compare=False)
    name: ClassVar[str] = "gsm"
    param_names: ClassVar[tuple[str, ...]] = ("rate",)
    log_scaled: ClassVar[tuple[bool, ...]] = (True,)

    QUANTILE_TOL: ClassVar[float] = 1e-10
    QUANTILE_MAX_STEPS: ClassVar[int] = 200

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        if len(w) < 1:
            raise DomainError("mixture needs at least one component")
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise DomainError("mixture weights must be non-negative and sum to 1")
        if not self.rate > 0:
            raise DomainError("mixture rate must be positive")
        object.__setattr__(self, "weights", w)

    @property
    def J(self) -> int:
        return len(self.weights)

    def _active(self):
        w = np.asarray(self.weights)
        idx = np.flatnonzero(w > 0)
        return w[idx], (idx + 1).astype(float)

    def logpdf(self, y):
        y, pos = _positive(y)
        w, shapes = self._active()
        ly = np.log(np.where(pos, y, 1.0))[..., None]
        terms = (np.log(w) + shapes * np.log(self.rate) + (shapes - 1.0) * ly
                 - self.rate * np.where(pos, y, 0.0)[..., None] - special.gammaln(shapes))
        return np.where(pos, special.logsumexp(terms, axis=-1), -np.inf)

    def cdf(self, y):
        y, pos = _positive(y)
        w, shapes = self._active()
        x = self.rate * np.where(pos, y, 0.0)[..., None]
        return np.where(pos, special.gammainc(shapes, x) @ w, 0.0)

    def quantile(self, p):
        p = check_percentiles(p)
        flat = np.atleast_1d(p).ravel()
        _, shapes = self._active()
        # component quantiles are monotone in shape, so they bracket the mixture's
        lo = special.gammaincinv(shapes[0], flat) / self.rate
        hi = special.gammaincinv(shapes[-1], flat) / self.rate
        y = 0.5 * (lo + hi)
        done = np.zeros(flat.shape, dtype=bool)
        for _ in range(self.QUANTILE_MAX_STEPS):
            err = self.cdf(y) - flat
            lo = np.where(err < 0, y, lo)
            hi = np.where(err > 0, y, hi)
            dens = self.pdf(y)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = y - err / dens
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            new = np.where(bad, 0.5 * (lo + hi), step)
            done = np.abs(new - y) <= 1e-14 * np.maximum(y, 1e-300)
            y = np.where(err == 0.0, y, new)
            if np.all(done | (err == 0.0)):
                break
        resid = np.abs(self.cdf(y) - flat)
        if np.any(resid > self.QUANTILE_TOL):
            raise NumericError("mixture quantile inversion did not converge")
        return y.reshape(np.shape(p)) if np.ndim(p) else float(y[0])

    def rvs(self, rng, size):
        comp = rng.choice(self.J, size=size, p=np.asarray(self.weights))
        return rng.gamma(comp + 1.0, 1.0 / self.rate)

    def mean(self):
        return float(np.dot(self.weights, np.arange(1, self.J + 1)) / self.rate)

    def params(self):
        return np.concatenate(([self.rate], self.weights))

    def unconstrained(self):
        return np.array([np.log(self.rate)])

    def log_prior(self):
        lp = stats.gamma.logpdf(self.rate, self.alpha, scale=1.0 / self.delta)
        w = np.asarray(self.weights)
        if np.any(w <= 0):
            return -np.inf
        lp += stats.dirichlet.logpdf(w, np.full(self.J, 1.0 / self.J))
        return float(lp)

    def echo(self):
        return {"family": self.name, "rate": self.rate, "weights": list(self.weights),
                "alpha": self.alpha, "delta": self.delta}

    @classmethod
    def fit(cls, y, J: int = 40, iters: int = 500, tol: float = 1e-8, **prior) -> GammaScaleMixture:
        """EM fit with a fixed number of components."""
        y = np.asarray(y, dtype=float)
        shapes = np.arange(1, J + 1, dtype=float)
        w = np.full(J, 1.0 / J)
        rate = shapes.mean() / y.mean()
        ly = np.log(y)[:, None]
        prev = -np.inf
        for _ in range(iters):
            terms = (np.log(np.maximum(w, 1e-300)) + shapes * np.log(rate)
                     + (shapes - 1.0) * ly - rate * y[:, None] - special.gammaln(shapes))
            norm = special.logsumexp(terms, axis=1)
            resp = np.exp(terms - norm[:, None])
            w = resp.mean(axis=0)
            rate = float(np.sum(resp @ shapes) / y.sum())
            ll = float(norm.sum())
            if abs(ll - prev) < tol * max(1.0, abs(ll)):
                break
            prev = ll
        w = np.maximum(w, 1e-12)
        return cls(tuple(w / w.sum()), rate, **prior)


FAMILIES = {cls.name: cls for cls in (Uniform, LogNormal, Pareto, Gamma, GammaScaleMixture)}


def make_density(name: str, **params) -> CaseDensity:
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown density family {name!r}") from None
    return cls(**params)


def density_from_echo(echo: dict) -> CaseDensity:
    params = {k: v for k, v in echo.items() if k != "family"}
    if echo["family"] == GammaScaleMixture.name:
        params["weights"] = tuple(params["weights"])
    return make_density(echo["family"], **params)


def pdf(f: CaseDensity, y):
    return f.pdf(y)


def quantile(f: CaseDensity, p):
    return f.quantile(p)


def silverman_bandwidth(sample) -> float:
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise InputError("Silverman bandwidth needs at least two observations")
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if not spread > 0:
        raise InputError("sample has zero spread; pass an explicit bandwidth")
    return float(0.9 * spread * x.size ** (-0.2))


@dataclass(frozen=True)
class KernelDensityEstimate:
    """Gaussian kernel density estimate; bandwidth defaults to Silverman's rule."""

    sample: np.ndarray
    bandwidth: float | None = None

    def __post_init__(self):
        x = np.asarray(self.sample, dtype=float).ravel()
        if x.size == 0:
            raise InputError("kernel density estimate needs a non-empty sample")
        bw = silverman_bandwidth(x) if self.bandwidth is None else float(self.bandwidth)
        if not bw > 0:
            raise DomainError("bandwidth must be positive")
        object.__setattr__(self, "sample", x)
        object.__setattr__(self, "bandwidth", bw)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        flat = y.ravel()
        out = np.empty(flat.size)
        # chunk to bound memory for large evaluation sets
        for start in range(0, flat.size, 2048):
            z = (flat[start:start + 2048, None] - self.sample[None, :]) / self.bandwidth
            out[start:start + 2048] = np.exp(-0.5 * z * z).mean(axis=1)
        out /= self.bandwidth * np.sqrt(2.0 * np.pi)
        return out.reshape(y.shape) if y.ndim else float(out[0])


def kde_eval(k: KernelDensityEstimate, y):
    return k(y)
