"""Percentile grids, smoother bases, link functions and quantile calculus.

A smoother basis maps a percentile ``p`` to a design row ``X(p)`` of length
``df + 1`` whose first entry is the constant 1.  Polynomial and spline
families are orthonormalized against a fixed 1001-point uniform grid on
(0, 1); the two affine families are left raw because their coefficients
carry a closed-form meaning (location/scale shifts).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy import special

from .errors import DomainError, SingularityError

__all__ = [
    "BASIS_FAMILIES",
    "LinkFunction",
    "PercentGrid",
    "SmootherBasis",
    "basis_deriv",
    "basis_eval",
    "check_percentiles",
    "plotting_positions",
    "quantile_density",
    "reference_grid",
]

POLYNOMIAL = "orthonormal-polynomial"
SPLINE = "natural-cubic-spline"
NORMAL_AFFINE = "normal-quantile-affine"
LOGSURV_AFFINE = "log-survival-affine"
BASIS_FAMILIES = (POLYNOMIAL, SPLINE, NORMAL_AFFINE, LOGSURV_AFFINE)

_ALIASES = {
    "poly": POLYNOMIAL,
    "polynomial": POLYNOMIAL,
    "spline": SPLINE,
    "ns": SPLINE,
    "normal": NORMAL_AFFINE,
    "normal-affine": NORMAL_AFFINE,
    "logsurv": LOGSURV_AFFINE,
    "logsurv-affine": LOGSURV_AFFINE,
}

REFERENCE_GRID_SIZE = 1001
DEFAULT_BOUNDARY = (0.005, 0.995)
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def reference_grid(size: int = REFERENCE_GRID_SIZE) -> np.ndarray:
    """Equispaced interior points ``i / (size + 1)``, ``i = 1..size``."""
    return np.arange(1, size + 1) / (size + 1.0)


def plotting_positions(n: int) -> np.ndarray:
    """Percentiles ``i / (n + 1)`` assigned to the order statistics of a sample."""
    if n < 1:
        raise DomainError("plotting positions need n >= 1")
    return np.arange(1, n + 1) / (n + 1.0)


def check_percentiles(p) -> np.ndarray:
    """Return ``p`` as a float array, raising if any entry is outside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("percentiles must lie strictly inside (0, 1)")
    return arr


@dataclass(frozen=True)
class PercentGrid:
    """Strictly increasing, non-empty sequence of percentiles in (0, 1)."""

    points: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(v) for v in np.atleast_1d(self.points))
        if not pts:
            raise DomainError("percentile grid is empty")
        check_percentiles(pts)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise DomainError("percentile grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def equispaced(cls, size: int = 99, lo: float = 0.01, hi: float = 0.99) -> PercentGrid:
        return cls(tuple(np.linspace(lo, hi, size)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.points, dtype=dtype)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class SmootherBasis:
    """Design row ``X(p, df)`` and its derivative for one basis family.

    ``df`` counts the non-intercept columns.  ``boundary`` holds the two
    boundary knots of the natural cubic spline and is ignored by the other
    families; interior knots sit at ``i / df`` for ``i = 1..df-1``.
    """

    family: str
    df: int
    boundary: tuple[float, float] = DEFAULT_BOUNDARY
    _coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        family = _ALIASES.get(self.family, self.family)
        if family not in BASIS_FAMILIES:
            raise DomainError(f"unknown basis family {self.family!r}")
        df = int(self.df)
        if df < 0 or df != self.df:
            raise DomainError("df must be a non-negative integer")
        if family in (NORMAL_AFFINE, LOGSURV_AFFINE) and df > 1:
            raise DomainError(f"{family} supports df in {{0, 1}} only")
        lo, hi = (float(b) for b in self.boundary)
        if not 0.0 <= lo < hi <= 1.0:
            raise DomainError("spline boundary knots must satisfy 0 <= lo < hi <= 1")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "df", df)
        object.__setattr__(self, "boundary", (lo, hi))
        object.__setattr__(self, "_coef", self._orthonormalizer())

    @classmethod
    def for_sample(cls, family: str, df: int, n: int) -> SmootherBasis:
        """Basis whose spline boundary knots sit at the extreme plotting positions."""
        return cls(family, df, boundary=(1.0 / (n + 1.0), n / (n + 1.0)))

    @property
    def size(self) -> int:
        return self.df + 1

    @cached_property
    def knots(self) -> np.ndarray:
        lo, hi = self.boundary
        interior = np.arange(1, self.df) / self.df if self.df > 1 else np.empty(0)
        return np.concatenate(([lo], interior, [hi]))

    # raw (non-orthonormalized) columns -----------------------------------

    def _raw(self, p: np.ndarray) -> np.ndarray:
        if self.df == 0:
            return np.ones(p.shape + (1,))
        if self.family == POLYNOMIAL:
            return legendre.legvander(2.0 * p - 1.0, self.df)
        if self.family == SPLINE:
            return self._spline_raw(p, deriv=False)
        if self.family == NORMAL_AFFINE:
            return np.stack([np.ones_like(p), special.ndtri(p)], axis=-1)
        return np.stack([np.ones_like(p), np.log1p(-p)], axis=-1)

    def _raw_deriv(self, p: np.ndarray) -> np.ndarray:
        if self.df == 0:
            return np.zeros(p.shape + (1,))
        if self.family == POLYNOMIAL:
            t = 2.0 * p - 1.0
            cols = [np.zeros_like(p)]
            for k in range(1, self.df + 1):
                unit = np.zeros(k + 1)
                unit[k] = 1.0
                cols.append(2.0 * legendre.legval(t, legendre.legder(unit)))
            return np.stack(cols, axis=-1)
        if self.family == SPLINE:
            return self._spline_raw(p, deriv=True)
        if self.family == NORMAL_AFFINE:
            z = special.ndtri(p)
            return np.stack([np.zeros_like(p), _SQRT_2PI * np.exp(0.5 * z * z)], axis=-1)
        return np.stack([np.zeros_like(p), -1.0 / (1.0 - p)], axis=-1)

    def _spline_raw(self, p: np.ndarray, deriv: bool) -> np.ndarray:
        # truncated-power natural cubic spline: 1, p, d_k - d_{K-1}
        xi = self.knots
        K = xi.size
        if deriv:
            cols = [np.zeros_like(p), np.ones_like(p)]
            power = lambda u: 3.0 * np.maximum(u, 0.0) ** 2  # noqa: E731
        else:
            cols = [np.ones_like(p), p.copy()]
            power = lambda u: np.maximum(u, 0.0) ** 3  # noqa: E731

        def d(k):
            return (power(p - xi[k]) - power(p - xi[K - 1])) / (xi[K - 1] - xi[k])

        last = d(K - 2)
        for k in range(K - 2):
            cols.append(d(k) - last)
        return np.stack(cols, axis=-1)

    def _orthonormalizer(self) -> np.ndarray:
        if self.df == 0 or self.family in (NORMAL_AFFINE, LOGSURV_AFFINE):
            return np.eye(self.df + 1)
        grid = reference_grid()
        raw = self._raw(grid) / np.sqrt(grid.size)
        # Householder QR is a numerically stable Gram-Schmidt
        _, r = np.linalg.qr(raw)
        signs = np.sign(np.diag(r))
        r = r * signs[:, None]
        return np.linalg.solve(r, np.eye(r.shape[0]))

    # public evaluation ---------------------------------------------------

    def eval(self, p) -> np.ndarray:
        """Design rows at ``p``; shape ``p.shape + (df + 1,)``."""
        p = check_percentiles(p)
        out = self._raw(p) @ self._coef
        out[..., 0] = 1.0
        return out

    def deriv(self, p) -> np.ndarray:
        """Derivative rows ``X'(p)``; first entry is identically 0."""
        p = check_percentiles(p)
        out = self._raw_deriv(p) @ self._coef
        out[..., 0] = 0.0
        return out

    def echo(self) -> dict:
        return {"family": self.family, "df": self.df, "boundary": list(self.boundary)}


def basis_eval(basis: SmootherBasis, p) -> np.ndarray:
    return basis.eval(p)


def basis_deriv(basis: SmootherBasis, p) -> np.ndarray:
    return basis.deriv(p)


@dataclass(frozen=True)
class LinkFunction:
    """Monotone link ``h`` applied to the quantile ratio (identity or log)."""

    kind: str = "log"

    def __post_init__(self):
        if self.kind not in ("identity", "log"):
            raise DomainError(f"unknown link {self.kind!r}")

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        return np.log(x) if self.kind == "log" else x.copy()

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(v) if self.kind == "log" else v.copy()

    def inverse_deriv(self, v):
        """d h^{-1}(v) / dv."""
        v = np.asarray(v, dtype=float)
        return np.exp(v) if self.kind == "log" else np.ones_like(v)


def quantile_density(f, p):
    """Quantile density ``q(p) = 1 / f(Q(p))`` of a case density ``f``."""
    p = check_percentiles(p)
    dens = np.asarray(f.pdf(f.quantile(p)), dtype=float)
    if np.any(dens <= 0.0):
        raise SingularityError("density vanishes at the requested quantile")
    out = 1.0 / dens
    return out if out.ndim else float(out)
