"""Probability measures on the line stored as quantile tables.

A :class:`QuantileMeasure` keeps the quantile function at the midpoint levels
``q_k = (k - 1/2) / M``.  Means, monotone pushforwards and one-dimensional
Wasserstein distances reduce to elementwise operations on these tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special, stats

from .io import Table, emit_csv, read_csv

DEFAULT_M = 2048
ATOM_RTOL = 1e-12


class AtomicMeasureError(ValueError):
    """Raised when an operation needs an atomless measure and gets atoms."""


class NotCentredError(ValueError):
    """Raised when a measure required to have mean zero does not."""


def levels(M: int) -> np.ndarray:
    """Midpoint quantile levels ``(k - 1/2) / M`` for ``k = 1..M``."""
    if M < 1:
        raise ValueError("M must be positive")
    return (np.arange(M) + 0.5) / M


def standard_normal_nodes(M: int) -> np.ndarray:
    """Standard normal quantiles at the midpoint levels."""
    return special.ndtri(levels(M))


@dataclass(frozen=True, eq=False)
class QuantileMeasure:
    """Quantile table of a probability measure with finite mean.

    Parameters
    ----------
    values : array_like
        Quantile function at the ``M`` midpoint levels; must be finite and
        non-decreasing.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).ravel()
        if v.size == 0:
            raise ValueError("a quantile table needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("quantile values must be finite")
        if v.size > 1 and np.any(np.diff(v) < 0):
            raise ValueError("quantile values must be non-decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def is_dirac(self, tol: float = 0.0) -> bool:
        return self.values[-1] - self.values[0] <= tol

    def variance(self) -> float:
        return float(np.mean((self.values - self.mean) ** 2))

    def has_atoms(self, rtol: float = ATOM_RTOL) -> bool:
        """True when two consecutive quantile values coincide."""
        if self.M < 2:
            return True
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(np.any(np.diff(self.values) <= rtol * scale))

    def __repr__(self) -> str:
        lo, hi = self.support
        return f"QuantileMeasure(M={self.M}, mean={self.mean:.6g}, support=[{lo:.6g}, {hi:.6g}])"

    # constructors
    @classmethod
    def from_ppf(cls, ppf: Callable[[np.ndarray], np.ndarray], M: int = DEFAULT_M) -> "QuantileMeasure":
        return cls(ppf(levels(M)))

    @classmethod
    def gaussian(cls, mean: float = 0.0, std: float = 1.0, M: int = DEFAULT_M) -> "QuantileMeasure":
        return cls(mean + std * standard_normal_nodes(M))

    @classmethod
    def uniform(cls, a: float = -1.0, b: float = 1.0, M: int = DEFAULT_M) -> "QuantileMeasure":
        if not b > a:
            raise ValueError("uniform needs a < b")
        return cls(a + (b - a) * levels(M))

    @classmethod
    def truncated_gaussian(cls, std: float = 1.0, bound: float = 4.0, M: int = DEFAULT_M) -> "QuantileMeasure":
        """Centred normal law conditioned on ``[-bound, bound]``."""
        lo = special.ndtr(-bound / std)
        q = lo + (1 - 2 * lo) * levels(M)
        return cls(std * special.ndtri(q))

    @classmethod
    def dirac(cls, x: float, M: int = DEFAULT_M) -> "QuantileMeasure":
        return cls(np.full(M, float(x)))

    @classmethod
    def from_discrete(cls, atoms, weights, M: int = DEFAULT_M) -> "QuantileMeasure":
        """Quantile table of ``sum_i weights[i] * delta(atoms[i])``."""
        atoms = np.asarray(atoms, float)
        weights = np.asarray(weights, float)
        if atoms.shape != weights.shape or atoms.ndim != 1:
            raise ValueError("atoms and weights must be 1-D of equal length")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-9):
            raise ValueError("weights must be non-negative and sum to one")
        order = np.argsort(atoms, kind="stable")
        cum = np.cumsum(weights[order])
        idx = np.searchsorted(cum, levels(M), side="right")
        idx = np.minimum(idx, atoms.size - 1)
        return cls(atoms[order][idx])

    @classmethod
    def two_point(cls, a: float = 1.0, M: int = DEFAULT_M) -> "QuantileMeasure":
        """Symmetric law ``(delta(-a) + delta(a)) / 2``."""
        return cls.from_discrete([-a, a], [0.5, 0.5], M)

    @classmethod
    def from_samples(cls, samples, M: int = DEFAULT_M) -> "QuantileMeasure":
        s = np.sort(np.asarray(samples, float).ravel())
        return cls(s[np.minimum((levels(M) * s.size).astype(int), s.size - 1)])

    # serialisation
    def to_table(self) -> Table:
        return Table.from_columns({"q": levels(self.M), "x": self.values})

    def to_csv(self, path):
        return emit_csv(self.to_table(), path)

    @classmethod
    def from_csv(cls, path) -> "QuantileMeasure":
        table = read_csv(path)
        if table.header[:2] != ["q", "x"]:
            raise ValueError(f"{path}: expected columns q,x")
        return cls(np.array(table.column("x")))


def mean(mu: QuantileMeasure) -> float:
    """Mean of ``mu``, computed as the average of its quantile table."""
    return mu.mean


def quantile(mu: QuantileMeasure, q) -> np.ndarray | float:
    """Right-continuous piecewise-constant quantile at level(s) ``q`` in (0, 1)."""
    qa = np.asarray(q, float)
    if np.any((qa <= 0) | (qa >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    idx = np.minimum((qa * mu.M).astype(int), mu.M - 1)
    out = mu.values[idx]
    return float(out) if np.ndim(q) == 0 else out


def cdf(mu: QuantileMeasure, x) -> np.ndarray:
    """Continuous CDF obtained by linear interpolation of the quantile table.

    Suited for comparing a grid version of an atomless law with samples.
    """
    q = levels(mu.M)
    v = mu.values
    return np.interp(x, np.concatenate([[v[0]], v, [v[-1]]]), np.concatenate([[0.0], q, [1.0]]))


def resample(mu: QuantileMeasure, M: int) -> QuantileMeasure:
    """Re-evaluate the quantile function of ``mu`` on an ``M``-point grid."""
    if M == mu.M:
        return mu
    return QuantileMeasure(quantile(mu, levels(M)))


def pushforward(mu: QuantileMeasure, f, resort: bool = False) -> QuantileMeasure:
    """Image measure ``f_# mu``.

    For non-decreasing ``f`` the result is ``f`` applied elementwise.  A
    decreasing step in the output raises unless ``resort`` is set, in which
    case the image values are sorted.
    """
    y = np.asarray(f(mu.values), dtype=float)
    if y.shape != mu.values.shape:
        raise ValueError("f must map arrays elementwise")
    if mu.M > 1 and np.any(np.diff(y) < 0):
        if not resort:
            raise ValueError("f is not non-decreasing on the support; pass resort=True")
        y = np.sort(y)
    return QuantileMeasure(y)


def _aligned(mu: QuantileMeasure, nu: QuantileMeasure):
    if mu.M == nu.M:
        return mu.values, nu.values
    M = max(mu.M, nu.M)
    return resample(mu, M).values, resample(nu, M).values


def wasserstein_pp(mu: QuantileMeasure, nu: QuantileMeasure, p: float = 1.0) -> float:
    """p-th power of the Wasserstein-p distance (no root taken)."""
    if p < 1:
        raise ValueError("p must be at least 1")
    a, b = _aligned(mu, nu)
    d = np.abs(a - b)
    return float(np.mean(d if p == 1 else d**p))


def wasserstein_p(mu: QuantileMeasure, nu: QuantileMeasure, p: float = 1.0) -> float:
    """Wasserstein-p distance via the monotone (quantile) coupling.

    Examples
    --------
    >>> wasserstein_p(QuantileMeasure.dirac(0.0, 8), QuantileMeasure.dirac(1.0, 8))
    1.0
    """
    w = wasserstein_pp(mu, nu, p)
    return w if p == 1 else w ** (1.0 / p)


def ks_distance(mu: QuantileMeasure, samples) -> float:
    """Kolmogorov-Smirnov statistic of ``samples`` against the grid law ``mu``."""
    s = np.sort(np.asarray(samples, float).ravel())
    return float(stats.kstest(s, lambda x: cdf(mu, x)).statistic)


def potential(mu: QuantileMeasure, x) -> np.ndarray | float:
    """Potential ``U(x) = -mean |x - Y|`` for ``Y ~ mu``, vectorised in ``x``."""
    xa = np.asarray(x, float)
    v = mu.values
    M = v.size
    csum = np.concatenate([[0.0], np.cumsum(v)])
    k = np.searchsorted(v, xa, side="right")
    below = xa * k - csum[k]
    above = (csum[M] - csum[k]) - xa * (M - k)
    out = -(below + above) / M
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Density values on a uniform grid, normalised to one."""

    xs: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, float)
        f = np.array(self.density, float)
        if xs.ndim != 1 or xs.shape != f.shape or xs.size < 2:
            raise ValueError("xs and density must be 1-D arrays of equal length >= 2")
        h = np.diff(xs)
        if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-9, atol=0):
            raise ValueError("xs must be a uniform increasing grid")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("density must be finite and non-negative")
        if abs(f.sum() * h[0] - 1.0) > 1e-9:
            raise ValueError(f"density integrates to {f.sum() * h[0]!r}, not 1")
        xs.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "density", f)

    @property
    def h(self) -> float:
        return float(self.xs[1] - self.xs[0])

    @classmethod
    def from_function(cls, f: Callable, xs, normalise: bool = True) -> "DensityGrid":
        xs = np.asarray(xs, float)
        vals = np.asarray(f(xs), float)
        if normalise:
            vals = vals / (vals.sum() * (xs[1] - xs[0]))
        return cls(xs, vals)

    @classmethod
    def gaussian(cls, variance: float, xs, mean: float = 0.0) -> "DensityGrid":
        """Centred normal density with the given variance, renormalised on ``xs``."""
        return cls.from_function(lambda x: stats.norm.pdf(x, mean, np.sqrt(variance)), xs)

    def to_csv(self, path):
        return emit_csv(Table.from_columns({"x": self.xs, "f": self.density}), path)


def tv_distance(f: DensityGrid, g: DensityGrid) -> float:
    """Total variation distance ``(1/2) sum |f - g| h`` on a shared grid."""
    if f.xs.shape != g.xs.shape or not np.allclose(f.xs, g.xs, rtol=0, atol=1e-12 * f.h):
        raise ValueError("densities live on different grids")
    return float(0.5 * np.sum(np.abs(f.density - g.density)) * f.h)
