"""Gaussian, Bass and Azema-Yor measure-valued martingales along a path."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import _kernels
from .io import Table, emit_csv
from .measure import (
    DEFAULT_M,
    AtomicMeasureError,
    NotCentredError,
    QuantileMeasure,
    levels,
    standard_normal_nodes,
)
from .stochastic import SamplePath, quadratic_variation

CENTRE_TOL = 1e-3


def check_centred(mu: QuantileMeasure, tol: float = CENTRE_TOL) -> None:
    lo, hi = mu.support
    scale = max(hi - lo, 1e-300)
    if abs(mu.mean) > tol * scale:
        raise NotCentredError(f"measure has mean {mu.mean:.3g}, expected 0")


def check_atomless(mu: QuantileMeasure, what: str = "measure") -> None:
    if mu.has_atoms():
        raise AtomicMeasureError(f"{what} has atoms (repeated quantile values)")


@dataclass(frozen=True)
class GaussianState:
    """State ``N(b, s2)`` of the Gaussian martingale; ``s2 = 1 - t``."""

    b: float
    s2: float

    def __post_init__(self):
        if self.s2 < 0:
            raise ValueError("remaining variance must be non-negative")
        if self.s2 > 1 + 1e-12:
            raise ValueError("remaining variance cannot exceed one")


@dataclass(frozen=True, eq=False)
class ScaleFunction:
    """Non-decreasing piecewise-linear map, constant beyond its end nodes."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.nodes, float)
        y = np.array(self.values, float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("nodes and values must be 1-D of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("scale function values must be non-decreasing")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "values", y)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)

    @classmethod
    def identity(cls, lo: float = -1e6, hi: float = 1e6) -> "ScaleFunction":
        return cls(np.array([lo, hi]), np.array([lo, hi]))

    @classmethod
    def linear(cls, slope: float, lo: float = -1e6, hi: float = 1e6) -> "ScaleFunction":
        return cls(np.array([lo, hi]), slope * np.array([lo, hi]))

    def inverse(self) -> "ScaleFunction":
        """Right-continuous inverse; needs strictly increasing values."""
        if np.any(np.diff(self.values) <= 0):
            raise AtomicMeasureError("scale function has flat pieces; inverse is not a table map")
        return ScaleFunction(self.values, self.nodes)

    def to_csv(self, path):
        return emit_csv(Table.from_columns({"x": self.nodes, "h": self.values}), path)


def transport_map(source: QuantileMeasure, target: QuantileMeasure) -> ScaleFunction:
    """Monotone map sending the atomless ``source`` onto ``target``."""
    check_atomless(source, "source measure")
    if target.M != source.M:
        from .measure import resample

        target = resample(target, source.M)
    return ScaleFunction(source.values, target.values)


@dataclass(eq=False)
class MvmSeries:
    """Quantile tables of a measure-valued process at increasing times.

    Attributes
    ----------
    times : ndarray, shape (n,)
    tables : ndarray, shape (n, M)
        Row ``k`` is the quantile table of the state at ``times[k]``.
    label : str
    """

    times: np.ndarray
    tables: np.ndarray
    label: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.tables = np.asarray(self.tables, float)
        if self.tables.ndim != 2 or self.tables.shape[0] != self.times.size:
            raise ValueError("tables must be (len(times), M)")
        if self.times.size > 1 and np.any(np.diff(self.times) < 0):
            raise ValueError("times must be non-decreasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def M(self) -> int:
        return self.tables.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self.tables.mean(axis=1)

    @property
    def measures(self) -> list[QuantileMeasure]:
        return [QuantileMeasure(row) for row in self.tables]

    def at(self, k: int) -> QuantileMeasure:
        return QuantileMeasure(self.tables[k])

    def index_at(self, t: float) -> int:
        """Index of the last time not after ``t``."""
        k = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return max(k, 0)

    def state_at(self, t: float) -> QuantileMeasure:
        return self.at(self.index_at(t))

    @property
    def terminal(self) -> QuantileMeasure:
        return self.at(-1)

    def is_terminated(self, tol: float = 1e-9) -> bool:
        row = self.tables[-1]
        return bool(row[-1] - row[0] <= tol * max(1.0, abs(row[0])))

    def pushforward(self, f, label: str | None = None) -> "MvmSeries":
        out = np.asarray(f(self.tables), float)
        if np.any(np.diff(out, axis=1) < 0):
            raise ValueError("pushforward map is not non-decreasing")
        return MvmSeries(self.times, out, label if label is not None else self.label, dict(self.extras))

    def retimed(self, times, label: str | None = None) -> "MvmSeries":
        """Same states attached to new times."""
        return MvmSeries(times, self.tables, label if label is not None else self.label, dict(self.extras))

    def subset(self, idx) -> "MvmSeries":
        idx = np.asarray(idx)
        return MvmSeries(self.times[idx], self.tables[idx], self.label, dict(self.extras))

    def to_table(self, decimate: int = 1, max_levels: int | None = None) -> Table:
        rows = np.arange(0, len(self), decimate)
        if rows[-1] != len(self) - 1:
            rows = np.append(rows, len(self) - 1)
        cols = np.arange(self.M)
        if max_levels is not None and self.M > max_levels:
            cols = np.linspace(0, self.M - 1, max_levels).round().astype(int)
        header = ["t", "mean"] + [f"q_{c + 1}" for c in cols]
        means = self.means
        body = [
            (float(self.times[r]), float(means[r]), *map(float, self.tables[r, cols])) for r in rows
        ]
        return Table(header, body)

    def to_csv(self, path, decimate: int = 1, max_levels: int | None = None):
        return emit_csv(self.to_table(decimate, max_levels), path)


# Gaussian martingale
def eta_at(state: GaussianState, M: int = DEFAULT_M) -> QuantileMeasure:
    """Quantile table of ``N(b, s2)``; a point mass when ``s2 = 0``."""
    if state.s2 == 0:
        return QuantileMeasure.dirac(state.b, M)
    return QuantileMeasure(state.b + np.sqrt(state.s2) * standard_normal_nodes(M))


def eta_series(path: SamplePath, M: int = DEFAULT_M) -> MvmSeries:
    t = path.times
    s = np.sqrt(np.clip(1.0 - t, 0.0, None))
    return MvmSeries(t, path.values[:, None] + s[:, None] * standard_normal_nodes(M)[None, :], "eta")


# Bass
def bass_scale(mu: QuantileMeasure, centre_tol: float = CENTRE_TOL) -> ScaleFunction:
    """Scale function mapping ``N(0, 1)`` monotonically onto ``mu``.

    The table has the standard normal midpoint quantiles as nodes and the
    quantiles of ``mu`` as values, so ``h_# N(0, 1)`` reproduces ``mu``
    exactly on the grid.
    """
    check_atomless(mu)
    check_centred(mu, centre_tol)
    return ScaleFunction(standard_normal_nodes(mu.M), mu.values)


def _as_scale(mu_or_h) -> ScaleFunction:
    return mu_or_h if isinstance(mu_or_h, ScaleFunction) else bass_scale(mu_or_h)


def bass_mvm_at(h: ScaleFunction, state: GaussianState, M: int = DEFAULT_M) -> QuantileMeasure:
    """State ``h_# N(b, s2)`` of the Bass martingale."""
    out = np.empty((1, M))
    _kernels.push_tables(
        np.array([float(state.b)]), np.array([np.sqrt(state.s2)]), standard_normal_nodes(M), h.nodes, h.values, out
    )
    return QuantileMeasure(out[0])


def bass_tables(h: ScaleFunction, b, s2, M: int = DEFAULT_M) -> np.ndarray:
    """Stack of Bass states for arrays of ``(b, s2)``."""
    b = np.ascontiguousarray(b, dtype=float)
    s = np.sqrt(np.clip(np.asarray(s2, float), 0.0, None))
    out = np.empty((b.size, M))
    return _kernels.push_tables(b, np.ascontiguousarray(s), standard_normal_nodes(M), h.nodes, h.values, out)


def bass_eta_wpp(h: ScaleFunction, b, s2, p: float = 1.0, M: int = DEFAULT_M) -> np.ndarray:
    """``W_p^p(N(b, s2), h_# N(b, s2))`` for arrays of states, via the map coupling."""
    b = np.ascontiguousarray(b, dtype=float)
    s = np.ascontiguousarray(np.sqrt(np.clip(np.asarray(s2, float), 0.0, None)))
    out = np.empty(b.size)
    return _kernels.push_wpp(b, s, standard_normal_nodes(M), h.nodes, h.values, float(p), out)


def bass_mvm_series(mu_or_h, path: SamplePath, M: int = DEFAULT_M) -> MvmSeries:
    """Canonical-time Bass martingale along a Brownian path on ``[0, 1]``."""
    if abs(path.grid.t_end - 1.0) > 1e-12:
        raise ValueError("the canonical Bass construction needs a grid ending at t=1")
    h = _as_scale(mu_or_h)
    t = path.times
    tables = bass_tables(h, path.values, 1.0 - t, M)
    return MvmSeries(t, tables, "bass")


def bass_natural_time(series: MvmSeries) -> MvmSeries:
    """Re-clock a series so that its mean has quadratic variation equal to time.

    The states are re-indexed, not recomputed: state ``k`` is attached to the
    clock value ``<M>`` at ``series.times[k]``.
    """
    clock = quadratic_variation(series.means)
    out = series.retimed(clock, (series.label or "series") + "-natural")
    out.extras["canonical_times"] = series.times
    return out


# Azema-Yor
@dataclass(frozen=True, eq=False)
class AyBarycentre:
    """Level table ``pi`` and barycentre inverse ``psi`` on running-max nodes.

    ``x_nodes[i]`` is the barycentre of ``mu`` above level ``pi[i]``, and
    ``psi[i]`` the ``mu``-quantile at that level.
    """

    mu: QuantileMeasure
    x_nodes: np.ndarray
    pi: np.ndarray
    psi: np.ndarray

    @property
    def right_end(self) -> float:
        return float(self.mu.values[-1])

    def pi_at(self, x):
        return np.interp(x, self.x_nodes, self.pi)

    def psi_at(self, x):
        return np.interp(x, self.x_nodes, self.psi)


def _tail_barycentre(values: np.ndarray, level: np.ndarray) -> np.ndarray:
    """Mean of the quantile function over ``(level, 1)`` for a step table."""
    M = values.size
    csum = np.concatenate([[0.0], np.cumsum(values)])
    pos = level * M
    k = np.minimum(np.floor(pos).astype(int), M - 1)
    partial = (k + 1 - pos) * values[k]
    total = csum[M] - csum[k + 1] + partial
    return total / (M * (1.0 - level))


def ay_barycentre(
    mu: QuantileMeasure, n_nodes: int | None = None, allow_atoms: bool = False, iterations: int = 200
) -> AyBarycentre:
    """Barycentre tables of ``mu`` for the Azema-Yor construction.

    For running-max values ``x`` between the mean and the top of the support,
    solves ``x (1 - pi) = int_{pi}^{1} F^{-1}`` for ``pi`` by bisection and sets
    ``psi(x) = F^{-1}(pi(x))``.

    Parameters
    ----------
    mu : QuantileMeasure
    n_nodes : int, optional
        Number of running-max nodes; defaults to ``mu.M``.
    allow_atoms : bool
        Accept measures with atoms.  Intended for closed-form checks only.
    """
    if not allow_atoms:
        check_atomless(mu)
    check_centred(mu)
    n_nodes = n_nodes or mu.M
    v = mu.values
    lo_x, hi_x = mu.mean, float(v[-1])
    x = np.linspace(lo_x, hi_x, n_nodes)
    lo = np.zeros(n_nodes)
    hi = np.full(n_nodes, 1.0 - 0.5 / mu.M)
    # barycentre above level p is non-decreasing in p
    for _ in range(iterations):
        midp = 0.5 * (lo + hi)
        below = _tail_barycentre(v, midp) < x
        lo = np.where(below, midp, lo)
        hi = np.where(below, hi, midp)
        if np.max(hi - lo) < 1e-15:
            break
    pi = 0.5 * (lo + hi)
    pi[0] = 0.0
    pi = np.maximum.accumulate(pi)
    idx = np.minimum((pi * mu.M).astype(int), mu.M - 1)
    psi = v[idx].astype(float)
    psi[-1] = hi_x
    pi[-1] = 1.0
    psi = np.minimum(psi, x)
    return AyBarycentre(mu, x, pi, psi)


@dataclass(frozen=True)
class AyState:
    """Azema-Yor state: current value, running max and stopping status."""

    bary: AyBarycentre
    b: float
    s_max: float
    stopped: bool = False
    stopped_value: float = float("nan")

    def __post_init__(self):
        if self.s_max < self.b - 1e-12:
            raise ValueError("running maximum below current value")

    @classmethod
    def initial(cls, bary: AyBarycentre) -> "AyState":
        m = bary.mu.mean
        return cls(bary, m, m)

    def weights(self) -> tuple[float, float]:
        """Weights of the point mass at ``psi(S)`` and of the upper tail."""
        psi = float(self.bary.psi_at(self.s_max))
        gap = self.s_max - psi
        if self.stopped or gap <= 1e-14:
            return 1.0, 0.0
        w0 = (self.s_max - self.b) / gap
        return w0, 1.0 - w0


def ay_mvm_at(state: AyState, M: int = DEFAULT_M) -> QuantileMeasure:
    """Azema-Yor state as a quantile table.

    Before stopping this is the mixture of a point mass at ``psi(S)`` and the
    normalised part of ``mu`` above level ``pi(S)``, weighted so that the
    mean equals ``b``.  After stopping it is the point mass at ``psi(S)``.
    """
    bary = state.bary
    s = np.array([state.s_max])
    psi = bary.psi_at(s)
    pi = bary.pi_at(s)
    if state.stopped:
        v = state.stopped_value if np.isfinite(state.stopped_value) else float(psi[0])
        return QuantileMeasure.dirac(v, M)
    out = np.empty((1, M))
    _kernels.ay_tables(np.array([state.b]), s, psi, pi, bary.mu.values, M, out)
    return QuantileMeasure(out[0])


def ay_stop_index(bary: AyBarycentre, values: np.ndarray) -> int:
    """First index where the path falls to ``psi`` of its running max; ``-1`` if never."""
    return _kernels.ay_scan(np.ascontiguousarray(values, dtype=float), bary.x_nodes, bary.psi, bary.right_end)


def ay_tables(bary: AyBarycentre, values: np.ndarray, M: int = DEFAULT_M, stop: int | None = None,
              rows=None) -> np.ndarray:
    """Quantile tables of the Azema-Yor martingale along ``values``.

    ``rows`` selects the path indices for which tables are built; stopping
    is still detected on the full path.
    """
    values = np.ascontiguousarray(values, dtype=float)
    if stop is None:
        stop = ay_stop_index(bary, values)
    s = np.maximum.accumulate(values)
    psi = bary.psi_at(s)
    pi = bary.pi_at(s)
    b = values.copy()
    if stop >= 0:
        s[stop:] = s[stop]
        psi[stop:] = psi[stop]
        pi[stop:] = pi[stop]
        b[stop:] = psi[stop]
    if rows is not None:
        rows = np.asarray(rows)
        b, s, psi, pi = (np.ascontiguousarray(a[rows]) for a in (b, s, psi, pi))
    out = np.empty((b.size, M))
    return _kernels.ay_tables(b, s, psi, pi, bary.mu.values, M, out)


def ay_mvm_series(mu_or_bary, path: SamplePath, M: int = DEFAULT_M) -> MvmSeries:
    """Azema-Yor martingale along a Brownian path, frozen after stopping."""
    bary = mu_or_bary if isinstance(mu_or_bary, AyBarycentre) else ay_barycentre(mu_or_bary)
    stop = ay_stop_index(bary, path.values)
    out = MvmSeries(path.times, ay_tables(bary, path.values, M, stop), "azema-yor")
    out.extras["stop_index"] = stop
    return out
