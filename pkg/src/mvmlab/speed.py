"""Speed of a measure-valued martingale estimated by partition sums."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .constructions import MvmSeries, ScaleFunction
from .io import Table, emit_csv
from .measure import DEFAULT_M, levels
from .stochastic import SamplePath, quadratic_variation
from .wasserstein import Estimate, estimate_from

INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass
class SpeedEstimate:
    """Cumulative partition sums of squared W1 increments per mesh.

    Attributes
    ----------
    times : ndarray, shape (n,)
    meshes : ndarray, shape (m,)
    cumulative : ndarray, shape (m, n)
    mean_qv : ndarray, shape (n,)
    """

    times: np.ndarray
    meshes: np.ndarray
    cumulative: np.ndarray
    mean_qv: np.ndarray

    @property
    def liminf(self) -> np.ndarray:
        """Pointwise minimum over the mesh ladder."""
        return self.cumulative.min(axis=0)

    @property
    def finest(self) -> np.ndarray:
        return self.cumulative[int(np.argmin(self.meshes))]

    def total(self) -> float:
        return float(self.finest[-1])

    def to_table(self) -> Table:
        rows = []
        for m, cum in zip(self.meshes, self.cumulative):
            rows.extend((float(t), float(m), float(c), float(q)) for t, c, q in zip(self.times, cum, self.mean_qv))
        return Table(["t", "mesh", "speed", "mean_qv"], rows)

    def to_csv(self, path):
        return emit_csv(self.to_table(), path)


def w1_increments(tables: np.ndarray) -> np.ndarray:
    return np.mean(np.abs(np.diff(tables, axis=0)), axis=1)


def partition_indices(times: np.ndarray, mesh: float) -> np.ndarray:
    """Series indices closest from above to ``t0, t0 + mesh, ...``; always keeps both ends."""
    span = times[-1] - times[0]
    targets = times[0] + mesh * np.arange(int(np.floor(span / mesh + 1e-9)) + 1)
    idx = np.searchsorted(times, targets - 1e-9 * max(mesh, 1e-300), side="left")
    idx = np.unique(np.concatenate([[0], np.minimum(idx, times.size - 1), [times.size - 1]]))
    return idx


def estimate_speed(series: MvmSeries, meshes: Sequence[float] | None = None) -> SpeedEstimate:
    """Partition estimates of the speed along a series.

    Parameters
    ----------
    series : MvmSeries
    meshes : sequence of float, optional
        Mesh ladder; defaults to four dyadic levels starting at the series
        grid spacing.

    Returns
    -------
    SpeedEstimate
        Cumulative sums at every series time, counting partition intervals
        whose right end is not after that time.
    """
    t = series.times
    spacing = np.diff(t)
    positive = spacing[spacing > 0]
    base = float(positive.min()) if positive.size else 1.0
    if meshes is None:
        med = float(np.median(positive)) if positive.size else 1.0
        meshes = [med * 2**k for k in range(4)]
    meshes = np.asarray(sorted(meshes), float)
    if meshes.size and meshes[0] < base * (1 - 1e-9) and np.allclose(spacing, spacing[0]):
        raise ValueError(f"mesh {meshes[0]:.3g} is finer than the series grid {base:.3g}")
    cum = np.zeros((meshes.size, t.size))
    for i, mesh in enumerate(meshes):
        idx = partition_indices(t, mesh)
        if idx.size > 1:
            inc = np.mean(np.abs(series.tables[idx[1:]] - series.tables[idx[:-1]]), axis=1) ** 2
            cum[i, idx[1:]] = inc
        np.cumsum(cum[i], out=cum[i])
    return SpeedEstimate(t.copy(), meshes, cum, mean_qv(series))


def mean_qv(series: MvmSeries) -> np.ndarray:
    """Quadratic variation of the mean process on the series grid."""
    return quadratic_variation(series.means)


class RhoMap(ScaleFunction):
    """Monotone map applied to states before measuring speed."""

    @classmethod
    def from_kappa(cls, kappa: ScaleFunction) -> "RhoMap":
        inv = kappa.inverse()
        return cls(inv.nodes, inv.values)


def rho_speed(series: MvmSeries, rho: ScaleFunction, meshes: Sequence[float] | None = None) -> SpeedEstimate:
    """Speed of the pushed series ``rho_# xi``."""
    if not isinstance(rho, ScaleFunction):
        raise TypeError("rho must be a monotone ScaleFunction table")
    return estimate_speed(series.pushforward(rho, (series.label or "series") + "-rho"), meshes)


def coinflip_outcome(M: int = DEFAULT_M, sign: int = 1) -> np.ndarray:
    """Quantiles of the uniform law on ``[-1, -1/sqrt2] u [0, 1/sqrt2]``, or its mirror."""
    q = levels(M)
    left = 1.0 - INV_SQRT2
    a = np.where(q < left, -1.0 + q, q - left)
    return a if sign > 0 else -a[::-1]


def coinflip_mvm_series(eps: float, path: SamplePath, M: int = DEFAULT_M) -> MvmSeries:
    """Uniform law on ``[-1, 1]`` until the path first leaves ``(-eps, eps)``.

    On a hit of ``+eps`` the state jumps to :func:`coinflip_outcome` with
    ``sign=+1``, on ``-eps`` to its mirror, and stays there.  The two outcomes
    have equal probability and average to the uniform law, so the state
    process is a measure-valued martingale.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    start = path.values[0]
    k = _kernels.exit_scan(path.values, start - eps, start + eps)
    pre = 2.0 * levels(M) - 1.0
    tables = np.broadcast_to(pre, (path.values.size, M)).copy()
    if k >= 0:
        sign = 1 if path.values[k] >= start + eps else -1
        tables[k:] = coinflip_outcome(M, sign)
    out = MvmSeries(path.times, tables, "coinflip")
    out.extras["flip_index"] = k
    return out


def series_speed_total(series: MvmSeries, rho: ScaleFunction | None = None) -> float:
    """Finest-grid partition sum over the whole series."""
    tab = series.tables if rho is None else np.asarray(rho(series.tables))
    if len(series) < 2:
        return 0.0
    return float(np.sum(w1_increments(tab) ** 2))


def objective_opt2(
    series_factory: Callable[[int], MvmSeries],
    rho: ScaleFunction | None,
    F: Callable[[np.ndarray], np.ndarray],
    n_paths: int,
    mass_tol: float = 1e-3,
    first_id: int = 0,
) -> Estimate:
    """Monte Carlo estimate of ``E F([xi]^rho_infinity)``.

    The total speed of each scenario is the finest-grid partition sum of the
    pushed series.  Raises if more than ``mass_tol`` of the scenarios have not
    terminated at the end of their grid.
    """
    totals = np.empty(n_paths)
    open_count = 0
    for i in range(n_paths):
        s = series_factory(first_id + i)
        if not s.is_terminated():
            open_count += 1
        totals[i] = series_speed_total(s, rho)
    if open_count > mass_tol * n_paths:
        raise RuntimeError(f"{open_count} of {n_paths} series have not terminated at the horizon")
    return estimate_from(np.asarray(F(totals), float))
