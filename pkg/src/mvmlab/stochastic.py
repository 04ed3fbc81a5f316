"""Brownian paths with counter-based random streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import Table, emit_csv

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 < t0 + dt < ... < t_end`` with ``n_steps`` intervals."""

    t0: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.t0 < 0:
            raise ValueError("t0 must be non-negative")
        if self.n_steps < 0 or int(self.n_steps) != self.n_steps:
            raise ValueError("n_steps must be a non-negative integer")
        if self.n_steps > 0 and not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")

    @classmethod
    def with_step(cls, t_end: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        """Grid with spacing ``dt`` covering ``[t0, t_end]`` (end rounded up)."""
        n = int(np.ceil((t_end - t0) / dt - 1e-9))
        return cls(t0, t0 + n * dt, n)

    @property
    def dt(self) -> float:
        return 0.0 if self.n_steps == 0 else (self.t_end - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        if self.n_steps == 0:
            return np.array([self.t0])
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Index of the grid point closest to ``t``."""
        if self.n_steps == 0:
            return 0
        return int(np.clip(np.rint((t - self.t0) / self.dt), 0, self.n_steps))


@dataclass(frozen=True)
class RngStream:
    """Identifies an independent normal stream by ``(seed, path_id, counter, branch)``.

    The Philox key is the seed and the 256-bit counter starts at
    ``[0, path_id, branch, counter]``.  Draws only advance the lowest word, so
    streams that differ in any identifier never overlap.
    """

    seed: int
    path_id: int = 0
    counter: int = 0
    branch: int = 0

    def __post_init__(self):
        for name in ("seed", "path_id", "counter", "branch"):
            v = getattr(self, name)
            if not 0 <= int(v) <= _U64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")

    def generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(key=int(self.seed), counter=[0, self.path_id, self.branch, self.counter])
        return np.random.Generator(bitgen)

    def substream(self, branch: int) -> "RngStream":
        """A stream independent of this one, e.g. for conditional continuations."""
        return RngStream(self.seed, self.path_id, self.counter, branch)

    def advance(self, k: int = 1) -> "RngStream":
        return RngStream(self.seed, self.path_id, self.counter + k, self.branch)

    def normals(self, n: int) -> np.ndarray:
        return self.generator().standard_normal(n)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Values of a process on a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray
    stream: RngStream | None = None

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.shape != (self.grid.n_steps + 1,):
            raise ValueError("values must have one entry per grid time")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.values)

    def scaled(self, c: float) -> "SamplePath":
        return SamplePath(self.grid, c * self.values, self.stream)

    def to_table(self) -> Table:
        return Table.from_columns({"t": self.times, "x": self.values})

    def to_csv(self, path):
        return emit_csv(self.to_table(), path)


def brownian_values(n_steps: int, dt: float, start: float, stream: RngStream) -> np.ndarray:
    out = np.empty(n_steps + 1)
    out[0] = start
    if n_steps:
        np.cumsum(stream.normals(n_steps) * np.sqrt(dt), out=out[1:])
        out[1:] += start
    return out


def simulate_brownian(grid: TimeGrid, start: float, stream: RngStream) -> SamplePath:
    """Brownian path on ``grid`` started at ``start`` driven by ``stream``."""
    return SamplePath(grid, brownian_values(grid.n_steps, grid.dt, start, stream), stream)


def quadratic_variation(path) -> np.ndarray:
    """Cumulative sum of squared increments, starting at zero."""
    v = path.values if isinstance(path, SamplePath) else np.asarray(path, float)
    out = np.zeros(v.size)
    if v.size > 1:
        np.cumsum(np.diff(v) ** 2, out=out[1:])
    return out


def time_change(clock, level: float, times=None, interpolate: bool = False) -> float:
    """First time at which the non-decreasing ``clock`` reaches ``level``.

    Parameters
    ----------
    clock : array_like
        Non-decreasing clock values at ``times``.
    level : float
    times : array_like, optional
        Grid times; defaults to ``0, 1, 2, ...``.
    interpolate : bool
        Interpolate linearly in clock value between the bracketing grid
        times instead of snapping to the grid.

    Returns
    -------
    float
        The time, or ``inf`` when the clock never reaches ``level``.
    """
    c = np.asarray(clock, float)
    t = np.arange(c.size, dtype=float) if times is None else np.asarray(times, float)
    if c.size > 1 and np.any(np.diff(c) < 0):
        raise ValueError("clock must be non-decreasing")
    k = int(np.searchsorted(c, level, side="left"))
    if k >= c.size:
        return float("inf")
    if not interpolate or k == 0 or c[k] == c[k - 1]:
        return float(t[k])
    frac = (level - c[k - 1]) / (c[k] - c[k - 1])
    return float(t[k - 1] + frac * (t[k] - t[k - 1]))


def time_changes(clock, levels, times=None) -> np.ndarray:
    """Vectorised grid-snapped :func:`time_change`."""
    c = np.asarray(clock, float)
    t = np.arange(c.size, dtype=float) if times is None else np.asarray(times, float)
    k = np.searchsorted(c, np.asarray(levels, float), side="left")
    out = np.full(k.shape, np.inf)
    ok = k < c.size
    out[ok] = t[k[ok]]
    return out
