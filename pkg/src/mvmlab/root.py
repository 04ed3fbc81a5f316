"""Root barriers and the Root measure-valued martingale.

The barrier of a centred target ``mu`` is the contact set of the obstacle
problem ``min(u_t - u_xx / 2, u - U_mu) = 0`` with ``u(0, x) = -|x|``, where
``U_mu`` is the potential of ``mu``.  It is stored as an entry time ``r(x)``
per space node.  Conditional laws of the stopped position are computed by a
backward recursion on the trinomial walk with the same space-time grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from ._kernels import NEVER
from .constructions import CENTRE_TOL, MvmSeries, check_centred, transport_map
from .io import Table, emit_csv, read_csv
from .measure import DEFAULT_M, QuantileMeasure, levels, potential
from .stochastic import SamplePath

LAMBDA = 1.0 / 6.0  # dt / (2 dx^2) on the default grid


@dataclass(frozen=True, eq=False)
class Barrier:
    """Entry times ``r`` on a uniform space grid ``xs``; ``inf`` means never.

    Attributes
    ----------
    xs : ndarray
    r : ndarray
    dt : float
        Time step of the solver grid, or ``nan`` for hand-built barriers.
    """

    xs: np.ndarray
    r: np.ndarray
    dt: float = float("nan")

    def __post_init__(self):
        xs = np.array(self.xs, float)
        r = np.array(self.r, float)
        if xs.ndim != 1 or xs.shape != r.shape or xs.size < 3:
            raise ValueError("xs and r must be 1-D of equal length >= 3")
        d = np.diff(xs)
        if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9):
            raise ValueError("xs must be uniform and increasing")
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise ValueError("entry times must be non-negative")
        xs.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "r", r)

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    @property
    def horizon(self) -> float:
        """Largest finite entry time."""
        fin = self.r[np.isfinite(self.r)]
        return float(fin.max()) if fin.size else 0.0

    def node(self, x) -> np.ndarray:
        j = np.floor((np.asarray(x, float) - self.xs[0]) / self.dx + 0.5).astype(np.int64)
        return np.clip(j, 0, self.xs.size - 1)

    def entry_time(self, x):
        """Entry time at the node nearest to ``x``."""
        return self.r[self.node(x)]

    def contains(self, t, x) -> np.ndarray:
        return np.asarray(t) >= self.entry_time(x) - 1e-12

    def r_steps(self) -> np.ndarray:
        if not np.isfinite(self.dt):
            raise ValueError("barrier has no time step")
        out = np.full(self.r.size, NEVER, dtype=np.int64)
        fin = np.isfinite(self.r)
        out[fin] = np.rint(self.r[fin] / self.dt).astype(np.int64)
        return out

    @classmethod
    def constant(cls, xs, value: float, dt: float = float("nan")) -> "Barrier":
        xs = np.asarray(xs, float)
        return cls(xs, np.full(xs.size, float(value)), dt)

    @classmethod
    def exit_interval(cls, a: float, xs, dt: float = float("nan")) -> "Barrier":
        """Barrier of the exit time of ``(-a, a)``."""
        xs = np.asarray(xs, float)
        return cls(xs, np.where(np.abs(xs) >= a - 1e-12, 0.0, np.inf), dt)

    def to_table(self) -> Table:
        return Table.from_columns({"x": self.xs, "r": self.r})

    def to_csv(self, path):
        return emit_csv(self.to_table(), path)

    @classmethod
    def from_csv(cls, path, dt: float = float("nan")) -> "Barrier":
        t = read_csv(path)
        return cls(np.array(t.column("x")), np.array(t.column("r")), dt)


@dataclass(frozen=True, eq=False)
class ObstacleGrid:
    """Recorded solver states ``u[k]`` at ``times[k]`` with the obstacle."""

    times: np.ndarray
    xs: np.ndarray
    u: np.ndarray
    obstacle: np.ndarray


@dataclass(frozen=True)
class BarrierSolve:
    barrier: Barrier
    unstopped_mass: float
    sweeps: int
    grid: ObstacleGrid | None = None


def unstopped_mass(u: np.ndarray, obstacle: np.ndarray, dx: float, contact_tol: float = 1e-12) -> float:
    """Mass of ``-u_xx / 2`` over nodes where ``u`` is above the obstacle."""
    second = u[:-2] - 2.0 * u[1:-1] + u[2:]
    free = u[1:-1] > obstacle[1:-1] + contact_tol
    return float(np.sum(-second[free]) / (2.0 * dx))


def root_space_grid(mu: QuantileMeasure, dx: float, margin: float = 0.1, x_bound: float | None = None):
    lo, hi = mu.support
    need = max(-lo, hi)
    if x_bound is None:
        x_bound = need * (1.0 + margin)
    elif x_bound < need * (1.0 + margin) - 1e-12:
        raise ValueError(f"space grid bound {x_bound} does not contain the support with {margin:.0%} margin")
    J = int(np.ceil(x_bound / dx)) + 1
    return np.arange(-J, J + 1) * dx


def solve_root_barrier(
    mu: QuantileMeasure,
    dt: float = 1e-3,
    margin: float = 0.1,
    x_bound: float | None = None,
    mass_tol: float = 1e-4,
    max_time: float | None = None,
    omega: float = 1.2,
    sweep_tol: float = 1e-13,
    contact_tol: float = 1e-12,
    max_sweeps: int = 2000,
    record: bool = False,
    full: bool = False,
):
    """Root barrier of a centred measure with bounded support.

    Parameters
    ----------
    mu : QuantileMeasure
        Target law; must be centred.
    dt : float
        Time step.  The space step is ``sqrt(3 dt)``, so that the lattice
        walk used by :class:`RootLattice` has holding probability 2/3.
    margin : float
        Relative margin between the support and the space grid end.
    mass_tol : float
        Time stepping stops once the mass not yet stopped falls below this.
    max_time : float, optional
        Hard cap on the horizon; defaults to ``40 * Var(mu) + 1``.
    record : bool
        Keep every solver state in an :class:`ObstacleGrid`.
    full : bool
        Return a :class:`BarrierSolve` with diagnostics instead of the barrier.

    Returns
    -------
    Barrier or BarrierSolve
    """
    check_centred(mu, CENTRE_TOL)
    dx = float(np.sqrt(3.0 * dt))
    xs = root_space_grid(mu, dx, margin, x_bound)
    obst = potential(mu, xs)
    u = -np.abs(xs)
    if np.any(u < obst - 1e-9):
        raise ValueError("initial datum lies below the obstacle; is the measure centred?")
    u = np.maximum(u, obst)
    a = dt / (2.0 * dx * dx)
    r_steps = np.full(xs.size, NEVER, dtype=np.int64)
    r_steps[u <= obst + contact_tol] = 0
    max_time = 40.0 * mu.variance() + 1.0 if max_time is None else max_time
    n_max = int(np.ceil(max_time / dt))
    block = 1 if record else max(1, int(round(0.02 / dt)))
    history = [u.copy()] if record else None
    step, sweeps = 0, 0
    mass = unstopped_mass(u, obst, dx, contact_tol)
    while mass >= mass_tol and step < n_max:
        n = min(block, n_max - step)
        sweeps += _kernels.psor_advance(u, obst, a, omega, sweep_tol, max_sweeps, n, step, r_steps, contact_tol)
        step += n
        mass = unstopped_mass(u, obst, dx, contact_tol)
        if record:
            history.append(u.copy())
    if mass >= mass_tol:
        warnings.warn(f"Root solver stopped at t={step * dt:.3g} with unstopped mass {mass:.2e}")
    r = np.where(r_steps == NEVER, np.inf, r_steps * dt)
    barrier = Barrier(xs, r, dt)
    if not full:
        return barrier
    grid = None
    if record:
        grid = ObstacleGrid(np.arange(len(history)) * dt, xs, np.array(history), obst)
    return BarrierSolve(barrier, mass, sweeps, grid)


def root_hit_index(barrier: Barrier, path: SamplePath, start: int = 0) -> int:
    """Index of the first grid time in the barrier; ``-1`` if none."""
    v = path.values
    k = _kernels.barrier_hit(v, path.times, float(barrier.xs[0]), barrier.dx, barrier.r, start)
    seen = v[: k + 1] if k >= 0 else v
    if seen.min() < barrier.xs[0] or seen.max() > barrier.xs[-1]:
        warnings.warn("path leaves the barrier space grid; clamping to the end nodes")
    return k


def root_hit_time(barrier: Barrier, path: SamplePath) -> float:
    """First grid time with ``t >= r(nearest node of B_t)``; ``inf`` if none."""
    k = root_hit_index(barrier, path)
    return float("inf") if k < 0 else float(path.times[k])


class RootLattice:
    """Absorption laws of the trinomial walk killed on a barrier.

    ``layer(n)[j]`` is the law, over the absorbing nodes, of the position
    where the walk started at node ``j`` at step ``n`` is absorbed.  Layers
    are kept every ``stride`` steps; beyond the largest finite entry step the
    law no longer depends on time and a single stationary layer is used.

    Parameters
    ----------
    barrier : Barrier
        Must carry its solver time step.
    stride : int
        Keep one layer every ``stride`` steps.
    max_bytes : float
        Refuse to allocate more layer storage than this.
    """

    def __init__(self, barrier: Barrier, stride: int = 1, max_bytes: float = 2e9, leak_tol: float = 1e-6):
        self.barrier = barrier
        self.dt = barrier.dt
        self.stride = int(stride)
        if self.stride < 1:
            raise ValueError("stride must be positive")
        dx = barrier.dx
        self.p = self.dt / (2.0 * dx * dx)
        if not 0 < self.p <= 0.5:
            raise ValueError(f"walk probability {self.p:.3g} outside (0, 1/2]")
        self.r_steps = barrier.r_steps()
        absorbing = self.r_steps != NEVER
        if not absorbing.any():
            raise ValueError("barrier never absorbs")
        self.abs_nodes = np.flatnonzero(absorbing)
        self.atoms = barrier.xs[self.abs_nodes].copy()
        self.abs_col = np.full(barrier.xs.size, -1, dtype=np.int64)
        self.abs_col[self.abs_nodes] = np.arange(self.abs_nodes.size)
        self.n_top = int(self.r_steps[absorbing].max())
        self.top = self._stationary()
        n_store = (self.n_top - 1) // self.stride + 1 if self.n_top > 0 else 0
        nbytes = 8.0 * n_store * barrier.xs.size * self.atoms.size
        if nbytes > max_bytes:
            raise MemoryError(f"lattice needs {nbytes / 1e9:.2f} GB; raise the stride")
        # the stationary layer sits in the last slot so queries index one array
        self._all = np.empty((n_store + 1, barrier.xs.size, self.atoms.size))
        self._all[n_store] = self.top
        self.layers = self._all[:n_store]
        if n_store:
            _kernels.lattice_backward(self.r_steps, self.abs_col, self.top, self.n_top, self.p, self.stride, self.layers)
        sums = [np.abs(self.top.sum(axis=1) - 1).max()]
        if n_store:
            sums.append(np.abs(self.layers.sum(axis=2) - 1).max())
        self.leakage = float(max(sums))
        if self.leakage > leak_tol:
            raise RuntimeError(f"lattice mass leakage {self.leakage:.2e} exceeds {leak_tol:.0e}")

    def _stationary(self) -> np.ndarray:
        n = self.barrier.xs.size
        p = self.p
        ab = np.zeros((3, n))
        rhs = np.zeros((n, self.atoms.size))
        free = self.r_steps == NEVER
        for j in range(n):
            if not free[j]:
                ab[1, j] = 1.0
                rhs[j, self.abs_col[j]] = 1.0
                continue
            ab[1, j] = 2.0 * p
            for k in (j - 1, j + 1):
                k = 1 if k < 0 else (n - 2 if k >= n else k)
                # banded storage: ab[1 + j - k, k] holds A[j, k]
                ab[1 + j - k, k] -= p
        top = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(top)):
            raise RuntimeError("stationary absorption system is singular")
        return np.clip(top, 0.0, None)

    @property
    def xs(self) -> np.ndarray:
        return self.barrier.xs

    def layer_index(self, step: np.ndarray) -> np.ndarray:
        """Stored layer for each step; ``-1`` selects the stationary layer."""
        step = np.asarray(step, dtype=np.int64)
        out = np.where(step >= self.n_top, -1, step // self.stride)
        bad = (step < self.n_top) & (step % self.stride != 0)
        if np.any(bad):
            raise ValueError(f"step {int(step[bad][0])} is not a stored lattice layer (stride {self.stride})")
        return out

    def step_of(self, t) -> np.ndarray:
        s = np.asarray(t, float) / self.dt
        k = np.rint(s)
        if np.any(np.abs(s - k) > 1e-6):
            raise ValueError("time is not on the lattice time grid")
        return k.astype(np.int64)

    def weights(self, step: int, x: float) -> np.ndarray:
        """Absorption law from ``(step, x)`` over :attr:`atoms`."""
        L = int(self.layer_index(np.array([step]))[0])
        layer = self.top if L < 0 else self.layers[L]
        pos = (x - self.xs[0]) / self.barrier.dx
        j = int(np.clip(np.floor(pos), 0, self.xs.size - 2))
        th = float(np.clip(pos - j, 0.0, 1.0))
        return (1 - th) * layer[j] + th * layer[j + 1]

    def tables(self, steps, xs, M: int = DEFAULT_M) -> np.ndarray:
        """Quantile tables of the conditional laws at ``(steps[i], xs[i])``.

        Points already inside the barrier, judged at the nearest node, give
        the point mass at ``xs[i]``.
        """
        steps = np.asarray(steps, dtype=np.int64)
        xs = np.asarray(xs, float)
        out = np.empty((steps.size, M))
        inside = steps >= self.r_steps[self.barrier.node(xs)]
        live = np.flatnonzero(~inside)
        out[inside] = xs[inside, None]
        if live.size:
            L = self.layer_index(steps[live])
            n_layers = self.layers.shape[0]
            L = np.where(L < 0, n_layers, L)
            pos = (xs[live] - self.xs[0]) / self.barrier.dx
            j = np.clip(np.floor(pos), 0, self.xs.size - 2).astype(np.int64)
            th = np.clip(pos - j, 0.0, 1.0)
            sub = np.empty((live.size, M))
            _kernels.lattice_tables(self._all, L.astype(np.int64), j, th, self.atoms, M, sub)
            out[live] = sub
        return out


def _as_lattice(barrier_or_lattice, stride: int = 1) -> RootLattice:
    if isinstance(barrier_or_lattice, RootLattice):
        return barrier_or_lattice
    return RootLattice(barrier_or_lattice, stride)


def root_mvm_at(barrier_or_lattice, t: float, x: float, M: int = DEFAULT_M) -> QuantileMeasure:
    """Law of the stopped position for the walk started at ``(t, x)``."""
    lat = _as_lattice(barrier_or_lattice)
    step = lat.step_of(np.array([t]))
    return QuantileMeasure(lat.tables(step, np.array([float(x)]), M)[0])


def root_embedded_law(barrier_or_lattice, M: int = DEFAULT_M) -> QuantileMeasure:
    return root_mvm_at(barrier_or_lattice, 0.0, 0.0, M)


def root_mvm_series(lattice: RootLattice, path: SamplePath, M: int = DEFAULT_M, stride: int | None = None) -> MvmSeries:
    """Root martingale along a path on the lattice time grid.

    States are evaluated every ``stride`` path steps (default: the lattice
    stride).  From the barrier hit onwards the state is the point mass at the
    stopped position.
    """
    stride = lattice.stride if stride is None else int(stride)
    if stride % lattice.stride:
        raise ValueError("series stride must be a multiple of the lattice stride")
    g = path.grid
    if g.t0 != 0.0 or not np.isclose(g.dt, lattice.dt, rtol=1e-9):
        raise ValueError("path grid must start at 0 with the lattice time step")
    hit = root_hit_index(lattice.barrier, path)
    idx = np.arange(0, g.n_steps + 1, stride)
    tables = np.empty((idx.size, M))
    before = idx < hit if hit >= 0 else np.ones(idx.size, bool)
    if before.any():
        tables[before] = lattice.tables(idx[before], path.values[idx[before]], M)
    if hit >= 0:
        tables[~before] = path.values[hit]
    out = MvmSeries(path.times[idx], tables, "root")
    out.extras["hit_index"] = hit
    out.extras["hit_time"] = float(path.times[hit]) if hit >= 0 else float("inf")
    return out


def root_stopped_values(barrier: Barrier, path: SamplePath) -> float:
    k = root_hit_index(barrier, path)
    return float(path.values[k]) if k >= 0 else float("nan")


def bass_root_mvm_series(
    mu: QuantileMeasure,
    lam: QuantileMeasure,
    path: SamplePath,
    M: int = DEFAULT_M,
    lattice: RootLattice | None = None,
    **solver,
) -> MvmSeries:
    """Root martingale for ``lam`` pushed through the monotone map ``lam -> mu``."""
    check_centred(lam)
    check_centred(mu)
    kappa = transport_map(lam, mu)
    if lattice is None:
        stride = solver.pop("stride", 1)
        lattice = RootLattice(solve_root_barrier(lam, **solver), stride)
    series = root_mvm_series(lattice, path, M)
    out = series.pushforward(kappa, "bass-root")
    out.extras["kappa"] = kappa
    return out


def two_point_lattice_law(x: float, a: float = 1.0) -> tuple[float, float]:
    """Gambler's-ruin weights of ``-a`` and ``a`` from ``x`` in ``[-a, a]``."""
    return (a - x) / (2 * a), (a + x) / (2 * a)


__all__ = [
    "Barrier",
    "BarrierSolve",
    "ObstacleGrid",
    "RootLattice",
    "bass_root_mvm_series",
    "root_embedded_law",
    "root_hit_index",
    "root_hit_time",
    "root_mvm_at",
    "root_mvm_series",
    "solve_root_barrier",
    "unstopped_mass",
    "levels",
]
