"""Monte Carlo drivers shared by the command line and the acceptance tests.

Every driver takes explicit sizes and a seed and is deterministic: path ``i``
always uses ``RngStream(seed, i)`` and reductions run in path order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .constructions import (
    AyBarycentre,
    MvmSeries,
    ScaleFunction,
    ay_barycentre,
    ay_stop_index,
    ay_tables,
    bass_eta_wpp,
    bass_mvm_series,
    bass_natural_time,
    bass_scale,
    bass_tables,
)
from .io import Table
from .measure import QuantileMeasure, ks_distance, levels, resample, standard_normal_nodes
from .root import Barrier, RootLattice, root_hit_index, root_mvm_series, root_space_grid, solve_root_barrier
from .speed import coinflip_mvm_series, estimate_speed, series_speed_total
from .stochastic import RngStream, SamplePath, TimeGrid, brownian_values, simulate_brownian
from .wasserstein import (
    Estimate,
    combined_se,
    estimate_from,
    eta_distance,
    lipschitz_markov_check,
    monotonicity_report,
    path_objective,
    terminal_cross_check,
    weight_function,
)


def parallel_map(fn: Callable[[int], object], ids: Sequence[int], threads: int = 1, chunk: int = 256) -> list:
    """Ordered ``[fn(i) for i in ids]`` computed on a thread pool."""
    ids = list(ids)
    if threads <= 1 or len(ids) <= chunk:
        return [fn(i) for i in ids]
    blocks = [ids[k : k + chunk] for k in range(0, len(ids), chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda blk: [fn(i) for i in blk], blocks))
    return [x for part in parts for x in part]


def run_until_stop(stop_index: Callable[[np.ndarray], int], dt: float, stream: RngStream, chunk_steps: int,
                   max_steps: int, start: float = 0.0) -> tuple[np.ndarray, int]:
    """Extend a Brownian path chunk by chunk until ``stop_index`` fires."""
    values = np.array([start])
    counter = 0
    while True:
        v = brownian_values(chunk_steps, dt, values[-1], stream.advance(counter))
        values = np.concatenate([values, v[1:]])
        counter += 1
        k = stop_index(values)
        if k >= 0 or values.size > max_steps:
            return values, k


# Bass constancy
def bass_constancy(mu: QuantileMeasure, times=(0.0, 0.25, 0.5, 0.75, 0.99), n_paths: int = 100_000,
                   seed: int = 1, p: float = 1.0, M: int = 2048, target: float | None = None,
                   rel_tol: float = 0.02, threads: int = 1) -> Table:
    """Mean distance between the Gaussian and Bass martingales at fixed times."""
    h = bass_scale(mu)
    times = np.asarray(times, float)
    dt = np.diff(np.concatenate([[0.0], times]))

    def sample(i):
        return np.cumsum(RngStream(seed, i).normals(times.size) * np.sqrt(dt))

    B = np.array(parallel_map(sample, range(n_paths), threads))
    W = np.empty_like(B)
    for k, t in enumerate(times):
        W[:, k] = bass_eta_wpp(h, B[:, k], np.full(n_paths, 1.0 - t), p, M)
    est = W.mean(axis=0)
    se = W.std(axis=0, ddof=1) / np.sqrt(n_paths)
    if target is None:
        target = float(bass_eta_wpp(h, [0.0], [1.0], p, M)[0])
    rel = np.abs(est - target) / target
    return Table.from_columns({"t": times, "estimate": est, "se": se, "target": np.full(times.size, target),
                               "rel_err": rel, "pass": rel <= rel_tol})


# Root submartingale
def root_distances(lam: QuantileMeasure, checkpoints, n_paths: int, seed: int = 2, dt: float = 2.5e-4,
                   M: int = 512, threads: int = 1, lattice: RootLattice | None = None):
    """Per path ``W1`` of the Root state to ``lam`` and to the Gaussian state."""
    checkpoints = np.asarray(checkpoints, float)
    if lattice is None:
        stride = int(round(np.gcd.reduce(np.rint(checkpoints / dt).astype(int)[checkpoints > 0]))) or 1
        lattice = RootLattice(solve_root_barrier(lam, dt=dt), stride=stride)
    steps = lattice.step_of(checkpoints)
    n_steps = int(steps.max())
    grid = TimeGrid(0.0, n_steps * lattice.dt, n_steps)
    lam_tab = resample(lam, M).values
    z = standard_normal_nodes(M)

    def one(i):
        path = simulate_brownian(grid, 0.0, RngStream(seed, i))
        hit = root_hit_index(lattice.barrier, path)
        tab = np.empty((steps.size, M))
        live = steps < hit if hit >= 0 else np.ones(steps.size, bool)
        if live.any():
            tab[live] = lattice.tables(steps[live], path.values[steps[live]], M)
        if hit >= 0:
            tab[~live] = path.values[hit]
        b = path.values[steps]
        eta = b[:, None] + np.sqrt(np.clip(1 - checkpoints, 0, None))[:, None] * z[None, :]
        return np.mean(np.abs(tab - lam_tab), axis=1), np.mean(np.abs(tab - eta), axis=1)

    out = parallel_map(one, range(n_paths), threads)
    to_mu = np.array([o[0] for o in out])
    to_eta = np.array([o[1] for o in out])
    return checkpoints, to_mu, to_eta


def root_submartingale(lam: QuantileMeasure, checkpoints=(0.0, 0.1, 0.2, 0.3, 0.4), n_paths: int = 10_000,
                       seed: int = 2, dt: float = 2.5e-4, M: int = 512, threads: int = 1):
    t, to_mu, to_eta = root_distances(lam, checkpoints, n_paths, seed, dt, M, threads)
    rep_mu = monotonicity_report(to_mu, t)
    rep_eta = monotonicity_report(to_eta, t)
    rev = monotonicity_report(to_mu[:, ::-1], t)
    rev.kind = "time-reversed control"
    return {"constant": rep_mu, "eta": rep_eta, "reversed": rev}


# Root barrier checks
def barrier_flatness(dt: float = 0.005, bound: float = 4.0, window: float = 2.0, M: int = 4096) -> dict:
    """Barrier of the truncated standard normal law against the line ``t = 1``."""
    lam = QuantileMeasure.truncated_gaussian(1.0, bound, M)
    bar = solve_root_barrier(lam, dt=dt)
    sel = np.abs(bar.xs) <= window
    cells = np.abs(bar.r[sel] - 1.0) / dt
    return {"barrier": bar, "max_cells": float(cells.max()), "dt": dt}


def embedded_law_ks(lam: QuantileMeasure, n_paths: int = 100_000, dt: float = 1e-4, seed: int = 4,
                    threads: int = 1, barrier: Barrier | None = None) -> dict:
    """KS distance between ``lam`` and Monte Carlo stopped positions."""
    bar = barrier if barrier is not None else solve_root_barrier(lam, dt=dt)
    n = int(np.ceil(bar.horizon / bar.dt)) + 1 if np.all(np.isfinite(bar.r)) else int(40 / bar.dt)
    times = np.arange(n + 1) * bar.dt
    x0, dx = float(bar.xs[0]), bar.dx

    def one(i):
        v = brownian_values(n, bar.dt, 0.0, RngStream(seed, i))
        k = _kernels.barrier_hit(v, times, x0, dx, bar.r, 0)
        return v[k] if k >= 0 else np.nan

    y = np.array(parallel_map(one, range(n_paths), threads))
    unstopped = int(np.isnan(y).sum())
    y = y[~np.isnan(y)]
    return {"ks": ks_distance(lam, y), "samples": y, "unstopped": unstopped, "barrier": bar}


# first optimality
@dataclass
class Alternative:
    """A terminating martingale re-clocked onto ``[0, 1]`` by ``t = s / (c + s)``."""

    kind: str
    mu: QuantileMeasure
    ds: float
    s_max: float
    clock: float
    M: int
    quad_stride: int
    lattice: RootLattice | None = None
    bary: AyBarycentre | None = None
    tail_spacing: float = 0.002
    extras: dict = field(default_factory=dict)

    def t_of(self, s):
        s = np.asarray(s, float)
        return s / (self.clock + s)

    def build(self, path_id: int, seed: int) -> tuple[MvmSeries, np.ndarray]:
        stream = RngStream(seed, path_id)
        n = int(round(self.s_max / self.ds))
        w = brownian_values(n, self.ds, 0.0, stream)
        s = np.arange(n + 1) * self.ds
        t = self.t_of(s)
        # B on the t clock from the same increments
        scale = np.sqrt(np.diff(t) / self.ds)
        b = np.concatenate([[0.0], np.cumsum(np.diff(w) * scale)])
        idx = np.arange(0, n + 1, self.quad_stride)
        if self.kind == "root":
            lat = self.lattice
            hit = _kernels.barrier_hit(w, s, float(lat.xs[0]), lat.barrier.dx, lat.barrier.r, 0)
            tab = np.empty((idx.size, self.M))
            live = idx < hit if hit >= 0 else np.ones(idx.size, bool)
            if live.any():
                tab[live] = lat.tables(idx[live], w[idx[live]], self.M)
            if hit >= 0:
                tab[~live] = w[hit]
            stop = hit
        else:
            stop = ay_stop_index(self.bary, w)
            tab = ay_tables(self.bary, w, self.M, stop, rows=idx)
        if stop < 0:
            # terminate by drawing from the current state; this keeps the martingale property
            u = stream.substream(1).generator().random()
            row = tab[-1]
            tab[-1] = row[min(int(u * self.M), self.M - 1)]
        t_end = t[idx[-1]]
        tail_n = max(1, int(np.ceil((1.0 - t_end) / self.tail_spacing)))
        t_tail = np.linspace(t_end, 1.0, tail_n + 1)[1:]
        t_tail = np.union1d(t_tail, [0.98]) if t_end < 0.98 else t_tail
        t_tail = t_tail[t_tail > t_end]
        gaps = np.diff(np.concatenate([[t_end], t_tail]))
        tail_inc = stream.substream(2).normals(t_tail.size) * np.sqrt(gaps)
        b_tail = b[idx[-1]] + np.cumsum(tail_inc)
        times = np.concatenate([t[idx], t_tail])
        tables = np.concatenate([tab, np.broadcast_to(tab[-1], (t_tail.size, self.M))])
        series = MvmSeries(times, tables, self.kind)
        series.extras["forced"] = stop < 0
        return series, np.concatenate([b[idx], b_tail])


def make_alternative(kind: str, mu: QuantileMeasure, M: int = 512, root_dt: float | None = None,
                     ay_ds: float | None = None, ay_horizon: float = 15.0, n_quad: int = 200) -> Alternative:
    var = mu.variance()
    if kind == "root":
        dt = root_dt if root_dt is not None else 3e-4 * var
        bar = solve_root_barrier(mu, dt=dt)
        n_top = int(np.rint(bar.horizon / dt))
        stride = max(1, n_top // n_quad)
        lat = RootLattice(bar, stride)
        n = int(np.ceil((n_top + 1) / stride)) * stride
        return Alternative("root", mu, dt, n * dt, var, M, stride, lattice=lat)
    if kind == "ay":
        ds = ay_ds if ay_ds is not None else 3e-3 * var
        n = int(np.ceil(ay_horizon * var / ds))
        stride = max(1, n // n_quad)
        n = int(np.ceil(n / stride)) * stride
        return Alternative("ay", mu, ds, n * ds, var, M, stride, bary=ay_barycentre(mu))
    raise ValueError(f"unknown alternative {kind!r}")


def bass_objective_samples(mu: QuantileMeasure, weights: dict, ps: Sequence[float], n_paths: int, seed: int,
                           n_steps: int = 400, M: int = 512, threads: int = 1) -> dict:
    """Per-path Bass objectives on a uniform grid refined near ``t = 1``."""
    h = bass_scale(mu)
    t = np.union1d(np.linspace(0.0, 1.0, n_steps + 1), np.linspace(0.98, 1.0, 41))

    def one(i):
        inc = RngStream(seed, i).normals(t.size - 1) * np.sqrt(np.diff(t))
        b = np.concatenate([[0.0], np.cumsum(inc)])
        res = {}
        for p in ps:
            g = bass_eta_wpp(h, b, 1.0 - t, p, M)
            for name, w in weights.items():
                res[(name, p)] = float(np.trapezoid(w(t) * g, t))
            res[("terminal", p)] = abs(b[-1] - float(h(b[-1]))) ** p
        res["b1"] = b[-1]
        res["m1"] = float(h(b[-1]))
        return res

    rows = parallel_map(one, range(n_paths), threads)
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def alternative_objective_samples(alt: Alternative, weights: dict, ps: Sequence[float], n_paths: int, seed: int,
                                  threads: int = 1) -> dict:
    def one(i):
        series, b = alt.build(i, seed)
        res = {}
        for p in ps:
            g = eta_distance(series, b, p)
            for name, w in weights.items():
                res[(name, p)] = float(np.trapezoid(w(series.times) * g, series.times))
            res[("terminal", p)] = abs(b[-1] - series.terminal.mean) ** p
        res["b1"] = b[-1]
        res["m1"] = series.terminal.mean
        res["forced"] = float(series.extras["forced"])
        return res

    rows = parallel_map(one, range(n_paths), threads)
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def opt1_comparison(mu: QuantileMeasure, n_paths: int = 4000, seed: int = 3, ps=(1.0, 2.0),
                    weight_names=("one", "linear", "bump"), M: int = 512, threads: int = 1,
                    alternatives: dict | None = None, slack: float = 3.0) -> dict:
    """Bass objective against re-clocked Root and Azema-Yor alternatives."""
    weights = {name: weight_function(name) for name in weight_names}
    if alternatives is None:
        alternatives = {"root": make_alternative("root", mu, M), "ay": make_alternative("ay", mu, M)}
    bass = bass_objective_samples(mu, weights, ps, n_paths, seed, M=M, threads=threads)
    alts = {k: alternative_objective_samples(a, weights, ps, n_paths, seed + 1 + j, threads)
            for j, (k, a) in enumerate(alternatives.items())}
    rows = []
    for p in ps:
        for name in list(weight_names) + ["terminal"]:
            e_b = estimate_from(bass[(name, p)])
            for alt_name, samples in alts.items():
                e_a = estimate_from(samples[(name, p)])
                se = combined_se(e_b, e_a)
                ok = e_b.value <= e_a.value - slack * se
                rows.append((p, name, alt_name, e_b.value, e_b.se, e_a.value, e_a.se, se,
                             (e_a.value - e_b.value) / se if se > 0 else np.inf, bool(ok)))
    table = Table(["p", "weight", "alternative", "bass", "bass_se", "alt", "alt_se", "combined_se", "z", "pass"], rows)
    var = mu.variance()
    cross = {"bass": terminal_cross_check(bass["b1"], bass["m1"], var)}
    for k, s in alts.items():
        cross[k] = terminal_cross_check(s["b1"], s["m1"], var)
    closed = float(bass_eta_wpp(bass_scale(mu), [0.0], [1.0], 1.0, M)[0])
    forced = {k: float(s["forced"].mean()) for k, s in alts.items()}
    return {"table": table, "cross": cross, "bass_closed_form_p1": closed, "forced_fraction": forced,
            "alternatives": alternatives}


# speed
def bass_speed(mu: QuantileMeasure, n_paths: int = 200, n_steps: int = 1000, seed: int = 5, M: int = 512,
               levels_in_ladder: int = 4, checkpoints=(0.25, 0.5, 0.75, 1.0)) -> dict:
    """Speed of canonical and natural-time Bass series at corresponding times.

    The canonical ladder starts at the grid step; the natural ladder starts at
    the mean natural-time step of each path.  Both the finest-mesh values and
    the ladder minima are averaged over paths.
    """
    h = bass_scale(mu)
    grid = TimeGrid(0.0, 1.0, n_steps)
    speed, qv = [], []
    out = {k: [] for k in ("canonical_finest", "natural_finest", "canonical_min", "natural_min")}
    for i in range(n_paths):
        series = bass_mvm_series(h, simulate_brownian(grid, 0.0, RngStream(seed, i)), M)
        ladder = [grid.dt * 2**k for k in range(levels_in_ladder)]
        est = estimate_speed(series, ladder)
        speed.append(est.finest[-1])
        qv.append(est.mean_qv[-1])
        nat = bass_natural_time(series)
        step = nat.times[-1] / n_steps
        nat_est = estimate_speed(nat, [step * 2**k for k in range(levels_in_ladder)])
        idx = [series.index_at(c) for c in checkpoints]
        out["canonical_finest"].append(est.finest[idx])
        out["natural_finest"].append(nat_est.finest[idx])
        out["canonical_min"].append(est.liminf[idx])
        out["natural_min"].append(nat_est.liminf[idx])
    res = {k: np.mean(v, axis=0) for k, v in out.items()}
    res.update({"speed": estimate_from(speed), "mean_qv": estimate_from(qv), "checkpoints": np.array(checkpoints)})
    return res


def two_point_lattice(dt: float = 1e-4, a: float = 1.0, stride: int = 1) -> RootLattice:
    xs = root_space_grid(QuantileMeasure.two_point(a, 2), np.sqrt(3.0 * dt))
    return RootLattice(Barrier.exit_interval(a, xs, dt), stride)


def root_series_until_stop(lattice: RootLattice, path_id: int, seed: int, M: int, stride: int,
                           chunk_time: float = 1.0, max_time: float = 100.0) -> MvmSeries:
    bar = lattice.barrier
    dt = lattice.dt
    x0, dx = float(bar.xs[0]), bar.dx

    def stop(v):
        return _kernels.barrier_hit(v, np.arange(v.size) * dt, x0, dx, bar.r, 0)

    chunk = int(np.ceil(chunk_time / dt / stride)) * stride
    values, hit = run_until_stop(stop, dt, RngStream(seed, path_id), chunk, int(max_time / dt))
    n = (hit if hit >= 0 else values.size - 1)
    n = int(np.ceil(n / stride)) * stride
    extra = n + 1 - values.size
    if extra > 0:
        values = np.concatenate([values, np.full(extra, values[-1])])
    path = SamplePath(TimeGrid(0.0, n * dt, n) if n > 0 else TimeGrid(0.0, 0.0, 0), values[: n + 1])
    if n == 0:
        return MvmSeries([0.0], np.full((1, M), values[0]), "root")
    return root_mvm_series(lattice, path, M, stride)


def ay_series_until_stop(bary: AyBarycentre, path_id: int, seed: int, M: int, dt: float, stride: int,
                         chunk_time: float = 1.0, max_time: float = 100.0) -> MvmSeries:
    chunk = int(np.ceil(chunk_time / dt / stride)) * stride
    values, stop = run_until_stop(lambda v: ay_stop_index(bary, v), dt, RngStream(seed, path_id), chunk,
                                  int(max_time / dt))
    n = stop if stop >= 0 else values.size - 1
    n = int(np.ceil(n / stride)) * stride
    if n + 1 > values.size:
        values = np.concatenate([values, np.full(n + 1 - values.size, values[-1])])
    values = values[: n + 1]
    idx = np.arange(0, n + 1, stride)
    tab = ay_tables(bary, values, M, stop if 0 <= stop <= n else -1, rows=idx)
    return MvmSeries(idx * dt, tab, "azema-yor")


def two_point_speed(n_paths: int = 200, dt: float = 1e-4, seed: int = 6, M: int = 256, stride: int = 10) -> dict:
    lat = two_point_lattice(dt)
    speeds, qvs = [], []
    for i in range(n_paths):
        s = root_series_until_stop(lat, i, seed, M, stride)
        est = estimate_speed(s, [stride * dt])
        speeds.append(est.finest[-1])
        qvs.append(est.mean_qv[-1])
    return {"speed": estimate_from(speeds), "mean_qv": estimate_from(qvs)}


def coinflip_speed(eps: float = 0.05, n_paths: int = 50, n_steps: int = 2000, seed: int = 7, M: int = 512) -> dict:
    """Speed against mean quadratic variation over the flip window of the coin-flip series."""
    grid = TimeGrid(0.0, 1.0, n_steps)
    speed, qv, flipped = [], [], 0
    for i in range(n_paths):
        s = coinflip_mvm_series(eps, simulate_brownian(grid, 0.0, RngStream(seed, i)), M)
        k = s.extras["flip_index"]
        if k < 0:
            continue
        flipped += 1
        lo, hi = max(k - 1, 0), min(k + 1, len(s) - 1)
        est = estimate_speed(s.subset(np.arange(lo, hi + 1)))
        speed.append(est.finest[-1])
        qv.append(est.mean_qv[-1])
    return {"speed": np.array(speed), "mean_qv": np.array(qv), "flipped": flipped}


# second optimality
def opt2_samples(kind: str, lam: QuantileMeasure, n_paths: int, seed: int, dt: float = 1e-4, M: int = 256,
                 stride: int = 10, threads: int = 1, rho: ScaleFunction | None = None) -> dict:
    """Total speed and stopping time per scenario for ``root``, ``ay`` or ``two_point``."""
    if kind == "root":
        lat = RootLattice(solve_root_barrier(lam, dt=dt), stride)
        build = lambda i: root_series_until_stop(lat, i, seed, M, stride)  # noqa: E731
    elif kind == "two_point":
        lat = two_point_lattice(dt, stride=stride)
        build = lambda i: root_series_until_stop(lat, i, seed, M, stride)  # noqa: E731
    elif kind == "ay":
        bary = ay_barycentre(lam)
        build = lambda i: ay_series_until_stop(bary, i, seed, M, dt, stride)  # noqa: E731
    else:
        raise ValueError(kind)

    def one(i):
        s = build(i)
        return series_speed_total(s, rho), float(s.times[-1]), s.is_terminated()

    out = parallel_map(one, range(n_paths), threads)
    return {"speed": np.array([o[0] for o in out]), "tau": np.array([o[1] for o in out]),
            "terminated": np.array([o[2] for o in out])}


def opt2_comparison(lam: QuantileMeasure, n_paths: int = 20_000, seed: int = 8, dt: float = 1e-4, M: int = 256,
                    stride: int = 10, threads: int = 1, two_point_paths: int | None = None) -> dict:
    root = opt2_samples("root", lam, n_paths, seed, dt, M, stride, threads)
    ay = opt2_samples("ay", lam, n_paths, seed + 1, dt, M, stride, threads)
    tp = opt2_samples("two_point", lam, two_point_paths or n_paths, seed + 2, dt, 256, stride, threads)
    return {
        "root_sq": estimate_from(root["speed"] ** 2),
        "ay_sq": estimate_from(ay["speed"] ** 2),
        "root_id": estimate_from(root["speed"]),
        "ay_id": estimate_from(ay["speed"]),
        "two_point_sq": estimate_from(tp["speed"] ** 2),
        "var": lam.variance(),
        "open": {k: int((~d["terminated"]).sum()) for k, d in (("root", root), ("ay", ay), ("two_point", tp))},
    }


# Lipschitz-Markov
def lipschitz_markov(n_pairs: int = 1000, seed: int = 9, M: int = 512, dt: float = 2.5e-4, t_root: float = 0.2,
                     t_bass: float = 0.5) -> dict:
    mu = QuantileMeasure.uniform(-1, 1, 4096)
    h = bass_scale(mu)
    z = standard_normal_nodes(M)

    def bass_factory(i):
        b = float(RngStream(seed, i).normals(1)[0] * np.sqrt(t_bass))
        tab = bass_tables(h, [b], [1.0 - t_bass], M)
        return MvmSeries([t_bass], tab, "bass")

    lat = RootLattice(solve_root_barrier(mu, dt=dt), stride=int(round(t_root / dt)))
    n = int(round(t_root / dt))
    grid = TimeGrid(0.0, n * dt, n)

    def root_factory(i):
        path = simulate_brownian(grid, 0.0, RngStream(seed + 1, i))
        s = root_mvm_series(lat, path, M, n)
        return s

    bass = lipschitz_markov_check(bass_factory, t_bass, n_pairs)
    root = lipschitz_markov_check(root_factory, t_root, n_pairs)
    bass_tol = float((mu.values[-1] - mu.values[0]) / M)
    return {"bass": bass, "root": root, "bass_tol": bass_tol, "root_tol": lat.barrier.dx}
