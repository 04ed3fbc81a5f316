"""Wasserstein distance processes between measure-valued martingales.

Includes statistical (sub)martingale tests, the monotone transport coupling,
the Lipschitz-Markov check and the weighted distance objective to the
Gaussian martingale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constructions import MvmSeries, ScaleFunction, check_atomless
from .io import Table, emit_csv
from .measure import QuantileMeasure, resample, standard_normal_nodes, wasserstein_p
from .stochastic import RngStream, SamplePath, TimeGrid, brownian_values


def _row_wpp(A: np.ndarray, B: np.ndarray, p: float) -> np.ndarray:
    d = np.abs(A - B)
    return np.mean(d if p == 1 else d**p, axis=-1)


def distance_process(series1: MvmSeries, series2: MvmSeries, p: float = 1.0) -> np.ndarray:
    """``W_p^p`` between the two series at each common time."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if len(series1) != len(series2) or not np.allclose(series1.times, series2.times, rtol=0, atol=1e-12):
        raise ValueError("series are not on the same time grid")
    A, B = series1.tables, series2.tables
    if A.shape[1] != B.shape[1]:
        raise ValueError("series use different quantile grid sizes")
    return _row_wpp(A, B, p)


def constant_series(mu: QuantileMeasure, times) -> MvmSeries:
    times = np.asarray(times, float)
    return MvmSeries(times, np.broadcast_to(mu.values, (times.size, mu.M)).copy(), "constant")


@dataclass
class TestReport:
    """Per-time estimates and verdicts of a statistical martingale test."""

    __test__ = False  # not a pytest class

    kind: str
    times: np.ndarray
    estimates: np.ndarray
    se: np.ndarray
    step_ok: np.ndarray
    verdict: bool
    n_samples: int
    details: dict = field(default_factory=dict)

    def to_table(self) -> Table:
        verdicts = ["PASS" if ok else "FAIL" for ok in self.step_ok]
        return Table.from_columns({"t": self.times, "estimate": self.estimates, "se": self.se, "verdict": verdicts})

    def to_csv(self, path):
        return emit_csv(self.to_table(), path)

    def summary(self) -> str:
        lines = [f"kind={self.kind}", f"verdict={'PASS' if self.verdict else 'FAIL'}", f"n_samples={self.n_samples}"]
        for k in sorted(self.details):
            v = self.details[k]
            lines.append(f"{k}={format(v, '.9g') if isinstance(v, float) else v}")
        return "\n".join(lines) + "\n"

    def write_summary(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.summary())


def _collect(sampler: Callable, ids, n_times: int) -> np.ndarray:
    X = np.empty((len(ids), n_times))
    for row, i in enumerate(ids):
        x = np.asarray(sampler(i), float)
        if x.shape != (n_times,):
            raise ValueError(f"sampler returned shape {x.shape}, expected ({n_times},)")
        X[row] = x
    if not np.all(np.isfinite(X)):
        raise ValueError("sampler returned non-finite values")
    return X


def _se(x: np.ndarray, axis: int = 0) -> np.ndarray:
    n = x.shape[axis]
    return np.std(x, axis=axis, ddof=1) / np.sqrt(n)


def monotonicity_report(X: np.ndarray, times, slack: float = 3.0, kind: str = "submartingale") -> TestReport:
    """Non-decreasing means up to ``slack`` standard errors of paired increments."""
    times = np.asarray(times, float)
    n = X.shape[0]
    est = X.mean(axis=0)
    se = _se(X)
    inc = np.diff(X, axis=1)
    inc_mean = inc.mean(axis=0)
    inc_se = _se(inc) if n > 1 else np.zeros(inc.shape[1])
    ok = np.concatenate([[True], inc_mean >= -slack * inc_se])
    details = {"slack": float(slack), "min_increment_z": float(np.min(inc_mean / np.where(inc_se > 0, inc_se, np.inf)))
               if inc.shape[1] else 0.0}
    return TestReport(kind, times, est, se, ok, bool(ok.all()), n, details)


def submartingale_test(sampler: Callable, times, p: float = 1.0, n_paths: int = 1000, slack: float = 3.0,
                       first_id: int = 0) -> TestReport:
    """Test that ``E[W_p^p(xi1_t, xi2_t)]`` is non-decreasing in ``t``.

    Parameters
    ----------
    sampler : callable
        ``sampler(path_id) -> array`` of ``W_p^p`` values at ``times`` for
        one independent scenario.
    times : array_like
    p : float
        Recorded in the report; the sampler computes the distance itself.
    n_paths : int
        At least 100.
    """
    if n_paths < 100:
        raise ValueError("need at least 100 paths")
    times = np.asarray(times, float)
    X = _collect(sampler, range(first_id, first_id + n_paths), times.size)
    rep = monotonicity_report(X, times, slack)
    rep.details["p"] = float(p)
    return rep


def constancy_test(sampler: Callable, times, n_paths: int = 1000, slack: float = 3.0, first_id: int = 0) -> TestReport:
    """Test that the expectation is constant in time, relative to ``times[0]``."""
    times = np.asarray(times, float)
    X = _collect(sampler, range(first_id, first_id + n_paths), times.size)
    d = X - X[:, :1]
    dm = d.mean(axis=0)
    dse = _se(d)
    ok = np.abs(dm) <= slack * dse + 1e-14
    return TestReport("martingale", times, X.mean(axis=0), _se(X), ok, bool(ok.all()), X.shape[0],
                      {"slack": float(slack)})


def branching_martingale_test(
    pair_factory: Callable[[SamplePath], np.ndarray],
    s: float,
    t: float,
    n_outer: int,
    n_branch: int,
    grid: TimeGrid,
    seed: int = 0,
    start: float = 0.0,
    slack: float = 3.0,
) -> TestReport:
    """Conditional test of ``E[W_t | F_s] = W_s`` by branching at ``s``.

    Each outer scenario fixes a path prefix up to ``s``; ``n_branch``
    continuations come from independent sub-streams of the outer stream.
    ``pair_factory(path)`` must return the distance process on ``grid``.

    The reported ``defect`` is the mean over outer scenarios of
    ``mean_branches W_t - W_s``.
    """
    if s > t:
        raise ValueError("need s <= t")
    ks, kt = grid.index_of(s), grid.index_of(t)
    dt = grid.dt
    defects = np.empty(n_outer)
    ws = np.empty(n_outer)
    wt = np.empty(n_outer)
    for i in range(n_outer):
        outer = RngStream(seed, i)
        prefix = brownian_values(grid.n_steps, dt, start, outer)
        vals_t = np.empty(n_branch)
        w_s = None
        for b in range(n_branch):
            v = prefix.copy()
            if grid.n_steps > ks:
                inc = outer.substream(b + 1).normals(grid.n_steps - ks) * np.sqrt(dt)
                v[ks + 1 :] = v[ks] + np.cumsum(inc)
            w = np.asarray(pair_factory(SamplePath(grid, v, outer)), float)
            if w_s is None:
                w_s = w[ks]
            vals_t[b] = w[kt]
        ws[i] = w_s
        wt[i] = vals_t.mean()
        defects[i] = wt[i] - w_s
    defect = float(defects.mean())
    dse = float(_se(defects)) if n_outer > 1 else 0.0
    mart_ok = abs(defect) <= slack * dse + 1e-14
    sub_ok = defect >= -slack * dse - 1e-14
    times = np.array([grid.times[ks], grid.times[kt]])
    est = np.array([ws.mean(), wt.mean()])
    se = np.array([_se(ws), _se(wt)]) if n_outer > 1 else np.zeros(2)
    details = {"defect": defect, "defect_se": dse, "submartingale": sub_ok, "n_branch": int(n_branch)}
    return TestReport("branching", times, est, se, np.array([True, mart_ok]), bool(mart_ok), n_outer, details)


@dataclass(frozen=True, eq=False)
class TransportKernel:
    """Monotone rearrangement from an atomless source grid onto a target grid.

    On a quantile grid the optimal plan is deterministic: level ``k`` of the
    source is sent to level ``k`` of the target.  Between source nodes the
    map is linear.
    """

    source: np.ndarray
    target: np.ndarray

    @classmethod
    def between(cls, source: QuantileMeasure, target: QuantileMeasure) -> "TransportKernel":
        check_atomless(source, "initial state")
        check_atomless(target, "target measure")
        if target.M != source.M:
            target = resample(target, source.M)
        return cls(np.array(source.values), np.array(target.values))

    def as_map(self) -> ScaleFunction:
        return ScaleFunction(self.source, self.target)

    def __call__(self, x):
        return np.interp(x, self.source, self.target)

    def apply(self, mu: QuantileMeasure) -> QuantileMeasure:
        return QuantileMeasure(self(mu.values))


def coupled_mvm_from_plan(series1: MvmSeries, mu: QuantileMeasure) -> MvmSeries:
    """Push every state of ``series1`` through the monotone kernel ``xi1_0 -> mu``."""
    kernel = TransportKernel.between(series1.at(0), mu)
    out = series1.pushforward(kernel, "coupled")
    out.extras["kernel"] = kernel
    return out


@dataclass
class LipschitzReport:
    t: float
    max_defect: float
    defects: np.ndarray
    mean_gaps: np.ndarray
    n_pairs: int


def lipschitz_markov_check(series_factory: Callable[[int], MvmSeries], t: float, n_pairs: int,
                           first_id: int = 0) -> LipschitzReport:
    """Largest ``|W1(xi_t(w), xi_t(w')) - |mean difference||`` over path pairs.

    ``series_factory(path_id)`` returns the series of one scenario; pairs use
    consecutive path ids.
    """
    defects = np.empty(n_pairs)
    gaps = np.empty(n_pairs)
    for i in range(n_pairs):
        a = series_factory(first_id + 2 * i).state_at(t)
        b = series_factory(first_id + 2 * i + 1).state_at(t)
        gap = abs(a.mean - b.mean)
        defects[i] = abs(wasserstein_p(a, b, 1.0) - gap)
        gaps[i] = gap
    return LipschitzReport(float(t), float(defects.max()), defects, gaps, n_pairs)


# objective against the Gaussian martingale
def weight_function(name: str, width: float = 0.02) -> Callable[[np.ndarray], np.ndarray]:
    """Weight functions on ``[0, 1]``: ``one``, ``linear`` or ``bump``.

    ``bump`` is the triangle of unit mass on ``[1 - width, 1]`` peaking at 1,
    a smoothed point mass at the terminal time.
    """
    if name == "one":
        return lambda t: np.ones_like(np.asarray(t, float))
    if name == "linear":
        return lambda t: np.asarray(t, float).copy()
    if name == "bump":
        lo = 1.0 - width
        return lambda t: np.clip(np.asarray(t, float) - lo, 0.0, None) * (2.0 / width**2)
    raise ValueError(f"unknown weight function {name!r}")


@dataclass
class Estimate:
    value: float
    se: float
    n: int
    samples: np.ndarray | None = None

    def __str__(self) -> str:
        return f"{self.value:.6g} +/- {self.se:.2g} (n={self.n})"


def estimate_from(samples) -> Estimate:
    x = np.asarray(samples, float)
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return Estimate(float(x.mean()), se, x.size, x)


def combined_se(*estimates: Estimate) -> float:
    return float(np.sqrt(sum(e.se**2 for e in estimates)))


def eta_distance(series: MvmSeries, b: np.ndarray, p: float = 1.0) -> np.ndarray:
    """``W_p^p(N(b_t, 1 - t), xi_t)`` along a series on ``[0, 1]``."""
    z = standard_normal_nodes(series.M)
    s = np.sqrt(np.clip(1.0 - series.times, 0.0, None))
    eta = np.asarray(b, float)[:, None] + s[:, None] * z[None, :]
    return _row_wpp(eta, series.tables, p)


def path_objective(series: MvmSeries, b: np.ndarray, w: Callable, p: float = 1.0) -> float:
    """Trapezoidal ``int_0^1 w(t) W_p^p(eta_t, xi_t) dt`` for one scenario."""
    t = series.times
    if abs(t[0]) > 1e-12 or abs(t[-1] - 1.0) > 1e-12:
        raise ValueError("objective series must span [0, 1]")
    wt = np.asarray(w(t), float)
    if np.any(wt < 0):
        raise ValueError("weight function must be non-negative")
    return float(np.trapezoid(wt * eta_distance(series, b, p), t))


def objective_opt1(
    series_factory: Callable[[int], tuple[MvmSeries, np.ndarray]],
    w: Callable,
    p: float,
    n_paths: int,
    mu: QuantileMeasure,
    start_tol: float | None = None,
    first_id: int = 0,
) -> Estimate:
    """Monte Carlo estimate of ``E int_0^1 w(t) W_p^p(eta_t, xi_t) dt``.

    ``series_factory(path_id)`` returns ``(series, b)`` where the series spans
    ``[0, 1]`` and ``b`` holds the driving Brownian motion at the series
    times.  The first state must match ``mu`` within ``start_tol`` in W1.
    """
    lo, hi = mu.support
    start_tol = 0.01 * (hi - lo) if start_tol is None else start_tol
    vals = np.empty(n_paths)
    for i in range(n_paths):
        series, b = series_factory(first_id + i)
        if i == 0:
            gap = wasserstein_p(series.at(0), mu, 1.0)
            if gap > start_tol:
                raise ValueError(f"series starts {gap:.3g} away from the target in W1")
        vals[i] = path_objective(series, b, w, p)
    return estimate_from(vals)


def terminal_cross_check(b1, m1, var_mu: float) -> dict:
    """Two forms of the terminal quadratic objective.

    ``E(B_1 - M_1)^2`` against ``1 + Var(mu) - 2 E[B_1 M_1]``, with the
    standard error of their per-sample difference.
    """
    b1 = np.asarray(b1, float)
    m1 = np.asarray(m1, float)
    direct = (b1 - m1) ** 2
    via_product = 1.0 + var_mu - 2.0 * b1 * m1
    diff = direct - via_product
    return {
        "direct": estimate_from(direct),
        "product_form": estimate_from(via_product),
        "difference": estimate_from(diff),
        "product": estimate_from(b1 * m1),
    }
