"""Command line entry point: ``mvmlab <subcommand> [--config ...]``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .appendix import (
    HittingDensityParams,
    exit_density_table,
    first_passage_cdf,
    hitting_density_one_sided,
    hitting_density_two_sided,
    mc_exit_probability,
    reflection_table,
    small_time_table,
    two_sided_cdf,
    tv_bound_table,
)
from .config import ExperimentConfig
from .constructions import ay_barycentre, ay_mvm_series, bass_mvm_series, bass_scale
from .io import SeriesBundle, Table, emit_csv, emit_svg
from .root import RootLattice, root_mvm_series, solve_root_barrier
from .speed import estimate_speed
from .stochastic import RngStream, TimeGrid, simulate_brownian
from .wasserstein import branching_martingale_test, weight_function

log = logging.getLogger("mvmlab")

SUBCOMMANDS = ("barrier", "simulate", "wasserstein", "opt1", "speed", "opt2", "appendix")


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, out: Path, cfg: ExperimentConfig, threads: int):
        self.out = out
        self.cfg = cfg
        self.threads = threads
        self.files: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, table: Table) -> None:
        self.files.append(emit_csv(table, self.out / name))

    def svg(self, name: str, bundle: SeriesBundle) -> None:
        self.files.append(emit_svg(bundle, self.out / name))

    def manifest(self, commands) -> Path:
        lines = [
            f"mvmlab {__version__}",
            f"subcommands: {' '.join(commands)}",
            f"config_sha256: {self.cfg.digest()}",
            f"seed: {self.cfg.seed}",
            "files:",
        ]
        for f in sorted(set(self.files)):
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            lines.append(f"  {f.name} {digest}")
        path = self.out / "manifest.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _finite(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def cmd_barrier(run: Run) -> None:
    cfg = run.cfg
    mu = cfg.measure("barrier")
    bar = solve_root_barrier(mu, dt=cfg.float("barrier", "dt"), margin=cfg.float("barrier", "margin"))
    run.csv("barrier.csv", bar.to_table())
    run.svg("barrier.svg", SeriesBundle("Root barrier", "x", "r(x)").add(cfg.get("barrier", "measure"),
                                                                          *_finite(bar.xs, bar.r)))
    lam = cfg.measure("barrier", "ks_measure")
    res = ex.embedded_law_ks(lam, cfg.int("barrier", "ks_paths"), cfg.float("barrier", "ks_dt"),
                             seed=cfg.seed + 40, threads=run.threads)
    run.csv("embedded_law.csv", Table(["measure", "n_paths", "unstopped", "ks"],
                                      [(cfg.get("barrier", "ks_measure"), res["samples"].size,
                                        res["unstopped"], res["ks"])]))
    log.info("barrier: %d nodes, embedded law KS %.4g", bar.xs.size, res["ks"])


def cmd_simulate(run: Run) -> None:
    cfg = run.cfg
    mu = cfg.measure("simulate")
    M = cfg.M
    dec = cfg.int("simulate", "decimate")
    levels = cfg.int("simulate", "max_levels")
    n = cfg.int("simulate", "n_steps")
    dt = cfg.float("simulate", "dt")
    grid = TimeGrid(0.0, n * dt, n)
    path = simulate_brownian(grid, 0.0, RngStream(cfg.seed + 10, 0))
    run.csv("path.csv", path.to_table())
    canonical = simulate_brownian(TimeGrid(0.0, 1.0, n), 0.0, RngStream(cfg.seed + 10, 1))
    series = {
        "bass": bass_mvm_series(bass_scale(mu), canonical, M),
        "azema_yor": ay_mvm_series(ay_barycentre(mu), path, M),
    }
    bar = solve_root_barrier(mu, dt=dt)
    series["root"] = root_mvm_series(RootLattice(bar, dec), path, M, dec)
    plot = SeriesBundle("Mean of the measure-valued martingale", "t", "mean")
    for name, s in series.items():
        step = dec if name != "root" else 1
        run.csv(f"series_{name}.csv", s.to_table(decimate=step, max_levels=levels))
        plot.add(name, s.times, s.means)
    run.svg("series_means.svg", plot)


def cmd_wasserstein(run: Run) -> None:
    cfg = run.cfg
    M = cfg.M
    mu = cfg.measure("wasserstein", "bass_measure")
    tab = ex.bass_constancy(mu, n_paths=cfg.int("wasserstein", "bass_paths"), seed=cfg.seed + 1, M=M,
                            threads=run.threads)
    run.csv("bass_constancy.csv", tab)
    lam = cfg.measure("wasserstein", "root_measure")
    reps = ex.root_submartingale(lam, cfg.floats("wasserstein", "checkpoints"), cfg.int("wasserstein", "root_paths"),
                                 seed=cfg.seed + 2, dt=cfg.float("wasserstein", "root_dt"), M=M,
                                 threads=run.threads)
    plot = SeriesBundle("Expected W1 distance", "t", "E[W1]")
    plot.add("bass vs gaussian", tab.column("t"), tab.column("estimate"))
    for name, rep in reps.items():
        run.csv(f"root_submartingale_{name}.csv", rep.to_table())
        if name != "reversed":
            plot.add(f"root vs {'target' if name == 'constant' else 'gaussian'}", rep.times, rep.estimates)
    run.svg("wasserstein.svg", plot)

    # branching check of the Bass distance process
    h = bass_scale(mu)
    grid = TimeGrid(0.0, 1.0, 100)
    sm = max(8, cfg.M // 4)

    def pair(path):
        s = bass_mvm_series(h, path, sm)
        return ex.eta_distance(s, path.values, 1.0)

    br = branching_martingale_test(pair, 0.3, 0.7, cfg.int("wasserstein", "branch_outer"),
                                   cfg.int("wasserstein", "branch_inner"), grid, seed=cfg.seed + 3)
    run.csv("bass_branching.csv", Table(["s", "t", "defect", "defect_se", "verdict"],
                                        [(0.3, 0.7, br.details["defect"], br.details["defect_se"], br.verdict)]))
    lm = ex.lipschitz_markov(cfg.int("wasserstein", "lm_pairs"), seed=cfg.seed + 9, M=M)
    rows = [(k, lm[k].t, lm[k].n_pairs, lm[k].max_defect, 3 * lm[f"{k}_tol"],
             bool(lm[k].max_defect <= 3 * lm[f"{k}_tol"])) for k in ("bass", "root")]
    run.csv("lipschitz_markov.csv", Table(["construction", "t", "n_pairs", "max_defect", "tolerance", "pass"], rows))


def cmd_opt1(run: Run) -> None:
    cfg = run.cfg
    mu = cfg.measure("opt1")
    ps = cfg.floats("opt1", "p")
    names = cfg.names("opt1", "weights")
    res = ex.opt1_comparison(mu, cfg.int("opt1", "n_paths"), seed=cfg.seed + 3, ps=ps, weight_names=names,
                             M=cfg.M, threads=run.threads)
    run.csv("opt1.csv", res["table"])
    rows = [(k, c["direct"], c["product_form"], c["difference"]) for k, c in res["cross"].items()]
    run.csv("opt1_terminal_check.csv", Table(["construction", "direct", "product_form", "difference"], rows))
    tab = res["table"]
    plot = SeriesBundle("Weighted objective by weight", "weight index", "objective")
    sel = [i for i, r in enumerate(tab.rows) if r[2] == "root"]
    plot.add("bass", range(len(sel)), [tab.rows[i][3] for i in sel])
    for alt in res["alternatives"]:
        plot.add(alt, range(len(sel)), [r[5] for r in tab.rows if r[2] == alt])
    run.svg("opt1.svg", plot)


def cmd_speed(run: Run) -> None:
    cfg = run.cfg
    mu = cfg.measure("speed")
    n_steps = cfg.int("speed", "n_steps")
    ladder = cfg.int("speed", "ladder")
    path = simulate_brownian(TimeGrid(0.0, 1.0, n_steps), 0.0, RngStream(cfg.seed + 5, 0))
    series = bass_mvm_series(bass_scale(mu), path, cfg.M)
    est = estimate_speed(series, [path.grid.dt * 2**k for k in range(ladder)])
    run.csv("speed_path.csv", est.to_table())
    run.svg("speed_path.svg", SeriesBundle("Speed against mean quadratic variation", "t", "value")
            .add("speed (finest)", est.times, est.finest).add("mean QV", est.times, est.mean_qv))
    n_paths = cfg.int("speed", "n_paths")
    bass = ex.bass_speed(mu, n_paths, n_steps, seed=cfg.seed + 5, M=cfg.M, levels_in_ladder=ladder)
    tp = ex.two_point_speed(n_paths, seed=cfg.seed + 6, M=min(cfg.M, 256))
    cf = ex.coinflip_speed(cfg.float("speed", "coinflip_eps"), n_paths, seed=cfg.seed + 7, M=cfg.M)
    rows = []
    for name, r in (("bass", bass), ("two_point_root", tp)):
        s, q = r["speed"].value, r["mean_qv"].value
        rows.append((name, s, q, abs(s - q) / q, bool(abs(s - q) / q <= 0.05)))
    s, q = float(np.mean(cf["speed"])), float(np.mean(cf["mean_qv"]))
    rows.append(("coinflip", s, q, s / q if q > 0 else np.inf, bool(s >= 10 * q)))
    run.csv("speed_summary.csv", Table(["construction", "speed", "mean_qv", "ratio", "pass"], rows))
    cp = bass["checkpoints"]
    run.csv("speed_time_change.csv", Table.from_columns({
        "t": cp, "canonical": bass["canonical_finest"], "natural": bass["natural_finest"],
        "rel_diff": np.abs(bass["canonical_finest"] - bass["natural_finest"]) / bass["canonical_finest"]}))


def cmd_opt2(run: Run) -> None:
    cfg = run.cfg
    lam = cfg.measure("opt2")
    n = cfg.int("opt2", "n_paths")
    dt = cfg.float("opt2", "dt")
    F = np.square if cfg.get("opt2", "F") == "square" else (lambda x: x)
    samples = {k: ex.opt2_samples(k, lam, n, cfg.seed + 8 + j, dt, min(cfg.M, 256), threads=run.threads)
               for j, k in enumerate(("root", "ay"))}
    rows = []
    plot = SeriesBundle("Sorted total speed", "quantile level", "speed")
    for k, d in samples.items():
        e = ex.estimate_from(F(d["speed"]))
        rows.append((k, cfg.get("opt2", "F"), e.value, e.se, float(d["speed"].mean()), int((~d["terminated"]).sum())))
        plot.add(k, (np.arange(n) + 0.5) / n, np.sort(d["speed"]))
    tp = ex.opt2_samples("two_point", lam, n, cfg.seed + 10, dt, 256, threads=run.threads)
    e = ex.estimate_from(F(tp["speed"]))
    rows.append(("two_point_root", cfg.get("opt2", "F"), e.value, e.se, float(tp["speed"].mean()),
                 int((~tp["terminated"]).sum())))
    run.csv("opt2.csv", Table(["construction", "F", "estimate", "se", "mean_speed", "open"], rows))
    run.svg("opt2.svg", plot)


def cmd_appendix(run: Run) -> None:
    cfg = run.cfg
    a = cfg.float("appendix", "a")
    params = HittingDensityParams(a, cfg.int("appendix", "K"))
    run.csv("tv_bound.csv", tv_bound_table())
    run.csv("reflection.csv", reflection_table())
    run.csv("small_time.csv", small_time_table(a))
    run.csv("exit_density.csv", exit_density_table())
    quad = two_sided_cdf(params, 1.0)
    mc = mc_exit_probability(a, 1.0, cfg.int("appendix", "mc_paths"), cfg.float("appendix", "mc_dt"),
                             seed=cfg.seed + 11)
    run.csv("exit_mc.csv", Table(["a", "T", "quadrature", "mc", "mc_se", "pass"],
                                 [(a, 1.0, quad, mc.value, mc.se, bool(abs(quad - mc.value) <= 0.01))]))
    ts = np.linspace(a * a / 200, 3 * a * a, 300)
    run.svg("hitting_densities.svg", SeriesBundle("Hitting densities", "t", "density")
            .add("one-sided", ts, hitting_density_one_sided(a, ts))
            .add("two-sided", ts, hitting_density_two_sided(params, ts)))
    run.svg("first_passage_cdf.svg", SeriesBundle("First passage distribution", "t", "P(T <= t)")
            .add("one-sided", ts, first_passage_cdf(a, ts)))


COMMANDS = {
    "barrier": cmd_barrier,
    "simulate": cmd_simulate,
    "wasserstein": cmd_wasserstein,
    "opt1": cmd_opt1,
    "speed": cmd_speed,
    "opt2": cmd_opt2,
    "appendix": cmd_appendix,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvmlab", description="Measure-valued martingale experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS + ("all",), help="experiment to run")
    parser.add_argument("--config", type=Path, help="INI file overriding the defaults")
    parser.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for per-path work")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(subcommand: str, cfg: ExperimentConfig, out: Path | None = None, threads: int | None = None) -> Path:
    """Run one subcommand (or ``all``) and return the manifest path."""
    if subcommand != "all" and subcommand not in COMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out = Path(out if out is not None else cfg.get("general", "out"))
    threads = threads if threads is not None else cfg.int("general", "threads")
    r = Run(out, cfg, threads)
    names = SUBCOMMANDS if subcommand == "all" else (subcommand,)
    for name in names:
        log.info("running %s", name)
        COMMANDS[name](r)
    return r.manifest(names)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    general = {"seed": args.seed, "threads": args.threads}
    try:
        if args.threads is not None and args.threads < 1:
            raise ValueError("--threads must be at least 1")
        cfg = ExperimentConfig.load(args.config, {"general": general})
    except (ValueError, FileNotFoundError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"mvmlab: error: {exc}", file=sys.stderr)
        return 2
    manifest = run(args.subcommand, cfg, args.out, args.threads)
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
