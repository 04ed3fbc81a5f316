"""Acceptance criteria at their stated sizes and tolerances.

Each test records a PASS/FAIL line, printed in the terminal summary.
"""

import filecmp
import time
from pathlib import Path

import numpy as np
import pytest

from mvmlab import cli
from mvmlab import experiments as ex
from mvmlab.appendix import (
    HittingDensityParams,
    exit_density_table,
    exit_time_moments,
    mc_exit_probability,
    reflection_table,
    two_sided_cdf,
    tv_bound_table,
)
from mvmlab.config import ExperimentConfig
from mvmlab.measure import QuantileMeasure

pytestmark = pytest.mark.slow

TINY = Path(__file__).with_name("tiny.ini")


def test_bass_constancy(acceptance):
    t0 = time.perf_counter()
    tab = ex.bass_constancy(QuantileMeasure.gaussian(0, 2, 4096), n_paths=100_000, M=2048,
                            target=np.sqrt(2 / np.pi), rel_tol=0.02)
    elapsed = time.perf_counter() - t0
    rel = np.asarray(tab.column("rel_err"))
    ok = bool(all(tab.column("pass"))) and elapsed < 120
    assert acceptance("C1 Bass W1 constancy", ok, f"max rel err {rel.max():.4f} (tol 0.02), {elapsed:.1f}s")


def test_root_submartingale(acceptance):
    reps = ex.root_submartingale(QuantileMeasure.uniform(-1, 1, 4096), n_paths=10_000, M=512)
    ok = reps["constant"].verdict and reps["eta"].verdict
    detail = (f"vs target {np.round(reps['constant'].estimates, 4).tolist()}, "
              f"vs eta {np.round(reps['eta'].estimates, 4).tolist()}, reversed control "
              f"{'rejected' if not reps['reversed'].verdict else 'accepted'}")
    assert acceptance("C2 Root W1 submartingale", ok and not reps["reversed"].verdict, detail)


def test_first_optimality(acceptance):
    res = ex.opt1_comparison(QuantileMeasure.uniform(-2, 2, 4096), n_paths=4000, seed=3, M=512)
    tab = res["table"]
    rows = [r for r in tab.rows if r[1] != "terminal"]
    z = min(r[8] for r in rows)
    ok = all(r[9] for r in rows)
    assert acceptance("C3 Bass minimises weighted objective", ok,
                      f"{len(rows)} comparisons, min z {z:.1f} (need 3)")


def test_root_barrier(acceptance):
    flat = ex.barrier_flatness(dt=0.005)
    ks = ex.embedded_law_ks(QuantileMeasure.uniform(-1, 1, 4096), n_paths=100_000, dt=1e-4)
    ok = flat["max_cells"] <= 2 and ks["ks"] <= 0.01 and ks["unstopped"] == 0
    assert acceptance("C4 Root barrier", ok,
                      f"max |r-1| {flat['max_cells']:.0f} cells (tol 2), KS {ks['ks']:.4f} (tol 0.01)")


def test_speed_matches_qv(acceptance):
    bass = ex.bass_speed(QuantileMeasure.gaussian(0, 2, 4096), n_paths=200, n_steps=1000, M=512)
    tp = ex.two_point_speed(n_paths=500, M=256)
    cf = ex.coinflip_speed(0.05, n_paths=50)
    rb = abs(bass["speed"].value - bass["mean_qv"].value) / bass["mean_qv"].value
    rt = abs(tp["speed"].value - tp["mean_qv"].value) / tp["mean_qv"].value
    ratio = np.mean(cf["speed"]) / np.mean(cf["mean_qv"])
    ok = rb <= 0.05 and rt <= 0.05 and ratio >= 10 and cf["flipped"] > 0
    assert acceptance("C5 speed equals mean QV", ok,
                      f"Bass rel {rb:.4f}, two-point rel {rt:.4f}, coin-flip ratio {ratio:.3g}")


def test_speed_time_change(acceptance):
    res = ex.bass_speed(QuantileMeasure.gaussian(0, 2, 4096), n_paths=200, n_steps=1000, seed=15, M=512)
    rel = np.abs(res["canonical_finest"] - res["natural_finest"]) / res["canonical_finest"]
    assert acceptance("C6 speed time-change invariance", bool(rel.max() <= 0.05),
                      f"max rel diff {rel.max():.4f} at t={res['checkpoints'].tolist()}")


def test_second_optimality(acceptance):
    lam = QuantileMeasure.uniform(-1, 1, 4096)
    res = ex.opt2_comparison(lam, n_paths=20_000, threads=4)
    gap = res["ay_sq"].value - res["root_sq"].value
    se = ex.combined_se(res["root_sq"], res["ay_sq"])
    var = res["var"]
    id_ok = all(abs(res[k].value - var) / var <= 0.05 for k in ("root_id", "ay_id"))
    tau_sq = exit_time_moments(1.0, 2)[1]
    tp_ok = abs(res["two_point_sq"].value - tau_sq) / tau_sq <= 0.05
    ok = gap >= 3 * se and id_ok and tp_ok and not any(res["open"].values())
    detail = (f"Root {res['root_sq'].value:.4f} vs AY {res['ay_sq'].value:.4f} (z {gap / se:.1f}); "
              f"F=id {res['root_id'].value:.4f}/{res['ay_id'].value:.4f} vs 1/3; "
              f"two-point E[tau^2] {res['two_point_sq'].value:.4f} vs ODE {tau_sq:.4f}")
    assert acceptance("C7 Root minimises convex speed functional", ok, detail)


def test_lipschitz_markov(acceptance):
    lm = ex.lipschitz_markov(n_pairs=1000, M=512)
    b, r = lm["bass"].max_defect, lm["root"].max_defect
    ok = b <= 3 * lm["bass_tol"] and r <= 3 * lm["root_tol"]
    assert acceptance("C8 Lipschitz-Markov equality", ok,
                      f"Bass {b:.2e} (tol {3 * lm['bass_tol']:.2e}), Root {r:.2e} (tol {3 * lm['root_tol']:.2e})")


def test_hitting_lemmas(acceptance):
    tv = tv_bound_table()
    refl = reflection_table()
    dens = exit_density_table()
    signed = [r for r in dens.rows if r[2] == "signed"]
    quad = two_sided_cdf(HittingDensityParams(1.0, 20), 1.0)
    mc = mc_exit_probability(1.0, 1.0, 100_000, 1e-4, seed=11)
    ok = (all(tv.column("pass")) and all(refl.column("pass")) and all(r[6] for r in signed)
          and abs(quad - mc.value) <= 0.01)
    detail = (f"TV {sum(tv.column('pass'))}/{len(tv.rows)}, reflection {sum(refl.column('pass'))}/{len(refl.rows)}, "
              f"normalisation {sum(r[6] for r in signed)}/{len(signed)}, MC {mc.value:.4f} vs {quad:.4f}")
    assert acceptance("C9 hitting-time lemmas", ok, detail)


def test_reproducibility(acceptance, tmp_path):
    cfg = ExperimentConfig.load(TINY)
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run("all", cfg, a)
    cli.run("all", cfg, b)
    files = sorted(p.name for p in a.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    csvs = [f for f in files if f.endswith(".csv")]
    ok = not mismatch and not errors and len(csvs) > 20
    assert acceptance("C10 byte-identical reruns", ok, f"{len(files)} files, {len(mismatch)} differ")
