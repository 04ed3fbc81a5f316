"""Backend selection and agreement of the compiled and numpy kernels."""

import importlib.util
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mvmlab import _accel, _kernels
from mvmlab.constructions import ay_barycentre, bass_scale
from mvmlab.measure import QuantileMeasure, standard_normal_nodes
from mvmlab.root import RootLattice, solve_root_barrier

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def both(kernel, *args, out_index=None):
    """Run a dispatched kernel under both backends on copies of ``args``."""
    results = []
    for fn in (kernel.compiled, kernel.fallback):
        a = [x.copy() if isinstance(x, np.ndarray) else x for x in args]
        r = fn(*a)
        results.append(a[out_index] if out_index is not None else r)
    return results


def test_use_backend_restores():
    before = _accel.backend()
    with _accel.use_backend("numpy"):
        assert _accel.backend() == "numpy"
    assert _accel.backend() == before


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")


def test_env_flag_selects_numpy():
    env = dict(os.environ, **{_accel.ENV_FLAG: "1"})
    code = "from mvmlab import _accel; print(_accel.backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_default_backend_is_numba_without_flag():
    env = {k: v for k, v in os.environ.items() if k != _accel.ENV_FLAG}
    code = "from mvmlab import _accel; print(_accel.backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


def test_dispatch_follows_backend():
    calls = []
    k = _accel.accelerated(lambda: calls.append("c"), lambda: calls.append("f"))
    with _accel.use_backend("numpy"):
        k()
    if _accel.HAVE_NUMBA:
        with _accel.use_backend("numba"):
            k()
        assert calls == ["f", "c"]
    else:
        assert calls == ["f"]


@needs_numba
class TestKernelAgreement:
    def test_psor(self):
        mu = QuantileMeasure.uniform(-1, 1, 256)
        bar_nb = solve_root_barrier(mu, dt=0.01)
        with _accel.use_backend("numpy"):
            bar_np = solve_root_barrier(mu, dt=0.01)
        np.testing.assert_array_equal(bar_nb.r, bar_np.r)

    def test_lattice_backward_and_tables(self):
        bar = solve_root_barrier(QuantileMeasure.uniform(-1, 1, 256), dt=0.005)
        lat_nb = RootLattice(bar, 4)
        with _accel.use_backend("numpy"):
            lat_np = RootLattice(bar, 4)
        np.testing.assert_allclose(lat_nb.layers, lat_np.layers, atol=1e-13)
        steps = np.array([0, 4, 8, 40])
        xs = np.array([0.0, 0.1, -0.3, 0.5])
        t_nb = lat_nb.tables(steps, xs, 64)
        with _accel.use_backend("numpy"):
            t_np = lat_np.tables(steps, xs, 64)
        np.testing.assert_allclose(t_nb, t_np, atol=1e-12)

    def test_push_kernels(self, rng):
        h = bass_scale(QuantileMeasure.uniform(-1, 1, 512))
        b = rng.normal(size=20) * 0.5
        s = rng.uniform(0.01, 1.0, 20)
        z = standard_normal_nodes(64)
        out = np.empty((20, 64))
        r = both(_kernels.push_tables, b, s, z, h.nodes, h.values, out, out_index=5)
        np.testing.assert_allclose(r[0], r[1], atol=1e-12)
        w = np.empty(20)
        r = both(_kernels.push_wpp, b, s, z, h.nodes, h.values, 1.5, w, out_index=6)
        np.testing.assert_allclose(r[0], r[1], atol=1e-12)

    def test_scans(self, rng):
        v = np.concatenate([[0.0], np.cumsum(rng.normal(size=5000) * 0.01)])
        t = np.arange(v.size) * 1e-4
        bar = solve_root_barrier(QuantileMeasure.uniform(-1, 1, 256), dt=0.003)
        r = both(_kernels.barrier_hit, v, t * 100, float(bar.xs[0]), bar.dx, bar.r, 0)
        assert r[0] == r[1]
        r = both(_kernels.exit_scan, v, -0.2, 0.2)
        assert r[0] == r[1]
        bary = ay_barycentre(QuantileMeasure.uniform(-1, 1, 256))
        r = both(_kernels.ay_scan, v, bary.x_nodes, bary.psi, bary.right_end)
        assert r[0] == r[1]

    def test_ay_tables(self, rng):
        bary = ay_barycentre(QuantileMeasure.uniform(-1, 1, 256))
        s = rng.uniform(0.0, 0.9, 15)
        b = s - rng.uniform(0, 0.3, 15)
        psi, pi = bary.psi_at(s), bary.pi_at(s)
        b = np.maximum(b, psi)
        out = np.empty((15, 64))
        r = both(_kernels.ay_tables, b, s, psi, pi, bary.mu.values, 64, out, out_index=6)
        np.testing.assert_allclose(r[0], r[1], atol=1e-12)


@needs_numba
def test_benchmark_script_runs(capsys):
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--quick", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "psor barrier solve" in out and "speedup" in out
