"""Time the numba kernels against the numpy fallback on representative workloads.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each workload runs once per backend to warm up (numba compiles on first call),
then ``--repeat`` times; the best wall time is reported together with the
largest absolute difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from mvmlab import _accel
from mvmlab import experiments as ex
from mvmlab.constructions import ay_barycentre, ay_tables, bass_eta_wpp, bass_scale
from mvmlab.measure import QuantileMeasure
from mvmlab.root import RootLattice, solve_root_barrier
from mvmlab.stochastic import RngStream, brownian_values


def workloads(quick: bool):
    scale = 0.2 if quick else 1.0
    lam = QuantileMeasure.uniform(-1, 1, 4096)
    gauss = QuantileMeasure.gaussian(0, 2, 4096)
    h = bass_scale(gauss)
    bary = ay_barycentre(lam)
    n_b = int(20_000 * scale)
    b = RngStream(1).normals(n_b)
    s = np.full(n_b, 0.5)
    path = brownian_values(int(20_000 * scale), 1e-4, 0.0, RngStream(2))
    lat = RootLattice(solve_root_barrier(lam, dt=1e-3), stride=1)
    steps = np.arange(0, 300)
    xs = brownian_values(steps.size - 1, 1e-3, 0.0, RngStream(3))

    return {
        "psor barrier solve": lambda: solve_root_barrier(lam, dt=2e-3).r,
        "bass W1 to gaussian": lambda: bass_eta_wpp(h, b, s, 1.0, 512),
        "azema-yor tables": lambda: ay_tables(bary, path[::10], 256),
        "root lattice tables": lambda: lat.tables(steps, xs, 256),
        "embedded law stopping": lambda: np.sort(ex.embedded_law_ks(lam, int(2000 * scale), 1e-3, seed=4)["samples"]),
    }


def best_time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'workload':<24} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'max diff':>10}")
    for name, fn in workloads(args.quick).items():
        times, outputs = {}, {}
        for backend in ("numba", "numpy"):
            with _accel.use_backend(backend):
                outputs[backend] = np.asarray(fn(), float)
                times[backend] = best_time(fn, args.repeat)
        a, c = outputs["numba"], outputs["numpy"]
        finite = np.isfinite(a) & np.isfinite(c)
        diff = float(np.max(np.abs(a[finite] - c[finite]))) if finite.any() else 0.0
        print(f"{name:<24} {times['numba']:>10.4f} {times['numpy']:>10.4f} "
              f"{times['numpy'] / times['numba']:>7.1f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
