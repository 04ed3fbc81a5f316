import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvmlab.constructions import MvmSeries, ScaleFunction, ay_barycentre, ay_mvm_series, bass_mvm_series, transport_map
from mvmlab.measure import QuantileMeasure, levels
from mvmlab.speed import (
    RhoMap,
    coinflip_mvm_series,
    coinflip_outcome,
    estimate_speed,
    mean_qv,
    objective_opt2,
    partition_indices,
    rho_speed,
    series_speed_total,
    w1_increments,
)
from mvmlab.stochastic import RngStream, TimeGrid, quadratic_variation, simulate_brownian


def bm(n=1000, seed=0, t_end=1.0):
    return simulate_brownian(TimeGrid(0.0, t_end, n), 0.0, RngStream(seed))


def shifted_series(path, M=32):
    base = 2 * levels(M) - 1
    return MvmSeries(path.times, path.values[:, None] + base[None, :])


class TestPartitionSums:
    def test_dirac_series_speed_is_path_qv(self):
        path = bm(2000)
        s = MvmSeries(path.times, np.repeat(path.values[:, None], 8, axis=1))
        est = estimate_speed(s, [path.grid.dt])
        np.testing.assert_allclose(est.finest, quadratic_variation(path), atol=1e-12)
        np.testing.assert_allclose(est.mean_qv, quadratic_variation(path), atol=1e-12)

    def test_shift_family_speed_is_qv(self):
        path = bm(4000)
        est = estimate_speed(shifted_series(path))
        assert est.total() == pytest.approx(est.mean_qv[-1], rel=1e-9)
        assert est.total() == pytest.approx(1.0, rel=0.1)

    def test_coarse_meshes(self):
        path = bm(4096)
        est = estimate_speed(shifted_series(path), [2**-12, 2**-8, 2**-4])
        assert est.cumulative.shape == (3, path.values.size)
        np.testing.assert_allclose(est.cumulative[:, -1], 1.0, atol=0.45)
        assert np.all(np.diff(est.cumulative, axis=1) >= 0)
        np.testing.assert_array_equal(est.liminf, est.cumulative.min(axis=0))

    def test_mesh_below_grid_rejected(self):
        with pytest.raises(ValueError):
            estimate_speed(shifted_series(bm(100)), [1e-4])

    def test_increments(self):
        tabs = np.array([[0.0, 1.0], [1.0, 3.0]])
        np.testing.assert_allclose(w1_increments(tabs), [1.5])

    def test_table_output(self, tmp_path):
        est = estimate_speed(shifted_series(bm(64)))
        est.to_csv(tmp_path / "s.csv")
        assert est.to_table().header == ["t", "mesh", "speed", "mean_qv"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=40), st.floats(1e-3, 2.0))
def test_partition_indices_properties(gaps, mesh):
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    idx = partition_indices(t, mesh)
    assert idx[0] == 0 and idx[-1] == t.size - 1
    assert np.all(np.diff(idx) > 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["bass", "ay", "coinflip"]))
def test_speed_dominates_mean_qv(seed, kind):
    # W1 between two laws is at least the gap between their means
    mu = QuantileMeasure.uniform(-1, 1, 256)
    if kind == "bass":
        s = bass_mvm_series(mu, bm(300, seed), 64)
    elif kind == "ay":
        s = ay_mvm_series(ay_barycentre(mu), bm(300, seed, t_end=2.0), 64)
    else:
        s = coinflip_mvm_series(0.1, bm(300, seed), 64)
    est = estimate_speed(s, [np.diff(s.times)[0]])
    assert np.all(est.finest >= est.mean_qv - 1e-12)


class TestCoinFlip:
    def test_outcomes_average_to_uniform(self):
        M = 4000
        a, b = coinflip_outcome(M, 1), coinflip_outcome(M, -1)
        assert abs(a.mean()) < 1e-3 and abs(b.mean()) < 1e-3
        mix = np.sort(np.concatenate([a, b]))
        np.testing.assert_allclose(mix, 2 * levels(2 * M) - 1, atol=2e-3)

    def test_outcome_support(self):
        a = coinflip_outcome(2000, 1)
        gap = (a > -1 / np.sqrt(2) + 1e-3) & (a < -1e-3)
        assert not gap.any()

    def test_flip_dominates_qv(self):
        s = coinflip_mvm_series(0.05, bm(2000, 3), 512)
        k = s.extras["flip_index"]
        assert k > 0
        assert s.is_terminated() is False
        est = estimate_speed(s)
        assert est.total() >= 10 * max(est.mean_qv[-1], 1e-12)

    def test_eps_range(self):
        with pytest.raises(ValueError):
            coinflip_mvm_series(1.5, bm(10), 8)


class TestRho:
    def test_linear_rho_scales_speed(self):
        s = shifted_series(bm(500))
        base = estimate_speed(s).total()
        doubled = rho_speed(s, ScaleFunction.linear(2.0)).total()
        assert doubled == pytest.approx(4 * base, rel=1e-9)
        assert series_speed_total(s, ScaleFunction.linear(2.0)) == pytest.approx(4 * base, rel=1e-9)

    def test_from_kappa_inverts(self):
        kappa = transport_map(QuantileMeasure.uniform(-1, 1, 256), QuantileMeasure.uniform(-2, 2, 256))
        rho = RhoMap.from_kappa(kappa)
        np.testing.assert_allclose(rho(kappa(np.array([-0.5, 0.2]))), [-0.5, 0.2], atol=1e-12)

    def test_rho_type_checked(self):
        with pytest.raises(TypeError):
            rho_speed(shifted_series(bm(10)), np.square)


class TestObjective:
    def test_open_series_rejected(self):
        def factory(i):
            return shifted_series(bm(10, seed=i))

        with pytest.raises(RuntimeError):
            objective_opt2(factory, None, np.square, 5)

    def test_terminated_dirac_paths(self):
        def factory(i):
            path = bm(400, seed=i)
            v = np.repeat(path.values[:, None], 4, axis=1)
            return MvmSeries(path.times, v)

        est = objective_opt2(factory, None, lambda x: x, 400)
        assert est.value == pytest.approx(1.0, abs=4 * est.se)

    def test_mean_qv_helper(self):
        s = MvmSeries([0.0, 1.0, 2.0], np.array([[0.0, 0.0], [1.0, 1.0], [3.0, 3.0]]))
        np.testing.assert_allclose(mean_qv(s), [0.0, 1.0, 5.0])
