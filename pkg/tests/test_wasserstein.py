import numpy as np
import pytest

from mvmlab.constructions import MvmSeries, bass_eta_wpp, bass_mvm_series, bass_scale, eta_series
from mvmlab.measure import QuantileMeasure, wasserstein_p
from mvmlab.stochastic import RngStream, SamplePath, TimeGrid, simulate_brownian
from mvmlab.wasserstein import (
    TestReport,
    TransportKernel,
    branching_martingale_test,
    combined_se,
    constancy_test,
    constant_series,
    coupled_mvm_from_plan,
    distance_process,
    estimate_from,
    eta_distance,
    lipschitz_markov_check,
    monotonicity_report,
    objective_opt1,
    path_objective,
    submartingale_test,
    terminal_cross_check,
    weight_function,
)

TIMES = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
SQRT_2_PI = np.sqrt(2 / np.pi)


def abs_bm(i):
    inc = RngStream(21, i).normals(TIMES.size - 1) * np.sqrt(np.diff(TIMES))
    return np.abs(np.concatenate([[0.0], np.cumsum(inc)]))


class TestDistanceProcess:
    def test_gaussian_to_constant(self):
        # at t = 0 the Gaussian martingale is N(0, 1)
        path = simulate_brownian(TimeGrid(0.0, 1.0, 10), 0.0, RngStream(0))
        eta = eta_series(path, 1024)
        const = constant_series(QuantileMeasure.gaussian(0, 1, 1024), path.times)
        d = distance_process(eta, const)
        assert d[0] == pytest.approx(0.0, abs=1e-12)
        assert d[-1] == pytest.approx(wasserstein_p(eta.terminal, const.terminal))

    def test_grid_mismatch(self):
        a = MvmSeries([0.0, 1.0], np.zeros((2, 4)))
        b = MvmSeries([0.0, 0.5], np.zeros((2, 4)))
        with pytest.raises(ValueError):
            distance_process(a, b)

    def test_rejects_small_p(self):
        a = MvmSeries([0.0], np.zeros((1, 4)))
        with pytest.raises(ValueError):
            distance_process(a, a, 0.5)


class TestMonotonicity:
    def test_abs_brownian_is_submartingale(self):
        rep = submartingale_test(abs_bm, TIMES, n_paths=2000)
        assert rep.verdict
        assert rep.estimates[-1] == pytest.approx(SQRT_2_PI, abs=4 * rep.se[-1])

    def test_reversed_fails(self):
        X = np.array([abs_bm(i) for i in range(2000)])
        assert not monotonicity_report(X[:, ::-1], TIMES).verdict

    def test_needs_paths(self):
        with pytest.raises(ValueError):
            submartingale_test(abs_bm, TIMES, n_paths=50)

    def test_bad_sampler_shape(self):
        with pytest.raises(ValueError):
            submartingale_test(lambda i: np.zeros(2), TIMES, n_paths=100)

    def test_report_outputs(self, tmp_path):
        rep = submartingale_test(abs_bm, TIMES, n_paths=200)
        rep.to_csv(tmp_path / "r.csv")
        rep.write_summary(tmp_path / "r.txt")
        assert "verdict=" in (tmp_path / "r.txt").read_text()
        assert isinstance(rep, TestReport)


class TestConstancy:
    def test_gaussian_bass_distance_is_constant(self):
        h = bass_scale(QuantileMeasure.gaussian(0, 2, 1024))

        def sampler(i):
            inc = RngStream(22, i).normals(TIMES.size - 1) * np.sqrt(np.diff(TIMES))
            b = np.concatenate([[0.0], np.cumsum(inc)])
            return bass_eta_wpp(h, b, 1.0 - TIMES, 1.0, 1024)

        rep = constancy_test(sampler, TIMES, n_paths=3000)
        assert rep.verdict
        np.testing.assert_allclose(rep.estimates, SQRT_2_PI, atol=0.03)

    def test_submartingale_not_constant(self):
        assert not constancy_test(abs_bm, TIMES, n_paths=2000).verdict


class TestBranching:
    def test_bass_is_martingale(self):
        h = bass_scale(QuantileMeasure.uniform(-1, 1, 512))
        grid = TimeGrid(0.0, 1.0, 50)

        def pair(path):
            return eta_distance(bass_mvm_series(h, path, 128), path.values)

        rep = branching_martingale_test(pair, 0.2, 0.8, 60, 30, grid, seed=3)
        assert rep.verdict

    def test_abs_brownian_detected(self):
        grid = TimeGrid(0.0, 1.0, 50)
        rep = branching_martingale_test(lambda p: np.abs(p.values), 0.2, 0.8, 200, 30, grid, seed=4)
        assert not rep.verdict
        assert rep.details["submartingale"]
        assert rep.details["defect"] > 0

    def test_order_checked(self):
        with pytest.raises(ValueError):
            branching_martingale_test(lambda p: p.values, 0.8, 0.2, 2, 2, TimeGrid(0.0, 1.0, 10))


class TestTransport:
    def test_uniform_scaling(self):
        k = TransportKernel.between(QuantileMeasure.uniform(-1, 1, 256), QuantileMeasure.uniform(-3, 3, 256))
        np.testing.assert_allclose(k(np.array([-0.5, 0.5])), [-1.5, 1.5], atol=1e-12)
        out = k.apply(QuantileMeasure.uniform(-0.5, 0.5, 256))
        assert wasserstein_p(out, QuantileMeasure.uniform(-1.5, 1.5, 256)) < 1e-9

    def test_coupled_series_starts_at_target(self):
        path = simulate_brownian(TimeGrid(0.0, 1.0, 20), 0.0, RngStream(0))
        s = bass_mvm_series(QuantileMeasure.uniform(-1, 1, 256), path, 256)
        mu = QuantileMeasure.uniform(-2, 2, 256)
        c = coupled_mvm_from_plan(s, mu)
        assert wasserstein_p(c.at(0), mu) < 1e-9
        assert np.all(np.diff(c.tables, axis=1) >= 0)


class TestLipschitz:
    def test_dirac_series_have_zero_defect(self):
        def factory(i):
            x = float(RngStream(1, i).normals(1)[0])
            return MvmSeries([0.5], np.full((1, 16), x))

        rep = lipschitz_markov_check(factory, 0.5, 50)
        assert rep.max_defect < 1e-12

    def test_shifted_laws_have_zero_defect(self):
        base = QuantileMeasure.uniform(-1, 1, 64).values

        def factory(i):
            return MvmSeries([0.0], (base + float(RngStream(2, i).normals(1)[0]))[None, :])

        assert lipschitz_markov_check(factory, 0.0, 50).max_defect < 1e-12

    def test_scaled_laws_have_defect(self):
        base = QuantileMeasure.uniform(-1, 1, 64).values

        def factory(i):
            return MvmSeries([0.0], (base * (1 + i % 2))[None, :])

        assert lipschitz_markov_check(factory, 0.0, 5).max_defect > 0.4


class TestObjective:
    def test_weight_masses(self):
        t = np.linspace(0, 1, 200001)
        assert np.trapezoid(weight_function("one")(t), t) == pytest.approx(1.0)
        assert np.trapezoid(weight_function("linear")(t), t) == pytest.approx(0.5)
        assert np.trapezoid(weight_function("bump")(t), t) == pytest.approx(1.0, rel=1e-6)
        assert weight_function("bump")(np.array([0.5]))[0] == 0.0

    def test_unknown_weight(self):
        with pytest.raises(ValueError):
            weight_function("spike")

    def test_span_checked(self):
        s = MvmSeries([0.0, 0.5], np.zeros((2, 4)))
        with pytest.raises(ValueError):
            path_objective(s, np.zeros(2), weight_function("one"))

    def test_negative_weight_rejected(self):
        s = MvmSeries([0.0, 1.0], np.zeros((2, 4)))
        with pytest.raises(ValueError):
            path_objective(s, np.zeros(2), lambda t: -np.ones_like(t))

    def test_gaussian_bass_closed_form(self):
        mu = QuantileMeasure.gaussian(0, 2, 1024)
        grid = TimeGrid(0.0, 1.0, 100)

        def factory(i):
            path = simulate_brownian(grid, 0.0, RngStream(8, i))
            return bass_mvm_series(mu, path, 512), path.values

        est = objective_opt1(factory, weight_function("one"), 1.0, 1500, mu)
        assert est.value == pytest.approx(SQRT_2_PI, abs=4 * est.se + 2e-3)

    def test_start_checked(self):
        mu = QuantileMeasure.uniform(-1, 1, 256)

        def factory(i):
            return MvmSeries([0.0, 1.0], np.full((2, 256), 0.9)), np.zeros(2)

        with pytest.raises(ValueError):
            objective_opt1(factory, weight_function("one"), 1.0, 2, mu)


class TestEstimates:
    def test_deterministic_samples_have_zero_se(self):
        e = estimate_from(np.full(10, 2.0))
        assert e.value == 2.0 and e.se == 0.0

    def test_single_sample(self):
        assert estimate_from([3.0]).se == 0.0

    def test_combined(self):
        assert combined_se(estimate_from([0.0, 2.0]), estimate_from([0.0, 2.0])) == pytest.approx(np.sqrt(2.0))

    def test_terminal_forms_agree(self):
        b = RngStream(31).normals(50000)
        m = np.tanh(b)
        var = float(np.mean(np.tanh(RngStream(32).normals(400000)) ** 2))
        res = terminal_cross_check(b, m, var)
        d = res["difference"]
        assert abs(d.value) <= 4 * d.se
