import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvmlab.appendix import (
    HittingDensityParams,
    exit_density_table,
    exit_time_moments,
    first_passage_cdf,
    gaussian_tv,
    gaussian_tv_bound,
    gaussian_tv_exact,
    hitting_density_one_sided,
    hitting_density_two_sided,
    mc_exit_probability,
    one_sided_cdf_quad,
    reflection_table,
    small_time_table,
    tv_bound_table,
    two_sided_cdf,
    two_sided_normalisation,
    two_sided_truncation_bound,
    verify_reflection,
)


def exit_survival_eigen(a, t, n_terms=200):
    """Eigenfunction expansion of P(exit of (-a, a) after t) from the origin."""
    n = np.arange(n_terms)
    k = 2 * n + 1
    return float(4 / np.pi * np.sum((-1.0) ** n / k * np.exp(-(k**2) * np.pi**2 * t / (8 * a * a))))


class TestTotalVariation:
    def test_grid_matches_closed_form(self):
        for u, v in [(0.5, 0.55), (1.0, 2.0), (2.0, 2.001)]:
            assert gaussian_tv(u, v) == pytest.approx(gaussian_tv_exact(u, v), abs=1e-7)

    def test_bound_table_all_pass(self):
        t = tv_bound_table()
        assert all(t.column("pass"))
        assert len(t.rows) == 16

    def test_bound_argument_checked(self):
        with pytest.raises(ValueError):
            gaussian_tv_bound(1.0, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 5.0), st.floats(1e-4, 3.0))
    def test_bound_holds(self, u, gap):
        v = u + gap
        assert gaussian_tv_exact(u, v) <= gaussian_tv_bound(u, v) + 1e-12


class TestOneSided:
    @pytest.mark.parametrize("a", [1.0, 2.0])
    @pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
    def test_reflection(self, a, T):
        assert verify_reflection(a, T).gap <= 1e-4

    def test_reflection_table(self):
        assert all(reflection_table().column("pass"))

    def test_density_positive_and_peak(self):
        t = np.linspace(0.01, 3, 3000)
        f = hitting_density_one_sided(1.0, t)
        assert np.all(f > 0)
        assert t[np.argmax(f)] == pytest.approx(1 / 3, abs=2e-3)

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            hitting_density_one_sided(-1.0, 1.0)
        with pytest.raises(ValueError):
            hitting_density_one_sided(1.0, 0.0)

    def test_cdf_monotone(self):
        T = np.linspace(0.1, 5, 20)
        assert np.all(np.diff(first_passage_cdf(1.0, T)) > 0)
        assert one_sided_cdf_quad(1.0, 0.0) == 0.0


class TestTwoSided:
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    def test_normalisation(self, a):
        p = HittingDensityParams(a)
        assert two_sided_normalisation(p) == pytest.approx(1.0, abs=1e-4)
        assert two_sided_normalisation(p, "fourfold") == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("a,T", [(1.0, 0.3), (1.0, 1.0), (2.0, 3.0), (0.5, 0.2)])
    def test_cdf_matches_eigen_expansion(self, a, T):
        p = HittingDensityParams(a)
        assert two_sided_cdf(p, T) == pytest.approx(1 - exit_survival_eigen(a, T), abs=1e-8)

    def test_forms_agree(self):
        p = HittingDensityParams(1.0)
        t = np.linspace(0.05, 5, 50)
        diff = np.abs(hitting_density_two_sided(p, t) - hitting_density_two_sided(p, t, "fourfold"))
        assert np.all(diff <= two_sided_truncation_bound(p, t) + 1e-12)

    def test_abs_reading_is_not_a_density(self):
        p = HittingDensityParams(1.0)
        assert abs(two_sided_normalisation(p, convention="abs") - 1.0) > 0.5
        assert abs(two_sided_normalisation(p, "fourfold", "abs") - 1.0) > 0.5

    def test_density_table(self):
        t = exit_density_table()
        for conv, ok in zip(t.column("convention"), t.column("pass")):
            assert ok == (conv == "signed")

    def test_below_one_sided(self):
        # leaving (-a, a) happens no later than reaching a
        p = HittingDensityParams(1.0)
        for T in (0.2, 1.0, 3.0):
            assert two_sided_cdf(p, T) >= first_passage_cdf(1.0, T)

    def test_bad_options(self):
        p = HittingDensityParams(1.0)
        with pytest.raises(ValueError):
            hitting_density_two_sided(p, 1.0, form="triple")
        with pytest.raises(ValueError):
            hitting_density_two_sided(p, 1.0, convention="mirror")
        with pytest.raises(ValueError):
            HittingDensityParams(1.0, 0)

    def test_monte_carlo_exit(self):
        p = HittingDensityParams(1.0)
        mc = mc_exit_probability(1.0, 1.0, 4000, dt=1e-3, seed=2)
        # discrete monitoring misses some exits, so allow a small downward bias
        assert 0 <= two_sided_cdf(p, 1.0) - mc.value <= 4 * mc.se + 0.03


class TestSmallTime:
    def test_all_rows_pass(self):
        t = small_time_table(1.0)
        assert all(t.column("pass"))
        assert set(t.column("check")) == {"first_passage_cdf", "first_passage_shift", "exit_shift"}

    def test_constants_positive(self):
        t = small_time_table(2.0, betas=(0.5,), n_eps=4)
        assert all(d > 0 for d in t.column("delta"))
        assert all(e < D for e, D in zip(t.column("eps"), t.column("Delta")))


@pytest.mark.parametrize("a,x0", [(1.0, 0.0), (1.0, 0.5), (2.0, -0.3)])
def test_exit_time_moments_polynomials(a, x0):
    m1, m2 = exit_time_moments(a, 2, x0=x0)
    assert m1 == pytest.approx(a * a - x0 * x0, rel=1e-6)
    assert m2 == pytest.approx((5 * a**4 - 6 * a * a * x0 * x0 + x0**4) / 3, rel=1e-6)


def test_exit_time_moments_against_two_sided_cdf():
    # E[tau] = int_0^inf P(tau > t) dt from the series distribution
    p = HittingDensityParams(1.0, 20)
    ts = np.linspace(0.0, 30.0, 30001)
    surv = 1.0 - np.array([two_sided_cdf(p, t) if t > 0 else 0.0 for t in ts[::100]])
    mean = np.trapezoid(surv, ts[::100])
    assert exit_time_moments(1.0, 1)[0] == pytest.approx(mean, rel=1e-3)
