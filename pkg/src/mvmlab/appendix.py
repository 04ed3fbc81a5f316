"""Brownian hitting-time densities and Gaussian total-variation bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, special

from . import _kernels
from .io import Table
from .measure import DensityGrid, tv_distance
from .stochastic import RngStream, brownian_values
from .wasserstein import Estimate, estimate_from

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def gaussian_tv_bound(u: float, v: float) -> float:
    """Upper bound ``sqrt(2/pi) (v - u) / u`` on the TV distance of ``N(0,u)`` and ``N(0,v)``."""
    if not 0 < u < v:
        raise ValueError("need 0 < u < v")
    return float(SQRT_2_OVER_PI * (v - u) / u)


def gaussian_tv(u: float, v: float, n: int = 40001, width: float = 12.0) -> float:
    """TV distance of two centred normals (variances ``u``, ``v``) on a density grid."""
    xs = np.linspace(-width * np.sqrt(v), width * np.sqrt(v), n)
    return tv_distance(DensityGrid.gaussian(u, xs), DensityGrid.gaussian(v, xs))


def gaussian_tv_exact(u: float, v: float) -> float:
    """Closed form via the crossing point of the two densities."""
    d = np.sqrt(np.log(v / u) / (1.0 / u - 1.0 / v))
    return float(special.erf(d / np.sqrt(2 * u)) - special.erf(d / np.sqrt(2 * v)))


def _signed_density(c, t):
    t = np.asarray(t, float)
    c = np.asarray(c, float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = c / np.sqrt(2.0 * np.pi * t**3) * np.exp(-(c**2) / (2.0 * t))
    return np.where(t > 0, out, 0.0)


def hitting_density_one_sided(a: float, t):
    """Density ``a / sqrt(2 pi t^3) exp(-a^2 / 2t)`` of the first passage to ``a > 0``."""
    if a <= 0:
        raise ValueError("level must be positive")
    ta = np.asarray(t, float)
    if np.any(ta <= 0):
        raise ValueError("t must be positive")
    out = _signed_density(a, ta)
    return float(out) if np.ndim(t) == 0 else out


def first_passage_cdf(a: float, T) -> np.ndarray | float:
    """Reflection-principle CDF ``2 Phi(-a / sqrt(T))``."""
    T = np.asarray(T, float)
    out = 2.0 * special.ndtr(-a / np.sqrt(T))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HittingDensityParams:
    a: float
    K: int = 20

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("level must be positive")
        if self.K < 1:
            raise ValueError("need K >= 1")


def _levels(params: HittingDensityParams, form: str):
    k = np.arange(-params.K, params.K + 1)
    if form == "alternating":
        return params.a * (1 + 2 * k), np.where(k % 2 == 0, 1.0, -1.0)
    if form == "fourfold":
        return params.a * (1 + 4 * k), np.full(k.size, 2.0)
    raise ValueError(f"unknown series form {form!r}")


def hitting_density_two_sided(params: HittingDensityParams, t, form: str = "alternating",
                              convention: str = "signed"):
    """Exit-time density of ``(-a, a)`` from an image series truncated at ``|k| <= K``.

    Parameters
    ----------
    form : {"alternating", "fourfold"}
        ``sum (-1)^k p^{a(1+2k)}`` or ``2 sum p^{a(1+4k)}``.
    convention : {"signed", "abs"}
        How ``p^c`` is read for a negative level ``c``: ``signed`` keeps the
        factor ``c`` of the closed form, so ``p^{-c} = -p^c``; ``abs`` uses
        ``p^{|c|}``.  Only the signed reading gives a probability density.
    """
    ta = np.asarray(t, float)
    if np.any(ta <= 0):
        raise ValueError("t must be positive")
    c, coef = _levels(params, form)
    if convention == "abs":
        c = np.abs(c)
    elif convention != "signed":
        raise ValueError(f"unknown convention {convention!r}")
    terms = coef[:, None] * _signed_density(c[:, None], ta.ravel()[None, :])
    out = terms.sum(axis=0).reshape(ta.shape)
    return float(out) if np.ndim(t) == 0 else out


def two_sided_truncation_bound(params: HittingDensityParams, t) -> np.ndarray | float:
    """Bound on the terms dropped beyond ``|k| = K``.

    Dropped levels have modulus at least ``a (2K + 1)``; on ``t`` with
    ``3t <= (a (2K + 1))^2`` the one-sided density decreases in the level, so
    four times the next fifty odd-level terms dominate the tail.
    """
    ta = np.asarray(t, float)
    k = np.arange(params.K + 1, params.K + 51)
    c = params.a * (2 * k + 1)
    out = 4.0 * _signed_density(c[:, None], ta.ravel()[None, :]).sum(axis=0).reshape(ta.shape)
    return float(out) if np.ndim(t) == 0 else out


def _quad(f, lo: float, hi: float) -> float:
    val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=500)
    return float(val)


def two_sided_cdf(params: HittingDensityParams, T: float, form: str = "alternating", convention: str = "signed") -> float:
    """``P(exit <= T)`` by adaptive quadrature of the image series."""
    f = lambda s: hitting_density_two_sided(params, s, form, convention) if s > 0 else 0.0  # noqa: E731
    # the density is negligible near zero; splitting helps quad find the bulk
    knots = [0.0] + [x for x in (params.a**2 / 20, params.a**2 / 3, params.a**2) if x < T] + [T]
    return float(sum(_quad(f, lo, hi) for lo, hi in zip(knots[:-1], knots[1:])))


def two_sided_normalisation(params: HittingDensityParams, form: str = "alternating", convention: str = "signed") -> float:
    """Total mass of the truncated density, integrated up to ``60 a^2``."""
    return two_sided_cdf(params, 60.0 * params.a**2, form, convention)


@dataclass(frozen=True)
class ReflectionReport:
    a: float
    T: float
    quadrature: float
    reference: float

    @property
    def gap(self) -> float:
        return abs(self.quadrature - self.reference)


def one_sided_cdf_quad(a: float, T: float) -> float:
    if T <= 0:
        return 0.0
    knots = [0.0] + [x for x in (a * a / 20, a * a / 3) if x < T] + [T]
    f = lambda s: float(_signed_density(a, s)) if s > 0 else 0.0  # noqa: E731
    return float(sum(_quad(f, lo, hi) for lo, hi in zip(knots[:-1], knots[1:])))


def verify_reflection(a: float, T: float) -> ReflectionReport:
    """Quadrature of the first-passage density against ``2 Phi(-a / sqrt T)``."""
    return ReflectionReport(a, T, one_sided_cdf_quad(a, T), first_passage_cdf(a, T))


def mc_exit_probability(a: float, T: float, n_paths: int, dt: float = 1e-4, seed: int = 0) -> Estimate:
    """Frequency of leaving ``(-a, a)`` by time ``T`` on discretely monitored paths."""
    n = int(round(T / dt))
    hits = np.empty(n_paths)
    for i in range(n_paths):
        v = brownian_values(n, dt, 0.0, RngStream(seed, i))
        hits[i] = _kernels.exit_scan(v, -a, a) >= 0
    return estimate_from(hits)


def exit_time_moments(a: float, order: int = 2, n_grid: int = 4001, x0: float = 0.0) -> np.ndarray:
    """``E[tau^k]`` for ``k = 1..order`` where ``tau`` is the exit time of ``(-a, a)`` from ``x0``.

    Solves ``u_k'' / 2 = -k u_{k-1}`` with ``u_0 = 1`` and ``u_k(+-a) = 0`` by
    second-order finite differences, then interpolates at ``x0``.
    """
    xs = np.linspace(-a, a, n_grid)
    h = xs[1] - xs[0]
    n = n_grid - 2
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0
    ab[2, :-1] = 1.0
    prev = np.ones(n)
    out = []
    for k in range(1, order + 1):
        u = linalg.solve_banded((1, 1), ab, -2.0 * k * prev * h * h)
        out.append(np.interp(x0, xs, np.concatenate([[0.0], u, [0.0]])))
        prev = u
    return np.array(out)


# tables
def tv_bound_table(us=(0.25, 0.5, 1.0, 2.0), gaps=(0.001, 0.01, 0.05, None)) -> Table:
    """Grid TV distance against the bound; a ``None`` gap stands for ``0.1 u``."""
    rows = []
    for u in us:
        for g in gaps:
            v = u + (0.1 * u if g is None else g)
            lhs = gaussian_tv(u, v)
            rhs = gaussian_tv_bound(u, v)
            rows.append((u, v, lhs, rhs, rhs - lhs, bool(lhs <= rhs)))
    return Table(["u", "v", "lhs", "rhs", "margin", "pass"], rows)


def reflection_table(levels=(1.0, 2.0), horizons=(0.5, 1.0, 2.0), tol: float = 1e-4) -> Table:
    rows = []
    for a in levels:
        for T in horizons:
            rep = verify_reflection(a, T)
            rows.append((a, T, rep.quadrature, rep.reference, tol - rep.gap, bool(rep.gap <= tol)))
    return Table(["a", "T", "lhs", "rhs", "margin", "pass"], rows)


def _increasing_bound(density, t_peak: float, beta: float) -> float:
    """Largest ``s <= t_peak`` with ``density(s) <= beta`` (density increasing there)."""
    if density(t_peak) <= beta:
        return t_peak
    lo, hi = 0.0, t_peak
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if density(mid) <= beta:
            lo = mid
        else:
            hi = mid
    return lo


def two_sided_peak(params: HittingDensityParams) -> float:
    """End of the initial increasing stretch of the exit density."""
    ts = np.linspace(params.a**2 / 400, 2 * params.a**2, 4000)
    f = hitting_density_two_sided(params, ts)
    k = int(np.argmax(np.diff(f) < 0))
    return float(ts[k])


def small_time_table(a: float = 1.0, betas=(0.1, 1.0), n_eps: int = 12) -> Table:
    """Small-time bounds for first passage and exit densities.

    For each ``beta`` the constants are chosen as in the argument for these
    bounds: ``tbar`` is the largest time before the density peak with density
    at most ``beta``, ``Delta = tbar / 2`` and ``delta = tbar - Delta``.  The
    table lists, per tested ``eps < Delta``, the left side computed by
    quadrature and the right side ``beta eps``.
    """
    params = HittingDensityParams(a)
    one = lambda s: float(_signed_density(a, s)) if s > 0 else 0.0  # noqa: E731
    two = lambda s: float(hitting_density_two_sided(params, s)) if s > 0 else 0.0  # noqa: E731
    rows = []
    for beta in betas:
        cases = (
            ("first_passage_cdf", one, a * a / 3.0),
            ("first_passage_shift", one, a * a / 3.0),
            ("exit_shift", two, two_sided_peak(params)),
        )
        for name, dens, peak in cases:
            tbar = _increasing_bound(dens, peak, beta)
            big_delta = 0.5 * tbar
            small_delta = tbar - big_delta
            for eps in big_delta * np.geomspace(0.999, 1e-3, n_eps):
                if name == "first_passage_cdf":
                    lhs = one_sided_cdf_quad(a, eps)
                else:
                    lhs = _quad(lambda s: abs(dens(s + eps) - dens(s)), 0.0, small_delta)
                rhs = beta * eps
                rows.append((name, beta, float(small_delta), float(big_delta), float(eps), lhs, rhs,
                             rhs - lhs, bool(lhs <= rhs)))
    return Table(["check", "beta", "delta", "Delta", "eps", "lhs", "rhs", "margin", "pass"], rows)


def exit_density_table(levels=(0.5, 1.0, 2.0), K: int = 20, tol: float = 1e-4) -> Table:
    """Normalisation of both series forms under both readings of negative levels."""
    rows = []
    for a in levels:
        p = HittingDensityParams(a, K)
        for form in ("alternating", "fourfold"):
            for conv in ("signed", "abs"):
                mass = two_sided_normalisation(p, form, conv)
                rows.append((a, form, conv, mass, 1.0, tol - abs(mass - 1.0), bool(abs(mass - 1.0) <= tol)))
    return Table(["a", "form", "convention", "lhs", "rhs", "margin", "pass"], rows)
