"""Composition, simplex iteration, factorial decay, Neumann convergence."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from phiheat.model_kernels import CutoffSpec
from phiheat.phg_index import KernelOrder
from phiheat.volterra import (
    DeviationProfile,
    QuadratureSpec,
    TimeConvKernel,
    VolterraError,
    compose,
    constant_surrogate,
    cutoff_band,
    desk_error_kernel,
    desk_parametrix,
    exact_desk_kernel,
    factorial_bound_check,
    improved_error_kernel,
    improved_parametrix,
    neumann_report,
    neumann_sum,
    volterra_iterate,
    zero_kernel,
)

H = exact_desk_kernel()
Q = QuadratureSpec()


# -- compose -------------------------------------------------------------------


def test_compose_semigroup_identity():
    # Chapman-Kolmogorov collapses the spatial integral, leaving the
    # time-integral of a constant: H o H = t H
    hh = compose(H, H, Q)
    for t, r, rp in ((1.0, 0.0, 0.5), (0.5, 0.3, -0.2), (0.8, 1.0, 1.0)):
        assert hh(t, r, rp) == pytest.approx(t * H(t, r, rp), rel=1e-6)


def test_compose_brute_force_spot_check():
    hh = compose(H, H, Q)
    t, r, rp = 1.0, 0.0, 0.5

    def inner(u):
        f = lambda s: H(t - u, r, s) * H(u, s, rp)
        v, _ = integrate.quad(f, -25, 25, epsabs=1e-12, limit=200)
        return v

    brute, _ = integrate.quad(inner, 0, t, epsabs=1e-10, limit=200)
    assert hh(t, r, rp) == pytest.approx(brute, rel=1e-8)


def test_compose_with_zero_kernel_is_zero():
    z = compose(H, zero_kernel(), Q)
    assert z(0.7, 0.1, -0.4) == 0.0


def test_compose_declared_order_follows_ledger():
    a = TimeConvKernel("a", H.fn, order=KernelOrder(3, 0, 1))
    b = TimeConvKernel("b", H.fn, order=KernelOrder(4, None, 1))
    c = compose(a, b, Q)
    assert c.order is not None
    assert c.order.a == 7 and c.order.ell is None
    # finite temporal order on the second factor leaves the order undeclared
    assert compose(b, a, Q).order is None


def test_compose_bilinear():
    p = desk_error_kernel(CutoffSpec(0.25))
    lhs = compose(H.scaled(2.0).plus(H.scaled(-0.5)), p, Q)
    rhs1 = compose(H, p, Q)
    for t, r, rp in ((0.5, 0.2, -0.1), (0.4, 1.0, 0.5)):
        assert lhs(t, r, rp) == pytest.approx(1.5 * rhs1(t, r, rp), rel=1e-9)


def test_compose_associative_at_quadrature_tolerance():
    win = DeviationProfile(amplitude=1.0)
    p = improved_error_kernel(win)
    ab = compose(p, p, Q)
    bc = compose(p, p, Q)
    left = compose(ab, p, Q)
    right = compose(p, bc, Q)
    for t, r, rp in ((0.5, 0.2, 0.4), (0.45, -0.3, 0.1)):
        l, rv = left(t, r, rp), right(t, r, rp)
        assert l == pytest.approx(rv, rel=1e-5)


def test_compose_tolerance_flagging():
    q = QuadratureSpec(time_nodes=2, hermite_nodes=2, tolerance=1e-12)
    bad = compose(H, desk_error_kernel(CutoffSpec(0.25)), q)
    with pytest.raises(VolterraError, match="tolerance"):
        bad(0.5, 0.0, 0.3)


# -- simplex iteration ------------------------------------------------------------


def test_iterate_identity_at_first_order():
    p = desk_error_kernel(CutoffSpec(0.25))
    assert volterra_iterate(p, 1, Q) is p


def test_iterate_matches_compose_at_second_order():
    p = improved_error_kernel(DeviationProfile(amplitude=1.0))
    pp_simplex = volterra_iterate(p, 2, Q)
    pp_compose = compose(p, p, Q)
    rng = np.random.default_rng(7)
    for _ in range(5):
        t = float(rng.uniform(0.3, 0.8))
        r, rp = (float(v) for v in rng.uniform(-1.2, 1.2, size=2))
        a, b = pp_simplex(t, r, rp), pp_compose(t, r, rp)
        assert a == pytest.approx(b, rel=1e-6, abs=1e-12)


def test_iterate_constant_surrogate_matches_simplex_volume():
    vol = 0.7
    s = constant_surrogate(volume=vol)
    q = QuadratureSpec(simplex_time_nodes=6, nodes_per_panel=6)
    for ell in range(1, 6):
        got = volterra_iterate(s, ell, q)(0.5, 0.3, 0.2)
        expect = 0.5 ** (ell - 1) * vol ** (ell - 1) / math.factorial(ell - 1)
        assert got == pytest.approx(expect, rel=1e-8)


def test_iterate_rejects_bad_index():
    with pytest.raises(VolterraError):
        volterra_iterate(H, 0, Q)


# -- factorial bound ---------------------------------------------------------------


def test_factorial_report_on_parametrix_residual():
    p = desk_error_kernel(CutoffSpec(0.25))
    rep = factorial_bound_check(p, 4, samples=[0.0, 0.5, -0.8, 1.2], t=0.5)
    ratios = [row.ratio for row in rep.rows if row.ratio is not None]
    cs = [row.fitted_c for row in rep.rows if row.fitted_c is not None]
    assert len(ratios) == 3
    # fitted constants stop increasing beyond the second step
    assert all(cs[i + 1] <= cs[i] * 1.05 for i in range(1, len(cs) - 1))
    assert rep.factorial_consistent
    assert "ell,sup,ratio,fitted_c" in rep.csv()


def test_factorial_zero_kernel_iterates_vanish():
    z = TimeConvKernel(
        "zero_prof",
        lambda t, r, rp: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp))),
        left_band=(0.0, 2.0),
        gaussian_profile=lambda t, r, rp: np.zeros(
            np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp))),
    )
    rep = factorial_bound_check(z, 3, samples=[0.0], t=0.5)
    assert all(row.sup == 0.0 for row in rep.rows)


def test_factorial_rejects_large_order():
    with pytest.raises(VolterraError, match="desk scale"):
        factorial_bound_check(desk_error_kernel(), 6, samples=[0.0])


# -- Neumann series ------------------------------------------------------------------


SAMPLES = [(0.0, 0.5), (0.3, -0.2), (1.0, 0.8), (-0.5, 0.5), (1.2, -1.2),
           (0.1, 0.1), (0.7, 0.0), (-1.0, -0.3), (0.5, 1.1), (-0.2, 0.9)]


@pytest.fixture(scope="module")
def neumann_run():
    win = DeviationProfile()
    h0 = improved_parametrix(win)
    p = improved_error_kernel(win)
    return neumann_report(h0, p, 4, SAMPLES, t=0.5)


def test_neumann_errors_decrease_and_hit_tolerance(neumann_run):
    rep = neumann_run
    errs = rep.partial_errors
    assert all(errs[i + 1] <= errs[i] * 1.0001 for i in range(len(errs) - 1))
    exact = [H(0.5, r, rp) for r, rp in rep.samples]
    rel_final = max(abs(rep.values[i][-1] - exact[i]) / exact[i]
                    for i in range(len(exact)))
    assert rel_final <= 1e-3


def test_neumann_terms_decay_factorially(neumann_run):
    terms = neumann_run.terms[1:]  # correction terms
    ratios = [terms[i + 1] / terms[i] for i in range(len(terms) - 1)]
    assert all(r < 1.0 for r in ratios)
    # at least factorial decay from the second correction on
    assert all(ratios[i + 1] <= ratios[i] for i in range(1, len(ratios) - 1))


def test_neumann_with_zero_error_returns_parametrix():
    h0 = improved_parametrix()
    z = TimeConvKernel(
        "zero_prof",
        lambda t, r, rp: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp))),
        left_band=(0.0, 2.0),
        gaussian_profile=lambda t, r, rp: np.zeros(
            np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp))),
    )
    s = neumann_sum(h0, z, 3, Q)
    for t, r, rp in ((0.5, 0.0, 0.4), (0.3, 1.0, -1.0)):
        assert s(t, r, rp) == pytest.approx(h0(t, r, rp), rel=1e-14)


def test_neumann_detects_divergence():
    win = DeviationProfile(amplitude=60.0)
    h0 = improved_parametrix(win)
    p = improved_error_kernel(win)
    s = neumann_sum(h0, p, 4)
    with pytest.raises(VolterraError, match="not decaying"):
        s(0.5, 0.0, 0.5)


def test_neumann_rejects_large_order():
    with pytest.raises(VolterraError, match="desk scale"):
        neumann_sum(improved_parametrix(), improved_error_kernel(), 5)


# -- glued parametrix as a desk kernel -------------------------------------------------


def test_desk_parametrix_matches_exact_kernel_in_plateau():
    cutoff = CutoffSpec(0.25)
    h0 = desk_parametrix(cutoff)
    # small times: the temporal cutoff is on its plateau everywhere
    for t, r, rp in ((0.05, 0.3, 0.1), (0.06, 3.0, 2.0)):
        assert h0(t, r, rp) == pytest.approx(H(t, r, rp), rel=1e-14)


def test_desk_error_kernel_vanishes_at_small_times_and_off_band():
    cutoff = CutoffSpec(0.25)
    p = desk_error_kernel(cutoff)
    lo, hi = cutoff_band(cutoff)
    assert p(0.06, 2.0, 0.3) == 0.0  # t < eps^2
    assert p(0.5, 0.5, 0.3) == 0.0   # |r| below the band
    assert p(0.5, hi + 0.5, 0.3) == 0.0  # |r| beyond the band
    assert p(0.5, 0.5 * (lo + hi), 0.3) != 0.0


def test_desk_error_kernel_is_finite_difference_residual():
    cutoff = CutoffSpec(0.25)
    h0 = desk_parametrix(cutoff)
    p = desk_error_kernel(cutoff)
    ht, hr = 1e-6, 1e-4
    for t, r, rp in ((0.3, 2.0, 0.5), (0.5, -2.5, 1.0), (0.12, 3.0, 2.5)):
        dt = (h0(t + ht, r, rp) - h0(t - ht, r, rp)) / (2 * ht)
        drr = (h0(t, r + hr, rp) - 2 * h0(t, r, rp) + h0(t, r - hr, rp)) / hr ** 2
        assert p(t, r, rp) == pytest.approx(dt - drr, rel=2e-5, abs=1e-10)
