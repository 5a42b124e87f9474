"""Chart conversions, order fits, infinite-order checks, residual orders."""

from __future__ import annotations

import math

import numpy as np
import pytest

from phiheat.asymptotics import (
    ApproachPath,
    StepSizeError,
    check_infinite_order,
    convert_chart,
    fit_face_order,
    path_to_face,
    residual_order,
)
from phiheat.charts import CHARTS, ChartError, HeatEvalPoint
from phiheat.model_kernels import (
    CutoffSpec,
    KernelEvaluator,
    ModelGeometry,
    ablated_parametrix,
    initial_parametrix,
    scattering_evaluator,
)

GEO1 = ModelGeometry(b=0, f=0)
GEO_BF = ModelGeometry(b=1, f=1, circumferences=(2.0,))


# -- chart conversions -----------------------------------------------------------


def test_round_trip_standard_proj2_standard_is_identity():
    p = HeatEvalPoint("standard", {"t": 0.25, "x": 0.3, "x'": 0.2,
                                   "y": (0.4,), "y'": (0.1,), "z": (0.9,), "z'": (0.2,)})
    back = convert_chart(convert_chart(p, "proj2", 1, 1), "standard", 1, 1)
    for k, v in p.coords.items():
        got = back.coords[k]
        assert np.allclose(got, v, rtol=0, atol=1e-12), k


def test_round_trips_all_chart_pairs():
    p = HeatEvalPoint("proj2", {"S": 0.7, "U": (0.2,), "z": (0.5,), "x'": 0.15,
                                "y'": (0.3,), "z'": (0.1,), "tau": 0.4})
    for target in CHARTS:
        there = convert_chart(p, target, 1, 1)
        back = convert_chart(there, "proj2", 1, 1)
        for k, v in p.coords.items():
            assert np.allclose(back.coords[k], v, rtol=0, atol=1e-12), (target, k)


def test_diagonal_maps_to_vanishing_projective_offset():
    p = HeatEvalPoint("standard", {"t": 0.16, "x": 0.2, "x'": 0.2,
                                   "y": (0.5,), "y'": (0.5,)})
    q = convert_chart(p, "proj2", 1, 0)
    assert q.coords["S"] == 0.0
    assert q.coords["U"] == (0.0,)


def test_proj2_to_proj3_rescales_by_tau():
    p = HeatEvalPoint("proj2", {"S": 0.6, "U": (0.4,), "z": (0.8,), "x'": 0.1,
                                "y'": (0.0,), "z'": (0.2,), "tau": 0.5})
    q = convert_chart(p, "proj3", 1, 1)
    assert q.coords["cS"] == pytest.approx(0.6 / 0.5, rel=1e-15)
    assert q.coords["cU"][0] == pytest.approx(0.4 / 0.5, rel=1e-15)
    assert q.coords["cZ"][0] == pytest.approx((0.8 - 0.2) / 0.5, rel=1e-15)


def test_conversions_blocked_outside_overlaps():
    on_fd = HeatEvalPoint("proj2", {"S": 0.1, "x'": 0.0, "tau": 0.3})
    with pytest.raises(ChartError):
        convert_chart(on_fd, "standard")
    at_t0 = HeatEvalPoint("proj2", {"S": 0.1, "x'": 0.2, "tau": 0.0})
    with pytest.raises(ChartError):
        convert_chart(at_t0, "proj3")


# -- synthetic order fits -----------------------------------------------------------


def synthetic(fn) -> KernelEvaluator:
    """Evaluator reading the path's varying coordinate from the point."""

    def f(point):
        sigma = point.coords.get("x'", point.coords.get("tau", point.coords.get("s")))
        return fn(float(sigma))

    return KernelEvaluator("synthetic", None, None, frozenset(CHARTS), f)


def test_fit_recovers_synthetic_exponents():
    path = path_to_face("fd", GEO1)
    for gamma in (-3.0, -1.0, 0.0, 0.5, 2.0):
        k = synthetic(lambda s, g=gamma: s ** g * (1.0 + 0.2 * s))
        fit = fit_face_order(k, path)
        assert abs(fit.exponent - gamma) < 0.02, gamma


def test_fit_quadratic_with_smooth_factor():
    fit = fit_face_order(synthetic(lambda s: s ** 2 * (2.0 + s)), path_to_face("fd", GEO1))
    assert abs(fit.exponent - 2.0) < 0.01


def test_fit_constant_function_has_zero_slope():
    fit = fit_face_order(synthetic(lambda s: 3.7), path_to_face("fd", GEO1))
    assert abs(fit.exponent) < 1e-12


def test_fit_invariant_under_positive_rescaling():
    path = path_to_face("td", GEO1)
    k = scattering_evaluator(1)
    f1 = fit_face_order(k, path)
    f2 = fit_face_order(k.scaled(7.0), path)
    assert f1.exponent == pytest.approx(f2.exponent, abs=1e-12)


def test_fit_zero_function_reports_infinite_sentinel():
    fit = fit_face_order(synthetic(lambda s: 0.0), path_to_face("fd", GEO1))
    assert fit.infinite and math.isinf(fit.exponent)


def test_fit_flags_possible_log_factor():
    fit = fit_face_order(synthetic(lambda s: s * (-math.log(s))), path_to_face("fd", GEO1))
    assert fit.possible_log


# -- infinite-order checks ------------------------------------------------------------


def test_constant_fails_infinite_order_at_first_power():
    assert not check_infinite_order(synthetic(lambda s: 1.0), path_to_face("fd", GEO1), 1)


def test_exponential_flatness_passes():
    assert check_infinite_order(synthetic(lambda s: math.exp(-1.0 / s)),
                                path_to_face("fd", GEO1), 10)


def test_exact_kernel_vanishes_to_infinite_order_at_front_face():
    for m in (1, 2, 3):
        k = scattering_evaluator(m)
        path = path_to_face("ff", base={"s": 2.5, "tau": 0.6})
        assert check_infinite_order(k, path, 8), m


# -- heat-calculus membership of the exact kernel --------------------------------------


@pytest.mark.parametrize("m", [1, 2, 3])
def test_exact_kernel_membership_orders(m):
    k = scattering_evaluator(m)
    td = fit_face_order(k, path_to_face("td", base={"cS": 0.7, "x'": 0.3}))
    assert abs(td.exponent - (-m)) < 0.05
    fd = fit_face_order(k, path_to_face("fd", base={"cS": 0.6, "tau": 0.5}))
    assert fd.exponent >= -0.05
    assert check_infinite_order(k, path_to_face("ff", base={"s": 2.5, "tau": 0.6}), 8)


# -- residual orders ---------------------------------------------------------------------


def test_parametrix_residual_exceeds_ablated_baseline():
    geo = GEO1
    cutoff = CutoffSpec(0.25)
    h0 = initial_parametrix(geo, cutoff)
    baseline_kernel = ablated_parametrix(geo, cutoff)
    fit_h0 = residual_order(geo, h0)
    fit_base = residual_order(geo, baseline_kernel)
    assert fit_h0.exponent - fit_base.exponent >= 1.0 - 0.1
    # dropping the front-face branch strictly lowers the fitted order
    assert fit_base.exponent < fit_h0.exponent


def test_exact_kernel_residual_is_discretization_noise():
    from phiheat.model_kernels import heat_residual

    geo = GEO1
    k = scattering_evaluator(1)
    # value scale of the kernel along the path is O(1); the residual stays
    # at finite-difference noise level at every face-approaching point
    for coords in ({"t": 0.36, "x": 0.35, "x'": 0.3},
                   {"t": 0.04, "x": 0.31, "x'": 0.3},
                   {"t": 0.36, "x": 0.05, "x'": 0.3}):
        r = heat_residual(geo, k, coords, {"hx": 2e-4, "ht": 2e-5})
        assert abs(r) < 5e-5


def test_residual_order_detects_coarse_steps():
    geo = GEO1
    h0 = initial_parametrix(geo, CutoffSpec(0.25))
    with pytest.raises(StepSizeError):
        residual_order(geo, h0, steps_fn=lambda c: {
            "hx": 0.4 * float(c["x'"]) ** 2, "ht": 1e-3 * float(c["t"])})


def test_path_validation():
    with pytest.raises(Exception):
        ApproachPath("nowhere", "proj2", {}, "x'")
    with pytest.raises(Exception):
        ApproachPath("fd", "proj2", {}, "x'", ratio=1.5)
