"""Numerical estimation of boundary orders: approach paths into the faces of
the heat space, log-log order fits, infinite-order checks, and the
first-order-solving test for the initial parametrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .charts import CHARTS, ChartError, HeatEvalPoint, convert_chart
from .model_kernels import (
    KernelError,
    KernelEvaluator,
    ModelGeometry,
    heat_residual,
)

__all__ = [
    "ApproachPath",
    "OrderFit",
    "AsymptoticsError",
    "path_to_face",
    "fit_face_order",
    "check_infinite_order",
    "residual_order",
    "convert_chart",
    "HeatEvalPoint",
]

FACES = ("td", "fd", "ff", "tf", "lf", "rf")

DEFAULT_SIGMA0 = 0.2
DEFAULT_RATIO = 0.7
DEFAULT_POINTS = 12
DEFAULT_WINDOW = 8


class AsymptoticsError(ValueError):
    pass


class StepSizeError(AsymptoticsError):
    """Discretization error dominates the residual; refine the steps."""


@dataclass(frozen=True)
class ApproachPath:
    """Geometric approach into one boundary face: the varying coordinate is
    set to sigma_k = sigma0 * ratio**k, everything else held at the base."""

    face: str
    chart: str
    base: Mapping[str, object]
    varying: str
    sigma0: float = DEFAULT_SIGMA0
    ratio: float = DEFAULT_RATIO
    n_points: int = DEFAULT_POINTS

    def __post_init__(self):
        if self.face not in FACES:
            raise AsymptoticsError(f"unknown face {self.face!r}")
        if self.chart not in CHARTS:
            raise AsymptoticsError(f"unknown chart {self.chart!r}")
        if not (0 < self.ratio < 1 and self.sigma0 > 0):
            raise AsymptoticsError("need sigma0 > 0 and ratio in (0, 1)")
        if self.n_points < 4:
            raise AsymptoticsError("need at least 4 path points")
        object.__setattr__(self, "base", dict(self.base))

    def sigmas(self) -> np.ndarray:
        return self.sigma0 * self.ratio ** np.arange(self.n_points)

    def points(self) -> list[tuple[float, HeatEvalPoint]]:
        out = []
        for s in self.sigmas():
            coords = dict(self.base)
            coords[self.varying] = float(s)
            out.append((float(s), HeatEvalPoint(self.chart, coords)))
        return out


_FACE_DEFAULTS = {
    # face -> (chart, varying coordinate, default base)
    "td": ("proj3", "tau", {"cS": 0.7, "x'": 0.3}),
    "fd": ("proj3", "x'", {"cS": 0.6, "tau": 0.5}),
    "ff": ("proj1", "x'", {"s": 2.5, "tau": 0.6}),
    "tf": ("proj2", "tau", {"S": 1.2, "x'": 0.25}),
    "rf": ("proj1", "s", {"x'": 0.3, "tau": 0.6}),
    "lf": ("standard", "x'", {"t": 0.36, "x": 0.4}),
}


def path_to_face(face: str, geo: ModelGeometry | None = None,
                 base: Mapping[str, object] | None = None, **kw) -> ApproachPath:
    """A ready-made path into one of the six boundary faces, staying inside a
    single chart's validity region and away from corners."""
    if face not in _FACE_DEFAULTS:
        raise AsymptoticsError(f"unknown face {face!r}")
    chart, varying, default_base = _FACE_DEFAULTS[face]
    coords = dict(default_base)
    if geo is not None:
        if geo.b and chart in ("proj2",):
            coords.setdefault("U", tuple([0.0] * geo.b))
            coords.setdefault("y'", tuple([0.0] * geo.b))
        if geo.b and chart == "proj3":
            coords.setdefault("cU", tuple([0.0] * geo.b))
            coords.setdefault("y'", tuple([0.0] * geo.b))
        if geo.f:
            key = {"proj3": "cZ", "proj2": "z", "proj1": "z", "standard": "z"}[chart]
            coords.setdefault(key, tuple([0.0] * geo.f))
            coords.setdefault("z'", tuple([0.0] * geo.f))
    if base:
        coords.update(base)
    return ApproachPath(face, chart, coords, varying, **kw)


@dataclass(frozen=True)
class OrderFit:
    """Least-squares exponent of |K| against the defining function along a
    path (positive order = vanishing), with the fit residual as confidence."""

    exponent: float
    residual: float
    window: tuple[int, int]
    n_points: int
    possible_log: bool = False
    infinite: bool = False

    def __str__(self):
        if self.infinite:
            return "order(infinite)"
        tag = ", possible log factor" if self.possible_log else ""
        return f"order({self.exponent:.3f} +- {self.residual:.3f}{tag})"


def _evaluate(kernel: KernelEvaluator, path: ApproachPath) -> np.ndarray:
    vals = []
    for _, point in path.points():
        vals.append(kernel.eval(point))
    return np.asarray(vals, dtype=float)


def fit_face_order(kernel: KernelEvaluator, path: ApproachPath,
                   window: int = DEFAULT_WINDOW) -> OrderFit:
    """Slope of log|K| against log sigma on the tail window of the path."""
    sig = path.sigmas()
    vals = np.abs(_evaluate(kernel, path))
    if np.all(vals == 0.0):
        return OrderFit(math.inf, 0.0, (0, path.n_points), path.n_points, infinite=True)
    lo = max(0, path.n_points - window)
    sig_w, val_w = sig[lo:], vals[lo:]
    if np.any(val_w == 0.0):
        return OrderFit(math.inf, 0.0, (lo, path.n_points), path.n_points, infinite=True)
    ls, lv = np.log(sig_w), np.log(val_w)
    slope, intercept = np.polyfit(ls, lv, 1)
    resid = float(np.max(np.abs(lv - (slope * ls + intercept))))

    possible_log = False
    if len(ls) >= 6:
        half = len(ls) // 2
        s1, _ = np.polyfit(ls[:half], lv[:half], 1)
        s2, _ = np.polyfit(ls[half:], lv[half:], 1)
        drift = abs(s1 - s2)
        curvature = np.polyfit(ls, lv, 2)[0]
        # a log factor sigma^g |log sigma|^p bends the log-log data toward
        # extra growth: bounded slope drift with concave curvature
        if 1e-4 < drift <= 0.15 and curvature < -1e-4:
            possible_log = True
    return OrderFit(float(slope), resid, (lo, path.n_points), path.n_points,
                    possible_log=possible_log)


def check_infinite_order(kernel: KernelEvaluator, path: ApproachPath, n_max: int,
                         tail: int = 6) -> bool:
    """True iff sigma**-N |K| decreases monotonically on the grid tail for
    every N up to n_max.  Values that have underflowed to exact zero count
    as the continuation of the decrease."""
    sig = path.sigmas()
    vals = np.abs(_evaluate(kernel, path))
    if np.all(vals == 0.0):
        return True
    t = min(tail, len(sig))
    for n in range(1, n_max + 1):
        scaled = vals[-t:] / sig[-t:] ** n
        for prev, nxt in zip(scaled[:-1], scaled[1:]):
            if nxt == 0.0:
                continue
            if not nxt < prev:
                return False
    return True


def _default_residual_steps(coords: Mapping[str, float]) -> dict:
    xp = float(coords["x'"])
    t = float(coords["t"])
    return {
        "hx": 0.04 * xp ** 3,
        "hy": 0.04 * xp ** 2,
        "hz": 1e-3,
        "ht": 1e-3 * t,
    }


def residual_order(geo: ModelGeometry, kernel: KernelEvaluator,
                   path: ApproachPath | None = None,
                   steps_fn: Callable[[Mapping[str, float]], dict] | None = None,
                   window: int = DEFAULT_WINDOW) -> OrderFit:
    """Fitted front-face order of t (d/dt + Lap_phi) K along a path into fd.

    The finite-difference steps shrink with the path (the x-step like x'^3)
    so the discretization error decays faster than the residual signal; a
    halved-step cross-check on the first point guards against steps that are
    too coarse.
    """
    path = path or path_to_face("fd", geo, base={"tau": 0.375, "cS": 0.6},
                                sigma0=0.1, ratio=0.7, n_points=10)
    steps_fn = steps_fn or _default_residual_steps

    sig = path.sigmas()
    vals = []
    for k, (_, point) in enumerate(path.points()):
        std = convert_chart(point, "standard", geo.b, geo.f)
        steps = steps_fn(std.coords)
        r = heat_residual(geo, kernel, std.coords, steps)
        if k == 0:
            fine = heat_residual(geo, kernel, std.coords,
                                 {k2: v / 2 for k2, v in steps.items()})
            scale = max(abs(r), abs(fine))
            if scale > 1e-13 and abs(r - fine) > 0.5 * scale:
                raise StepSizeError(
                    f"residual changes by {abs(r - fine):.3e} under step halving"
                )
        vals.append(r)
    vals = np.abs(np.asarray(vals))
    if np.all(vals < 1e-15):
        return OrderFit(math.inf, 0.0, (0, path.n_points), path.n_points, infinite=True)
    lo = max(0, path.n_points - window)
    ls, lv = np.log(sig[lo:]), np.log(vals[lo:])
    slope, intercept = np.polyfit(ls, lv, 1)
    resid = float(np.max(np.abs(lv - (slope * ls + intercept))))
    return OrderFit(float(slope), resid, (lo, path.n_points), path.n_points)
