"""Chart conversions on the heat blowup space.

Four charts are supported, with plain-ASCII coordinate names:

  standard : t, x, y, z, x', y', z'
  proj1    : s, y, z, x', y', z', tau        (s = x/x', near the front face)
  proj2    : S, U, z, x', y', z', tau        (S = (s-1)/x', U = (y-y')/x')
  proj3    : cS, cU, cZ, x', y', z', tau     (cS = S/tau, cU = U/tau,
                                              cZ = (z-z')/tau)

Vector-valued coordinates (y-type of length b, z-type of length f) are
tuples; scalars are accepted where the length is 1 or 0.  Conversions are
exact algebra and mutually inverse on chart overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

CHARTS = ("standard", "proj1", "proj2", "proj3")

CHART_KEYS = {
    "standard": ("t", "x", "y", "z", "x'", "y'", "z'"),
    "proj1": ("s", "y", "z", "x'", "y'", "z'", "tau"),
    "proj2": ("S", "U", "z", "x'", "y'", "z'", "tau"),
    "proj3": ("cS", "cU", "cZ", "x'", "y'", "z'", "tau"),
}


class ChartError(ValueError):
    """Raised for unknown charts, invalid coordinates, or conversions
    attempted outside the overlap of validity regions."""


def _vec(value, n: int, name: str) -> np.ndarray:
    if value is None:
        if n == 0:
            return np.zeros(0)
        raise ChartError(f"missing coordinate {name!r}")
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape != (n,):
        raise ChartError(f"coordinate {name!r} should have length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class HeatEvalPoint:
    """A point of the heat space in one of the standard charts."""

    chart: str
    coords: Mapping[str, object]

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ChartError(f"unknown chart {self.chart!r}")
        object.__setattr__(self, "coords", dict(self.coords))
        unknown = set(self.coords) - set(CHART_KEYS[self.chart])
        if unknown:
            raise ChartError(f"chart {self.chart!r} does not take {sorted(unknown)}")

    def get(self, key: str, default=None):
        return self.coords.get(key, default)


def _canonical(point: HeatEvalPoint, b: int, f: int) -> dict:
    """Common intermediate data: tau, S, U, z, z', x', y' (and x where finite)."""
    c = point.coords
    xp = float(c["x'"])
    if xp < 0:
        raise ChartError("x' must be nonnegative")
    yp = _vec(c.get("y'", () if b == 0 else None), b, "y'")
    zp = _vec(c.get("z'", () if f == 0 else None), f, "z'")

    if point.chart == "standard":
        t = float(c["t"])
        if t < 0:
            raise ChartError("t must be nonnegative")
        tau = math.sqrt(t)
        x = float(c["x"])
        if x < 0:
            raise ChartError("x must be nonnegative")
        if xp == 0:
            raise ChartError("standard chart cannot be projectivized at x' = 0")
        y = _vec(c.get("y", () if b == 0 else None), b, "y")
        z = _vec(c.get("z", () if f == 0 else None), f, "z")
        S = (x - xp) / xp ** 2
        U = (y - yp) / xp
    elif point.chart == "proj1":
        tau = float(c["tau"])
        s = float(c["s"])
        if s < 0:
            raise ChartError("s must be nonnegative")
        if xp == 0:
            raise ChartError("proj1 conversion needs x' > 0")
        y = _vec(c.get("y", () if b == 0 else None), b, "y")
        z = _vec(c.get("z", () if f == 0 else None), f, "z")
        S = (s - 1.0) / xp
        U = (y - yp) / xp
    elif point.chart == "proj2":
        tau = float(c["tau"])
        S = float(c["S"])
        U = _vec(c.get("U", () if b == 0 else None), b, "U")
        z = _vec(c.get("z", () if f == 0 else None), f, "z")
    else:  # proj3
        tau = float(c["tau"])
        if tau < 0:
            raise ChartError("tau must be nonnegative")
        S = tau * float(c["cS"])
        U = tau * _vec(c.get("cU", () if b == 0 else None), b, "cU")
        z = zp + tau * _vec(c.get("cZ", () if f == 0 else None), f, "cZ")
    if tau < 0:
        raise ChartError("tau must be nonnegative")
    return {"tau": tau, "S": S, "U": np.asarray(U, float), "z": np.asarray(z, float),
            "x'": xp, "y'": yp, "z'": zp}


def _tupleize(arr: np.ndarray):
    return tuple(float(v) for v in arr)


def convert_chart(point: HeatEvalPoint, target: str, b: int = 0, f: int = 0) -> HeatEvalPoint:
    """Exact conversion between charts; round trips are the identity.

    Raises outside the overlap of validity regions (e.g. a point with
    x' = 0 has no standard-chart representative, and tau = 0 blocks proj3).
    """
    if target not in CHARTS:
        raise ChartError(f"unknown chart {target!r}")
    if target == point.chart:
        return point
    can = _canonical(point, b, f)
    tau, S, U, z = can["tau"], can["S"], can["U"], can["z"]
    xp, yp, zp = can["x'"], can["y'"], can["z'"]

    if target == "standard":
        if xp == 0:
            raise ChartError("cannot convert to the standard chart at x' = 0")
        x = xp * (1.0 + xp * S)
        if x < 0:
            raise ChartError("converted point leaves the chart validity region (x < 0)")
        out = {"t": tau ** 2, "x": x, "x'": xp}
        if len(U):
            out["y"] = _tupleize(yp + xp * U)
            out["y'"] = _tupleize(yp)
        if len(z):
            out["z"] = _tupleize(z)
            out["z'"] = _tupleize(zp)
        return HeatEvalPoint("standard", out)
    if target == "proj1":
        if xp == 0:
            raise ChartError("cannot convert to proj1 at x' = 0")
        out = {"s": 1.0 + xp * S, "x'": xp, "tau": tau}
        if out["s"] < 0:
            raise ChartError("converted point leaves the chart validity region (s < 0)")
        if len(U):
            out["y"] = _tupleize(yp + xp * U)
            out["y'"] = _tupleize(yp)
        if len(z):
            out["z"] = _tupleize(z)
            out["z'"] = _tupleize(zp)
        return HeatEvalPoint("proj1", out)
    if target == "proj2":
        out = {"S": S, "x'": xp, "tau": tau}
        if len(U):
            out["U"] = _tupleize(U)
            out["y'"] = _tupleize(yp)
        if len(z):
            out["z"] = _tupleize(z)
            out["z'"] = _tupleize(zp)
        return HeatEvalPoint("proj2", out)
    # proj3
    if tau == 0:
        raise ChartError("cannot convert to proj3 at tau = 0")
    out = {"cS": S / tau, "x'": xp, "tau": tau}
    if len(U):
        out["cU"] = _tupleize(U / tau)
        out["y'"] = _tupleize(yp)
    if len(z):
        out["cZ"] = _tupleize((z - zp) / tau)
        out["z'"] = _tupleize(zp)
    return HeatEvalPoint("proj3", out)
