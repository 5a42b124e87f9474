"""Closed-form model heat kernels and the glued initial parametrix.

The model geometry is a flat base times a flat-torus fibre; all kernels are
explicit Gaussians or theta-type image sums, so every construction here has
an independent evaluation route for testing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .charts import CHARTS, ChartError, HeatEvalPoint, _canonical
from .phg_index import KernelOrder

log = logging.getLogger(__name__)


class KernelError(ValueError):
    """Raised on invalid kernel arguments (nonpositive time, bad charts)."""


@dataclass(frozen=True)
class ModelGeometry:
    """Flat model data: base dimension b, fibre dimension f with the given
    circle circumferences, total dimension m = 1 + b + f."""

    b: int
    f: int
    circumferences: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "circumferences", tuple(float(c) for c in self.circumferences))
        if self.b < 0 or self.f < 0:
            raise KernelError("dimensions must be nonnegative")
        if len(self.circumferences) != self.f:
            raise KernelError(f"need {self.f} circumferences, got {len(self.circumferences)}")
        if any(c <= 0 for c in self.circumferences):
            raise KernelError("circumferences must be positive")

    @property
    def m(self) -> int:
        return 1 + self.b + self.f


def _g(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _gp(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


def _gpp(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) * (1.0 - 2.0 * u[pos]) / u[pos] ** 4
    return out


def smoothstep(u):
    """The exp(-1/u) transition, 0 for u <= 0 and 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    g, g1 = _g(u), _g(1.0 - u)
    with np.errstate(invalid="ignore"):
        val = np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, g / (g + g1)))
    return float(val) if val.ndim == 0 else val


def smoothstep_d1(u):
    u = np.asarray(u, dtype=float)
    g, g1 = _g(u), _g(1.0 - u)
    gp, g1p = _gp(u), _gp(1.0 - u)
    den = (g + g1) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where((u > 0) & (u < 1),
                       (gp * g1 + g * g1p) / np.where(den > 0, den, 1.0), 0.0)
    return float(val) if val.ndim == 0 else val


def smoothstep_d2(u):
    u = np.asarray(u, dtype=float)
    g, g1 = _g(u), _g(1.0 - u)
    gp, g1p = _gp(u), _gp(1.0 - u)
    gpp, g1pp = _gpp(u), _gpp(1.0 - u)
    D = g + g1
    N = gp * g1 + g * g1p
    Dp = gp - g1p
    Np = gpp * g1 - g * g1pp
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where((u > 0) & (u < 1),
                       (Np * D - 2.0 * N * Dp) / np.where(D > 0, D ** 3, 1.0), 0.0)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth bump, identically 1 on [0, eps], supported in [0, 2 eps),
    built from the exp(-1/u) smoothstep."""

    eps: float = 0.25

    def __post_init__(self):
        if not 0 < self.eps:
            raise KernelError("cutoff eps must be positive")

    def psi(self, x):
        u = (np.asarray(x, dtype=float) - self.eps) / self.eps
        val = 1.0 - smoothstep(u)
        return float(val) if np.ndim(val) == 0 else val

    def dpsi(self, x):
        u = (np.asarray(x, dtype=float) - self.eps) / self.eps
        val = -smoothstep_d1(u) / self.eps
        return float(val) if np.ndim(val) == 0 else val

    def d2psi(self, x):
        u = (np.asarray(x, dtype=float) - self.eps) / self.eps
        val = -smoothstep_d2(u) / self.eps ** 2
        return float(val) if np.ndim(val) == 0 else val


# -- elementary kernels --------------------------------------------------------


def euclid_heat_r2(n: int, t: float, r2) -> float:
    if t <= 0:
        raise KernelError(f"euclid_heat needs t > 0, got {t}")
    return (4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-np.asarray(r2, dtype=float) / (4.0 * t))


def euclid_heat(n: int, t: float, v) -> float:
    """Free heat kernel on R^n at time t and displacement v."""
    vv = np.asarray(v, dtype=float)
    if vv.ndim == 0:
        if n != 1:
            raise KernelError(f"scalar displacement needs n = 1, got n = {n}")
        r2 = vv ** 2
    else:
        if vv.shape[-1] != n:
            raise KernelError(f"displacement has length {vv.shape[-1]}, expected {n}")
        r2 = (vv ** 2).sum(axis=-1)
    out = euclid_heat_r2(n, t, r2)
    return float(out) if np.ndim(out) == 0 else out


def torus_image_count(L: float, t: float) -> int:
    return math.ceil(6.0 * math.sqrt(t) / L) + 3


def torus_heat(L: float, t: float, theta: float, theta_p: float) -> float:
    """Circle heat kernel by the image sum over the covering line.

    Truncation follows the fixed window rule; the Gaussian tail beyond the
    window is bounded analytically and logged.
    """
    if t <= 0:
        raise KernelError(f"torus_heat needs t > 0, got {t}")
    if L <= 0:
        raise KernelError("circumference must be positive")
    d = math.remainder(theta - theta_p, L)  # now |d| <= L/2
    K = torus_image_count(L, t)
    ks = np.arange(-K, K + 1)
    val = float(np.sum(euclid_heat_r2(1, t, (d + ks * L) ** 2)))
    # tail: 2 sum_{k>K} G(kL - L/2) <= 2 G((K+1/2)L) / (1 - exp(-K L^2 / (4t)))
    lead = (4.0 * math.pi * t) ** -0.5 * math.exp(-((K + 0.5) * L) ** 2 / (4.0 * t))
    ratio = math.exp(-K * L * L / (4.0 * t))
    tail = 2.0 * lead / max(1.0 - ratio, 1e-3)
    log.debug("torus_heat(L=%g, t=%g): K=%d, tail bound %.3e", L, t, K, tail)
    return val


def torus_heat_spectral(L: float, t: float, theta: float, theta_p: float,
                        n_modes: int = 200) -> float:
    """Eigenfunction-series route; independent of the image sum."""
    if t <= 0:
        raise KernelError(f"torus_heat needs t > 0, got {t}")
    k = np.arange(1, n_modes + 1)
    omega = 2.0 * math.pi * k / L
    return float((1.0 + 2.0 * np.sum(np.exp(-omega ** 2 * t) * np.cos(omega * (theta - theta_p)))) / L)


# -- normal solutions ----------------------------------------------------------


def nfd_kernel(geo: ModelGeometry, tau: float, S: float, U=(), z=(), z_p=()) -> float:
    """Front-face normal solution: free Gaussian in the (S, U) block times
    the product of fibre circle kernels, all at time tau**2."""
    if tau <= 0:
        raise KernelError(f"nfd_kernel needs tau > 0, got {tau}")
    su = np.concatenate([[float(S)], np.atleast_1d(np.asarray(U, float)).ravel()])
    if su.shape[0] != geo.b + 1:
        raise KernelError(f"(S, U) block has length {su.shape[0]}, expected {geo.b + 1}")
    val = euclid_heat(geo.b + 1, tau ** 2, su)
    zz = np.atleast_1d(np.asarray(z, float)).ravel()
    zzp = np.atleast_1d(np.asarray(z_p, float)).ravel()
    if zz.shape[0] != geo.f or zzp.shape[0] != geo.f:
        raise KernelError("fibre coordinates have the wrong length")
    for L, a, b_ in zip(geo.circumferences, zz, zzp):
        val *= torus_heat(L, tau ** 2, a, b_)
    return float(val)


def ntd_kernel(geo: ModelGeometry, tau: float, cS: float, cU=(), cZ=()) -> float:
    """Temporal-face normal solution: tau**-m times the unit-time Gaussian
    of the frozen model metric in the scaled coordinates."""
    if tau <= 0:
        raise KernelError(f"ntd_kernel needs tau > 0, got {tau}")
    vec = np.concatenate([
        [float(cS)],
        np.atleast_1d(np.asarray(cU, float)).ravel(),
        np.atleast_1d(np.asarray(cZ, float)).ravel(),
    ])
    if vec.shape[0] != geo.m:
        raise KernelError(f"scaled displacement has length {vec.shape[0]}, expected {geo.m}")
    return float(tau ** (-geo.m) * euclid_heat(geo.m, 1.0, vec))


# -- the exact kernel of the flat scattering model -------------------------------


def exact_scattering_heat(m: int, t: float, x: float, x_p: float,
                          cos_angle: float = 1.0) -> float:
    """Flat-space heat kernel through the inverted radial coordinates
    x = 1/r, x' = 1/r'."""
    if t <= 0:
        raise KernelError(f"exact_scattering_heat needs t > 0, got {t}")
    if not (0 < x <= 1 and 0 < x_p <= 1):
        raise KernelError("standard chart needs x, x' in (0, 1]; use projective charts at 0")
    r, rp = 1.0 / x, 1.0 / x_p
    d2 = r * r + rp * rp - 2.0 * r * rp * cos_angle
    return float(euclid_heat_r2(m, t, d2))


def exact_scattering_heat_proj3(m: int, tau: float, cS: float, x_p: float) -> float:
    """The same kernel along equal angular variables, written directly in the
    temporal-face chart: (4 pi)^{-m/2} tau^-m exp(-cS^2 / (4 (1 + x' tau cS)^2))."""
    if tau <= 0:
        raise KernelError(f"needs tau > 0, got {tau}")
    den = 1.0 + x_p * tau * cS
    if den <= 0:
        raise KernelError("point leaves the chart validity region")
    return float((4.0 * math.pi) ** (-m / 2.0) * tau ** (-m)
                 * math.exp(-cS ** 2 / (4.0 * den ** 2)))


# -- chart-evaluable kernels ----------------------------------------------------


@dataclass(frozen=True)
class KernelEvaluator:
    """A pointwise-evaluable heat-kernel-like function with chart metadata
    and a declared heat-calculus order."""

    name: str
    geometry: ModelGeometry | None
    order: KernelOrder | None
    charts: frozenset
    fn: Callable[[HeatEvalPoint], float] = field(repr=False)

    def eval(self, point: HeatEvalPoint) -> float:
        if point.chart not in self.charts:
            raise ChartError(f"{self.name}: chart {point.chart!r} not supported")
        return self.fn(point)

    def scaled(self, factor: float, name: str | None = None) -> "KernelEvaluator":
        return KernelEvaluator(name or f"{factor}*{self.name}", self.geometry,
                               self.order, self.charts,
                               lambda p: factor * self.fn(p))


def scattering_evaluator(m: int) -> KernelEvaluator:
    """Chart-evaluable exact kernel of the flat model, along equal angles."""
    geo = ModelGeometry(b=m - 1, f=0)

    def fn(point: HeatEvalPoint) -> float:
        if point.chart == "standard":
            return exact_scattering_heat(m, float(point.coords["t"]),
                                         float(point.coords["x"]), float(point.coords["x'"]),
                                         float(point.get("cos_angle", 1.0) or 1.0))
        can = _canonical(point, b=0, f=0)
        tau, S, xp = can["tau"], can["S"], can["x'"]
        if tau <= 0:
            raise KernelError("needs tau > 0")
        return exact_scattering_heat_proj3(m, tau, S / tau, xp)

    return KernelEvaluator(f"exact_scattering_m{m}", geo, KernelOrder(Fraction(3), Fraction(0), m),
                           frozenset(CHARTS), fn)


def _parametrix_value(geo: ModelGeometry, cutoff: CutoffSpec, tau: float, S: float,
                      U: np.ndarray, z: np.ndarray, z_p: np.ndarray, x: float) -> float:
    if tau <= 0:
        raise KernelError("parametrix evaluation needs tau > 0")
    full = np.concatenate([[S], U, z - z_p])
    g_m = euclid_heat(geo.m, tau ** 2, full)
    psi_x = cutoff.psi(x)
    psi_t = cutoff.psi(tau)
    fd_part = nfd_kernel(geo, tau, S, U, z, z_p) * psi_x if psi_x else 0.0
    # td branch minus the shared corner term collapses to (1 - psi_x) g_m psi_t
    return float(fd_part + g_m * psi_t * (1.0 - psi_x))


def initial_parametrix(geo: ModelGeometry, cutoff: CutoffSpec | None = None) -> KernelEvaluator:
    """Glue the two normal solutions into a single evaluator.

    The front-face branch is cut off in x, the temporal branch in tau, and
    their shared corner Gaussian is subtracted once; the restriction to the
    front face is the front-face normal solution on the nose, and the
    temporal leading term is the temporal normal solution.
    """
    cutoff = cutoff or CutoffSpec()
    if not cutoff.eps < 0.5:
        raise KernelError("cutoff eps must be < 1/2")

    def fn(point: HeatEvalPoint) -> float:
        can = _canonical(point, geo.b, geo.f)
        tau, S, U, z = can["tau"], can["S"], can["U"], can["z"]
        xp, zp = can["x'"], can["z'"]
        x = xp * (1.0 + xp * S)
        if x < 0:
            raise ChartError("point leaves the chart validity region (x < 0)")
        return _parametrix_value(geo, cutoff, tau, S, U, z, zp, x)

    return KernelEvaluator(f"H0[b={geo.b},f={geo.f}]", geo,
                           KernelOrder(Fraction(3), Fraction(0), geo.m),
                           frozenset(CHARTS), fn)


def ablated_parametrix(geo: ModelGeometry, cutoff: CutoffSpec | None = None) -> KernelEvaluator:
    """The temporal branch alone (front-face branch dropped), for baselines."""
    cutoff = cutoff or CutoffSpec()

    def fn(point: HeatEvalPoint) -> float:
        can = _canonical(point, geo.b, geo.f)
        tau, S, U, z = can["tau"], can["S"], can["U"], can["z"]
        zp = can["z'"]
        if tau <= 0:
            raise KernelError("needs tau > 0")
        full = np.concatenate([[S], U, z - zp])
        return float(euclid_heat(geo.m, tau ** 2, full) * cutoff.psi(tau))

    return KernelEvaluator(f"H0_td_only[b={geo.b},f={geo.f}]", geo, None,
                           frozenset(CHARTS), fn)


# -- the model operator ----------------------------------------------------------


def _steps_dict(steps) -> dict:
    if isinstance(steps, dict):
        return dict(steps)
    h = float(steps)
    return {"hx": h, "hy": h, "hz": h, "ht": h}


def model_laplacian_apply(geo: ModelGeometry, u: Callable, point, steps) -> float:
    """Apply -x^4 d2/dx2 + x^2 Lap_B + Lap_F - (2-b) x^3 d/dx by central
    differences (the Laplacians are the nonnegative geometer's operators).

    ``u`` takes (x, y, z) with y, z sequences of lengths b, f; ``steps``
    must resolve the local scale, hx <~ x^2.
    """
    x, y, z = point
    y = np.atleast_1d(np.asarray(y, float)) if geo.b else np.zeros(0)
    z = np.atleast_1d(np.asarray(z, float)) if geo.f else np.zeros(0)
    st = _steps_dict(steps)
    hx, hy, hz = st["hx"], st.get("hy", st["hx"]), st.get("hz", st["hx"])
    if x <= 0:
        raise KernelError("model operator needs x > 0")
    if x - 2 * hx <= 0:
        raise KernelError("step leaves the chart (x - 2 hx <= 0)")
    if hx > x * x / 2:
        raise KernelError(f"step hx = {hx} does not resolve the local scale x^2 = {x * x}")

    u0 = u(x, y, z)
    uxp, uxm = u(x + hx, y, z), u(x - hx, y, z)
    d2x = (uxp - 2.0 * u0 + uxm) / hx ** 2
    dx = (uxp - uxm) / (2.0 * hx)
    val = -(x ** 4) * d2x - (2.0 - geo.b) * x ** 3 * dx
    for i in range(geo.b):
        e = np.zeros(geo.b)
        e[i] = hy
        d2 = (u(x, y + e, z) - 2.0 * u0 + u(x, y - e, z)) / hy ** 2
        val += -(x ** 2) * d2
    for j in range(geo.f):
        e = np.zeros(geo.f)
        e[j] = hz
        d2 = (u(x, y, z + e) - 2.0 * u0 + u(x, y, z - e)) / hz ** 2
        val += -d2
    return float(val)


def heat_residual(geo: ModelGeometry, kernel: KernelEvaluator, coords: dict, steps) -> float:
    """t (d/dt + Lap_phi) applied to a standard-chart kernel slice by central
    differences in the left spatial point and in time."""
    st = _steps_dict(steps)
    t = float(coords["t"])
    if t - st["ht"] <= 0:
        raise KernelError("time step too large")

    def slice_u(x, y, z, tt=t):
        c = dict(coords)
        c["t"] = tt
        c["x"] = float(x)
        if geo.b:
            c["y"] = tuple(np.atleast_1d(y))
        if geo.f:
            c["z"] = tuple(np.atleast_1d(z))
        return kernel.eval(HeatEvalPoint("standard", c))

    x = float(coords["x"])
    y = np.atleast_1d(np.asarray(coords.get("y", ()), float)) if geo.b else np.zeros(0)
    z = np.atleast_1d(np.asarray(coords.get("z", ()), float)) if geo.f else np.zeros(0)
    ht = st["ht"]
    dt = (slice_u(x, y, z, t + ht) - slice_u(x, y, z, t - ht)) / (2.0 * ht)
    lap = model_laplacian_apply(geo, slice_u, (x, y, z), st)
    return float(t * (dt + lap))
