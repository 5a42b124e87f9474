"""Desk-scale composition and Volterra iteration on the one-dimensional
scattering model.

The model manifold is the real line in the inverted radial coordinate r,
where the model volume is the Lebesgue measure and the model operator is
-d^2/dr^2; the compactifying boundary function is x(r) = (1 + r^2)^(-1/2).
The exact heat kernel is the free Gaussian, the glued parametrix is the
Gaussian times a cutoff combination chi(x(r), sqrt(t)), and the heat-equation
error kernel comes out in closed form as a Gaussian times an affine factor
in the displacement.  That structure drives the quadrature choices: spatial
integrals against a Gaussian factor are exact Gauss-Hermite contractions,
everything else is panelled Gauss-Legendre or Simpson sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .model_kernels import CutoffSpec
from .phg_index import KernelOrder, composition_ledger

__all__ = [
    "TimeConvKernel",
    "QuadratureSpec",
    "VolterraError",
    "exact_desk_kernel",
    "desk_parametrix",
    "desk_error_kernel",
    "DeviationProfile",
    "improved_parametrix",
    "improved_error_kernel",
    "constant_surrogate",
    "zero_kernel",
    "cutoff_band",
    "iterate_grids",
    "compose",
    "volterra_iterate",
    "factorial_bound_check",
    "neumann_sum",
    "neumann_report",
    "FactorialReport",
    "NeumannReport",
]


class VolterraError(RuntimeError):
    pass


DEFAULT_HORIZON = 1.0


@dataclass(frozen=True)
class TimeConvKernel:
    """A time-convolution kernel (t, r, r') -> value on the desk model.

    ``fn`` must broadcast over numpy arrays.  ``gaussian_profile``, when
    set, is the kernel divided by the free Gaussian in (r - r'); spatial
    integrals against such kernels use exact Gauss-Hermite nodes.
    ``support_radius`` bounds the left-variable support; ``left_band``
    refines it to an |r|-annulus (lo may be 0); ``spatial_interval``
    overrides the integration domain for compact surrogate models;
    ``time_breaks`` marks times where the kernel switches regime (panel
    boundaries for the grid quadratures).
    """

    name: str
    fn: Callable = field(repr=False)
    order: KernelOrder | None = None
    support_radius: float | None = None
    left_band: tuple[float, float] | None = None
    spatial_interval: tuple[float, float] | None = None
    gaussian_profile: Callable | None = field(default=None, repr=False)
    time_breaks: tuple[float, ...] = ()
    horizon: float = DEFAULT_HORIZON

    def __call__(self, t, r, rp):
        return self.fn(t, r, rp)

    def scaled(self, c: float) -> "TimeConvKernel":
        prof = None
        if self.gaussian_profile is not None:
            prof = lambda t, r, rp: c * self.gaussian_profile(t, r, rp)
        return replace(self, name=f"{c}*{self.name}",
                       fn=lambda t, r, rp: c * self.fn(t, r, rp),
                       gaussian_profile=prof, order=None)

    def plus(self, other: "TimeConvKernel") -> "TimeConvKernel":
        prof = None
        if self.gaussian_profile is not None and other.gaussian_profile is not None:
            prof = lambda t, r, rp: (self.gaussian_profile(t, r, rp)
                                     + other.gaussian_profile(t, r, rp))
        radius = None
        if self.support_radius is not None and other.support_radius is not None:
            radius = max(self.support_radius, other.support_radius)
        return TimeConvKernel(
            f"{self.name}+{other.name}",
            lambda t, r, rp: self.fn(t, r, rp) + other.fn(t, r, rp),
            order=None, support_radius=radius,
            spatial_interval=self.spatial_interval, gaussian_profile=prof,
            horizon=min(self.horizon, other.horizon),
        )


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts and truncation for the composition quadratures; the
    spatial rule integrates against the model volume, which is Lebesgue
    measure in the r coordinate."""

    time_nodes: int = 20
    simplex_time_nodes: int = 40
    hermite_nodes: int = 28
    panel_width: float = 0.25
    nodes_per_panel: int = 8
    radius: float = 4.25
    substitution: str = "linear"  # or "sqrt", clustering nodes at u = 0
    grid_spacing: float = 0.05
    cheb_nodes: int = 12
    tolerance: float | None = None

    def __post_init__(self):
        if self.substitution not in ("linear", "sqrt"):
            raise VolterraError(f"unknown substitution {self.substitution!r}")


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=16)
def _hermgauss(n: int):
    return np.polynomial.hermite.hermgauss(n)


def _time_nodes(q: QuadratureSpec, a: float, b: float,
                breaks: Sequence[float] = ()):
    """Gauss-Legendre nodes on (a, b), panel-split at interior breaks; the
    first panel is optionally sqrt-clustered at a."""
    x, w = _leggauss(q.time_nodes)
    v = 0.5 * (x + 1.0)
    wv = 0.5 * w
    edges = sorted({a, b, *[c for c in breaks if a < c < b]})
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if q.substitution == "sqrt" and lo == a:
            nodes.append(lo + (hi - lo) * v ** 2)
            weights.append(wv * 2.0 * v * (hi - lo))
        else:
            nodes.append(lo + (hi - lo) * v)
            weights.append(wv * (hi - lo))
    return np.concatenate(nodes), np.concatenate(weights)


def _spatial_grid(q: QuadratureSpec, interval: tuple[float, float]):
    lo, hi = interval
    n_panels = max(1, math.ceil((hi - lo) / q.panel_width))
    x, w = _leggauss(q.nodes_per_panel)
    edges = np.linspace(lo, hi, n_panels + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


# -- desk-model kernels -----------------------------------------------------------


def _gauss(t, d):
    t = np.asarray(t, dtype=float)
    return (4.0 * math.pi * t) ** -0.5 * np.exp(-np.asarray(d, float) ** 2 / (4.0 * t))


def x_of_r(r):
    r = np.asarray(r, dtype=float)
    return (1.0 + r * r) ** -0.5


def dx_dr(r):
    r = np.asarray(r, dtype=float)
    return -r * (1.0 + r * r) ** -1.5


def d2x_dr2(r):
    r = np.asarray(r, dtype=float)
    return (2.0 * r * r - 1.0) * (1.0 + r * r) ** -2.5


def cutoff_band(cutoff: CutoffSpec) -> tuple[float, float]:
    """|r|-interval where the spatial cutoff derivative can be nonzero."""
    eps = cutoff.eps
    hi = math.sqrt(1.0 / eps ** 2 - 1.0)
    lo = math.sqrt(max(1.0 / (4.0 * eps ** 2) - 1.0, 0.0))
    return lo, hi


def exact_desk_kernel(horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    return TimeConvKernel(
        "exact_m1",
        lambda t, r, rp: _gauss(t, np.asarray(r, float) - np.asarray(rp, float)),
        order=KernelOrder(Fraction(3), Fraction(0), 1),
        gaussian_profile=lambda t, r, rp: np.ones_like(
            np.broadcast_to(np.asarray(t, float) + np.asarray(r, float) * 0
                            + np.asarray(rp, float) * 0,
                            np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp)))),
        horizon=horizon,
    )


def _chi(cutoff: CutoffSpec, r, tau):
    px = cutoff.psi(x_of_r(r))
    pt = cutoff.psi(tau)
    return px + pt - px * pt


def desk_parametrix(cutoff: CutoffSpec | None = None,
                    horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    """The glued initial parametrix on the desk model: G(t, r - r') times
    chi(x(r), sqrt(t))."""
    cutoff = cutoff or CutoffSpec()

    def prof(t, r, rp):
        tau = np.sqrt(np.asarray(t, float))
        out = _chi(cutoff, r, tau)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(out), np.shape(rp))).copy()

    eps2 = cutoff.eps ** 2
    return TimeConvKernel(
        "H0_m1",
        lambda t, r, rp: _gauss(t, np.asarray(r, float) - np.asarray(rp, float))
        * prof(t, r, rp),
        order=KernelOrder(Fraction(3), Fraction(0), 1),
        gaussian_profile=prof,
        time_breaks=(eps2, 4.0 * eps2),
        horizon=horizon,
    )


def _error_coeffs(cutoff: CutoffSpec, r, t):
    """A0, A1 with P = G(t, r - r') (A0(r, t) + (r - r') A1(r, t))."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    tau = np.sqrt(t)
    x = x_of_r(r)
    px, dpx, d2px = cutoff.psi(x), cutoff.dpsi(x), cutoff.d2psi(x)
    pt, dpt = cutoff.psi(tau), cutoff.dpsi(tau)
    xp, xpp = dx_dr(r), d2x_dr2(r)
    a0 = dpt * (1.0 - px) / (2.0 * tau) - (d2px * xp ** 2 + dpx * xpp) * (1.0 - pt)
    a1 = dpx * xp * (1.0 - pt) / t
    return a0, a1


def desk_error_kernel(cutoff: CutoffSpec | None = None,
                      horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    """Heat-equation residual (d/dt - d^2/dr^2) of the desk parametrix, in
    closed form.  It vanishes identically for t < eps^2 and is supported in
    the cutoff band |r| <= sqrt(1/eps^2 - 1) in its left variable."""
    cutoff = cutoff or CutoffSpec()
    band = cutoff_band(cutoff)

    def prof(t, r, rp):
        a0, a1 = _error_coeffs(cutoff, r, t)
        d = np.asarray(r, float) - np.asarray(rp, float)
        return a0 + d * a1

    def fn(t, r, rp):
        d = np.asarray(r, float) - np.asarray(rp, float)
        return _gauss(t, d) * prof(t, r, rp)

    eps2 = cutoff.eps ** 2
    return TimeConvKernel(
        "P_m1", fn, order=KernelOrder(Fraction(4), None, 1),
        support_radius=band[1], left_band=band, gaussian_profile=prof,
        time_breaks=(eps2, 4.0 * eps2), horizon=horizon,
    )


@dataclass(frozen=True)
class DeviationProfile:
    """Analytic interior deviation phi(t, r) = A exp(-theta/t) exp(-(r/R)^2).

    It vanishes to infinite order as t -> 0 and super-polynomially in the
    compactifying boundary function as |r| grows, so the induced heat
    residual lives in the all-faces-infinite-order regime where the series
    argument converges; being entire away from t = 0, it keeps the Hermite
    and Legendre rules spectral.
    """

    amplitude: float = 0.05
    theta: float = 0.2
    width: float = 1.0

    def phi(self, t, r):
        t = np.asarray(t, float)
        r = np.asarray(r, float)
        return (self.amplitude * np.exp(-self.theta / np.maximum(t, 1e-300))
                * np.exp(-(r / self.width) ** 2))

    def effective_radius(self) -> float:
        return 5.0 * self.width


def improved_parametrix(window: DeviationProfile | None = None,
                        horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    """Desk stand-in for the boundary-improved parametrix: the exact kernel
    minus a small interior deviation whose residual vanishes to infinite
    order at every boundary face of the heat space."""
    window = window or DeviationProfile()

    def prof(t, r, rp):
        out = 1.0 - window.phi(t, r)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(out), np.shape(rp))).copy()

    return TimeConvKernel(
        "H0_improved_m1",
        lambda t, r, rp: _gauss(t, np.asarray(r, float) - np.asarray(rp, float))
        * prof(t, r, rp),
        order=KernelOrder(Fraction(3), Fraction(0), 1),
        gaussian_profile=prof,
        time_breaks=(0.05, 0.15),
        horizon=horizon,
    )


def improved_error_kernel(window: DeviationProfile | None = None,
                          horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    """Closed-form heat residual of the improved parametrix: the Gaussian
    times an affine factor in the displacement, analytic everywhere and
    flat to infinite order at t = 0."""
    window = window or DeviationProfile()
    th, R2 = window.theta, window.width ** 2

    def prof(t, r, rp):
        t = np.asarray(t, float)
        r = np.asarray(r, float)
        d = r - np.asarray(rp, float)
        phi = window.phi(t, r)
        bracket = (-th / t ** 2 + 4.0 * r ** 2 / R2 ** 2 - 2.0 / R2
                   + 2.0 * r * d / (t * R2))
        return phi * bracket

    def fn(t, r, rp):
        d = np.asarray(r, float) - np.asarray(rp, float)
        return _gauss(t, d) * prof(t, r, rp)

    radius = window.effective_radius()
    return TimeConvKernel(
        "P_improved_m1", fn, order=None,
        support_radius=radius, left_band=(0.0, radius),
        gaussian_profile=prof, time_breaks=(0.05, 0.15), horizon=horizon,
    )


def constant_surrogate(volume: float = 1.0,
                       horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    """K identically 1 on a compact interval model of spatial volume V."""

    def fn(t, r, rp):
        return np.ones(np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp)))

    return TimeConvKernel("const_surrogate", fn, spatial_interval=(0.0, volume),
                          horizon=horizon)


def zero_kernel(horizon: float = DEFAULT_HORIZON) -> TimeConvKernel:
    return TimeConvKernel(
        "zero", lambda t, r, rp: np.zeros(
            np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(rp))),
        horizon=horizon)


# -- composition --------------------------------------------------------------------


def _interval_for(a: TimeConvKernel, b: TimeConvKernel, q: QuadratureSpec):
    if b.spatial_interval is not None:
        return b.spatial_interval
    if a.spatial_interval is not None:
        return a.spatial_interval
    radius = q.radius
    if b.support_radius is not None:
        radius = min(radius, b.support_radius * 1.05)
    return (-radius, radius)


def _compose_value(a: TimeConvKernel, b: TimeConvKernel, q: QuadratureSpec,
                   t: float, r: float, rp: float) -> float:
    """Double integral int_0^t int A(t-u, r, s) B(u, s, rp) ds du.

    Each time half uses Gauss-Hermite in space when the potentially narrow
    factor carries a Gaussian profile, else the panelled grid.
    """
    if t <= 0:
        return 0.0
    xi, wxi = _hermgauss(q.hermite_nodes)
    interval = _interval_for(a, b, q)
    grid, gw = _spatial_grid(q, interval)
    breaks_u = sorted({*b.time_breaks, *[t - c for c in a.time_breaks]})
    breaks_s = sorted({*a.time_breaks, *[t - c for c in b.time_breaks]})
    total = 0.0

    # u in (0, t/2]: B may be narrow
    u1, w1 = _time_nodes(q, 0.0, t / 2.0, breaks_u)
    if b.gaussian_profile is not None:
        sq = np.sqrt(u1)
        sigma = rp + 2.0 * sq[:, None] * xi[None, :]
        vals = a.fn(t - u1[:, None], r, sigma) * b.gaussian_profile(u1[:, None], sigma, rp)
        total += float(np.sum(w1 * (vals @ wxi) / math.sqrt(math.pi)))
    else:
        vals = a.fn(t - u1[:, None], r, grid[None, :]) * b.fn(u1[:, None], grid[None, :], rp)
        total += float(np.sum(w1[:, None] * gw[None, :] * vals))

    # u in (t/2, t): A may be narrow; substitute s = t - u
    s2, w2 = _time_nodes(q, 0.0, t / 2.0, breaks_s)
    if a.gaussian_profile is not None:
        sq = np.sqrt(s2)
        sigma = r - 2.0 * sq[:, None] * xi[None, :]
        vals = a.gaussian_profile(s2[:, None], r, sigma) * b.fn(t - s2[:, None], sigma, rp)
        total += float(np.sum(w2 * (vals @ wxi) / math.sqrt(math.pi)))
    else:
        vals = a.fn(s2[:, None], r, grid[None, :]) * b.fn(t - s2[:, None], grid[None, :], rp)
        total += float(np.sum(w2[:, None] * gw[None, :] * vals))
    return total


def _vectorized_over_points(value_fn) -> Callable:
    def fn(t, r, rp):
        tt, rr, pp = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float),
                                         np.asarray(rp, float))
        if tt.ndim == 0:
            return value_fn(float(tt), float(rr), float(pp))
        out = np.empty(tt.shape)
        for idx in np.ndindex(tt.shape):
            out[idx] = value_fn(float(tt[idx]), float(rr[idx]), float(pp[idx]))
        return out
    return fn


def compose(a: TimeConvKernel, b: TimeConvKernel,
            q: QuadratureSpec | None = None) -> TimeConvKernel:
    """Time-convolution composition of two kernels.

    The declared order follows the composition ledger when the second
    factor has infinite temporal order; otherwise the composite carries no
    declared order.  With a tolerance set on the quadrature spec, the
    evaluator is cross-checked against a refined rule and flags failures.
    """
    q = q or QuadratureSpec()
    order = None
    if a.order is not None and b.order is not None and b.order.ell is None:
        order = composition_ledger(a.order, b.order).result

    base = _vectorized_over_points(lambda t, r, rp: _compose_value(a, b, q, t, r, rp))
    if q.tolerance is not None:
        fine = replace(q, time_nodes=q.time_nodes * 2, hermite_nodes=q.hermite_nodes * 2,
                       nodes_per_panel=q.nodes_per_panel + 4, tolerance=None)
        fine_fn = _vectorized_over_points(
            lambda t, r, rp: _compose_value(a, b, fine, t, r, rp))

        def checked(t, r, rp, _base=base, _fine=fine_fn):
            v = _base(t, r, rp)
            v2 = _fine(t, r, rp)
            err = np.max(np.abs(np.asarray(v) - np.asarray(v2)))
            if err > q.tolerance:
                raise VolterraError(
                    f"composition quadrature error estimate {err:.3e} exceeds "
                    f"tolerance {q.tolerance:.3e}")
            return v

        base = checked

    return TimeConvKernel(
        f"({a.name}*{b.name})", base, order=order,
        support_radius=a.support_radius,
        spatial_interval=b.spatial_interval or a.spatial_interval,
        horizon=min(a.horizon, b.horizon),
    )


# -- simplex iteration ----------------------------------------------------------------


def volterra_iterate(p: TimeConvKernel, ell: int,
                     q: QuadratureSpec | None = None) -> TimeConvKernel:
    """The ell-th Volterra iterate via stick-breaking simplex quadrature.

    Times are ordered t >= t_1 >= ... >= t_{ell-1} >= 0 and parametrized by
    t_i = t v_1 ... v_i; the spatial chain is contracted over the grid link
    by link.  Independent of (and testable against) iterated composition.
    """
    q = q or QuadratureSpec()
    if ell < 1:
        raise VolterraError("iterate index must be >= 1")
    if ell == 1:
        return p

    interval = p.spatial_interval or (-(p.support_radius or q.radius) * 1.05,
                                      (p.support_radius or q.radius) * 1.05)
    grid, gw = _spatial_grid(q, interval)
    x, w = _leggauss(q.simplex_time_nodes)
    v_nodes = 0.5 * (x + 1.0)
    v_weights = 0.5 * w

    def value(t: float, r: float, rp: float) -> float:
        if t <= 0:
            return 0.0
        total = 0.0
        n = ell - 1
        for idx in np.ndindex(*([len(v_nodes)] * n)):
            vs = v_nodes[list(idx)]
            wgt = float(np.prod(v_weights[list(idx)]))
            times = t * np.cumprod(vs)
            jac = t ** n * float(np.prod(vs[:-1] ** np.arange(n - 1, 0, -1))) if n > 1 else t
            gaps = np.diff(np.concatenate([[t], times, [0.0]])) * -1.0
            if np.any(gaps <= 0):
                continue
            vec = p.fn(gaps[-1], grid, rp) * gw
            for k in range(n - 1, 0, -1):
                mat = p.fn(gaps[k], grid[:, None], grid[None, :])
                vec = (mat * gw[:, None]) @ vec
            first = p.fn(gaps[0], r, grid)
            total += wgt * jac * float(first @ vec)
        return total

    return TimeConvKernel(f"{p.name}^{ell}", _vectorized_over_points(value),
                          support_radius=p.support_radius,
                          spatial_interval=p.spatial_interval, horizon=p.horizon)


# -- gridded iterates for the factorial table and the Neumann series ---------------------


def _cheb_nodes(a: float, b: float, n: int):
    k = np.arange(n)
    x = np.cos(math.pi * k / (n - 1))  # Chebyshev-Lobatto, includes endpoints
    return 0.5 * (a + b) + 0.5 * (b - a) * x[::-1]


def _bary_weights(n: int):
    w = np.ones(n)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _bary_interp(nodes, weights, values, x):
    """Barycentric interpolation of values (n, m) at scalar x; returns (m,)."""
    d = x - nodes
    hit = np.argmin(np.abs(d))
    if abs(d[hit]) < 1e-14:
        return values[hit]
    c = weights / d
    return (c @ values) / np.sum(c)


@dataclass
class _GridKernel:
    """K(u, rho) for a fixed right point, on panelled Chebyshev time nodes
    and uniform rho segments."""

    panels: list
    segments: list  # list of uniform node arrays
    values: list  # per panel: (n_cheb, n_rho_total)

    @property
    def rho(self) -> np.ndarray:
        return np.concatenate(self.segments)

    def at_time(self, u: float) -> np.ndarray:
        for (a, b, nodes, bw), vals in zip(self.panels, self.values):
            if a - 1e-14 <= u <= b + 1e-14:
                return _bary_interp(nodes, bw, vals, u)
        raise VolterraError(f"time {u} outside the grid")

    def eval(self, u: float, pts: np.ndarray) -> np.ndarray:
        row = self.at_time(u)
        out = np.zeros_like(np.asarray(pts, float))
        offset = 0
        for seg in self.segments:
            n = len(seg)
            inside = (pts >= seg[0]) & (pts <= seg[-1])
            if np.any(inside):
                out[inside] = np.interp(pts[inside], seg, row[offset:offset + n])
            offset += n
        return out

    def sup(self, u: float) -> float:
        return float(np.max(np.abs(self.at_time(u))))


def _time_panels(t: float, kernel_breaks: Sequence[float], q: QuadratureSpec):
    breaks = sorted({0.0, t, *[min(b, t) for b in kernel_breaks if b > 0]})
    panels = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a < 1e-12:
            continue
        nodes = _cheb_nodes(a, b, q.cheb_nodes)
        panels.append((a, b, nodes, _bary_weights(q.cheb_nodes)))
    return panels, [b for b in breaks if 0.0 < b < t]


def _support_segments(p: TimeConvKernel, q: QuadratureSpec) -> list[np.ndarray]:
    """Uniform odd-count grids covering the kernel's left-variable support,
    one per connected component."""
    lo, hi = p.left_band if p.left_band is not None else (0.0, p.support_radius or q.radius)
    lo = max(lo - 0.1, 0.0)
    hi += 0.1
    n = max(9, 2 * int((hi - lo) / q.grid_spacing) // 2 + 1)  # odd, for Simpson
    right = np.linspace(lo, hi, n)
    if lo == 0.0:
        m = max(9, 2 * int(2 * hi / q.grid_spacing) // 2 + 1)
        return [np.linspace(-hi, hi, m)]
    return [-right[::-1], right]


def _simpson_weights(x: np.ndarray) -> np.ndarray:
    n = len(x)
    h = x[1] - x[0]
    w = np.zeros(n)
    w[0] = w[-1] = 1.0
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _inner_time_quadrature(ti: float, breaks, q: QuadratureSpec):
    edges = sorted({0.0, ti, *[b for b in breaks if 0.0 < b < ti]})
    x, w = _leggauss(q.time_nodes)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def iterate_grids(p: TimeConvKernel, ell_max: int, t: float, rp: float,
                  q: QuadratureSpec | None = None) -> list[_GridKernel]:
    """Grids of P, P^2, ..., P^ell_max at the fixed right point rp.

    Level ell + 1 contracts the analytic error kernel against the level-ell
    grid with Gauss-Hermite nodes riding the Gaussian factor of P.
    """
    q = q or QuadratureSpec()
    if p.gaussian_profile is None:
        raise VolterraError("grid iteration needs a Gaussian-profiled kernel")
    panels, breaks = _time_panels(t, p.time_breaks, q)
    segments = _support_segments(p, q)
    rho = np.concatenate(segments)
    xi, wxi = _hermgauss(q.hermite_nodes)

    def p_on_grid():
        vals = []
        for a, b, nodes, _ in panels:
            block = np.empty((len(nodes), len(rho)))
            for i, u in enumerate(nodes):
                block[i] = p.fn(u, rho, rp) if u > 0 else 0.0
            vals.append(block)
        return _GridKernel(panels, segments, vals)

    grids = [p_on_grid()]
    for _ in range(1, ell_max):
        prev = grids[-1]
        vals = []
        for a, b, nodes, _ in panels:
            block = np.zeros((len(nodes), len(rho)))
            for i, ti in enumerate(nodes):
                if ti <= 0:
                    continue
                splits = [*breaks, *[ti - c for c in breaks]]
                u_nodes, u_w = _inner_time_quadrature(ti, splits, q)
                acc = np.zeros(len(rho))
                for u, wu in zip(u_nodes, u_w):
                    s = ti - u
                    if s <= 0:
                        continue
                    sq = 2.0 * math.sqrt(s)
                    sigma = rho[:, None] - sq * xi[None, :]
                    prof = p.gaussian_profile(s, rho[:, None], sigma)
                    kvals = prev.eval(u, sigma.ravel()).reshape(sigma.shape)
                    acc += wu * ((prof * kvals) @ wxi) / math.sqrt(math.pi)
                block[i] = acc
            vals.append(block)
        grids.append(_GridKernel(panels, segments, vals))
    return grids


def _outer_term(h0: TimeConvKernel, grid: _GridKernel, t: float, r: float,
                q: QuadratureSpec, breaks) -> float:
    """(H0 o K)(t, r, rp) for a gridded iterate K."""
    xi, wxi = _hermgauss(q.hermite_nodes)
    seg_weights = [_simpson_weights(seg) for seg in grid.segments]
    total = 0.0
    # u in (0, t/2]: K side, Simpson per support segment
    u_nodes, u_w = _inner_time_quadrature(t / 2.0, [*breaks, *[t - c for c in breaks]], q)
    for u, wu in zip(u_nodes, u_w):
        if u <= 0:
            continue
        row = grid.at_time(u)
        offset = 0
        acc = 0.0
        for seg, sw in zip(grid.segments, seg_weights):
            n = len(seg)
            hvals = h0.fn(t - u, r, seg)
            acc += float(np.sum(sw * row[offset:offset + n] * hvals))
            offset += n
        total += wu * acc
    # s = t - u in (0, t/2): H0 narrow, Gauss-Hermite against its Gaussian
    s_nodes, s_w = _time_nodes(q, 0.0, t / 2.0, [t - c for c in breaks])
    for s, ws in zip(s_nodes, s_w):
        if s <= 0 or t - s <= 0:
            continue
        sigma = r - 2.0 * math.sqrt(s) * xi
        prof = h0.gaussian_profile(s, r, sigma)
        kvals = grid.eval(t - s, sigma)
        total += ws * float((prof * kvals) @ wxi) / math.sqrt(math.pi)
    return total


@dataclass(frozen=True)
class FactorialRow:
    ell: int
    sup: float
    ratio: float | None
    fitted_c: float | None


@dataclass(frozen=True)
class FactorialReport:
    t: float
    rows: tuple[FactorialRow, ...]
    factorial_consistent: bool

    def csv(self) -> str:
        lines = ["ell,sup,ratio,fitted_c"]
        for row in self.rows:
            ratio = "" if row.ratio is None else f"{row.ratio:.8e}"
            c = "" if row.fitted_c is None else f"{row.fitted_c:.8e}"
            lines.append(f"{row.ell},{row.sup:.8e},{ratio},{c}")
        return "\n".join(lines) + "\n"


def factorial_bound_check(p: TimeConvKernel, ell_max: int,
                          samples: Sequence[float], t: float = 0.5,
                          q: QuadratureSpec | None = None) -> FactorialReport:
    """Sampled sup norms of the iterates against the factorial bound.

    The fitted constant at each step is ratio * ell / t; domination by the
    factorial means the fitted constants stop increasing beyond the second
    step.  Report only; nothing is raised.
    """
    if ell_max > 5:
        raise VolterraError("factorial check is desk scale: ell_max <= 5")
    q = q or QuadratureSpec()
    sups = np.zeros(ell_max)
    for rp in samples:
        grids = iterate_grids(p, ell_max, t, float(rp), q)
        for i, g in enumerate(grids):
            sups[i] = max(sups[i], g.sup(t))
    rows = []
    cs = []
    for ell in range(1, ell_max + 1):
        ratio = None
        fitted = None
        if ell < ell_max and sups[ell - 1] > 0:
            ratio = sups[ell] / sups[ell - 1]
            fitted = ratio * ell / t
            cs.append(fitted)
        rows.append(FactorialRow(ell, float(sups[ell - 1]), ratio, fitted))
    consistent = all(cs[i + 1] <= cs[i] * 1.05 for i in range(1, len(cs) - 1))
    return FactorialReport(t, tuple(rows), consistent)


@dataclass(frozen=True)
class NeumannReport:
    t: float
    samples: tuple[tuple[float, float], ...]
    terms: tuple[float, ...]          # sampled sup of each correction term
    partial_errors: tuple[float, ...]  # sup |partial sum - exact| per order
    values: tuple[tuple[float, ...], ...]  # per sample: partial sums by order

    def csv(self) -> str:
        lines = ["order,term_sup,partial_error_sup"]
        for i, (tm, er) in enumerate(zip(self.terms, self.partial_errors)):
            lines.append(f"{i},{tm:.8e},{er:.8e}")
        return "\n".join(lines) + "\n"


def _neumann_values(h0: TimeConvKernel, p: TimeConvKernel, L: int, q: QuadratureSpec,
                    t: float, r: float, rp: float) -> list[float]:
    """Terms [H0, H0 o P, H0 o P^2, ...] at one evaluation point."""
    terms = [float(h0.fn(t, r, rp))]
    if L >= 1:
        _, breaks = _time_panels(t, p.time_breaks, q)
        grids = iterate_grids(p, L, t, rp, q)
        for g in grids:
            terms.append(_outer_term(h0, g, t, r, q, breaks))
    return terms


def neumann_sum(h0: TimeConvKernel, p: TimeConvKernel, L: int,
                q: QuadratureSpec | None = None) -> TimeConvKernel:
    """Partial Neumann series H0 + sum_{ell<=L} (-1)^ell H0 o P^ell.

    Sustained growth of the correction terms (ratio >= 1 beyond the second
    term) aborts with diagnostics.
    """
    if L > 4:
        raise VolterraError("desk scale: L <= 4")
    q = q or QuadratureSpec()

    def value(t: float, r: float, rp: float) -> float:
        terms = _neumann_values(h0, p, L, q, t, r, rp)
        mags = [abs(v) for v in terms[1:]]
        floor = 1e-13 * max(abs(terms[0]), 1e-30)
        for i in range(2, len(mags)):
            if mags[i] >= mags[i - 1] >= mags[i - 2] and mags[i] > floor:
                raise VolterraError(
                    f"Neumann terms not decaying at order {i + 1}: {mags}")
        return float(sum((-1.0) ** i * v for i, v in enumerate(terms)))

    return TimeConvKernel(f"neumann[{h0.name},{p.name},L={L}]",
                          _vectorized_over_points(value), order=h0.order,
                          horizon=min(h0.horizon, p.horizon))


def neumann_report(h0: TimeConvKernel, p: TimeConvKernel, L: int,
                   samples: Sequence[tuple[float, float]], t: float = 0.5,
                   q: QuadratureSpec | None = None,
                   reference: TimeConvKernel | None = None) -> NeumannReport:
    """Partial sums against the exact kernel on a sample set."""
    q = q or QuadratureSpec()
    reference = reference or exact_desk_kernel()
    all_terms = []
    for r, rp in samples:
        all_terms.append(_neumann_values(h0, p, L, q, t, float(r), float(rp)))
    term_sups = [max(abs(tm[i]) for tm in all_terms) for i in range(L + 1)]
    partials = []
    values = []
    for (r, rp), tm in zip(samples, all_terms):
        sums = np.cumsum([(-1.0) ** i * v for i, v in enumerate(tm)])
        values.append(tuple(float(s) for s in sums))
    exact = [float(reference.fn(t, r, rp)) for r, rp in samples]
    for order in range(L + 1):
        partials.append(max(abs(values[i][order] - exact[i]) for i in range(len(samples))))
    return NeumannReport(t, tuple((float(r), float(rp)) for r, rp in samples),
                         tuple(term_sups), tuple(partials),
                         tuple(values))
