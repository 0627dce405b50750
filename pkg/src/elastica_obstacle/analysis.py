"""Closed-form candidate curves, certified bounds, stationarity diagnostics.

The comparison cap has constant bending density c0^2: its top is

    U0(x) = (2/c0) (1 + Ginv(c0/2 - c0 x)^2)^(-1/4),

flanked by vertical stubs of height S, and its length is
2 S + (1/c0) integral_R (1+t^2)^(-3/4) dt.  The cone shooting profile
solves -u'' = sqrt(2|C0|) sqrt(u'(0) - u') (1 + u'^2)^(5/4) on [0, 1/2]
by tabulating and inverting

    F0(z) = integral_z^{u'(0)} dw / (sqrt(u'(0) - w) (1 + w^2)^(5/4)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .envelope import CapShape
from .geometry import PolyCurve, SampledGraph
from .obstacles import Obstacle
from .specfun import DomainError, cone_threshold_ratio

__all__ = [
    "ConeCandidate",
    "ELReport",
    "LengthBound",
    "comparison_curve",
    "comparison_polyline",
    "comparison_length",
    "cone_shooting",
    "cone_height_bound",
    "length_bound_one_sided",
    "length_bound_touching",
    "length_bound_main",
    "el_residuals",
]


# ----------------------------------------------------------------------
# Comparison cap with constant bending density
# ----------------------------------------------------------------------

def _u0_from_slopes(m: np.ndarray, c0: float) -> np.ndarray:
    return (2.0 / c0) * (1.0 + m * m) ** -0.25


def comparison_curve(S: float, n: int) -> CapShape:
    """Cap with top S + U0 on the uniform grid and stubs of height S.

    The top's analytic bending density is c0^2 at every interior point;
    the sampled top reproduces it to O(n^-2) away from the endpoints,
    where the profile leaves any uniform-x sampling under-resolved.
    """
    if S < 0.0:
        raise ValueError("stub height S must be >= 0")
    if n < 64:
        raise ValueError("resolution n must be >= 64")
    prof = specfun.default_profile()
    c0 = prof.c0
    x = np.linspace(0.0, 1.0, n + 1)
    vals = np.full(n + 1, float(S))
    m = prof.g_inv(c0 / 2.0 - c0 * x[1:-1])
    vals[1:-1] += _u0_from_slopes(m, c0)
    top = SampledGraph(vals)
    d2 = np.diff(vals, 2)
    return CapShape(h_left=float(S), h_right=float(S), top=top,
                    concave_certified=bool(d2.max() <= 1e-9))


def comparison_length(S: float) -> float:
    """Exact cap length 2 S + (1/c0) integral_R (1+t^2)^(-3/4) dt."""
    return 2.0 * S + specfun.arclength_profile().total / specfun.compute_c0()


def comparison_polyline(S: float, n: int) -> PolyCurve:
    """The comparison cap sampled at exactly uniform arclength.

    Closed-form sampling: with Q(m) = integral_m^inf (1+t^2)^(-3/4) dt,
    the arclength from the left top end to slope level m is Q(m)/c0, so
    uniform arclength targets invert Q.  This resolves the steep ends
    (unlike uniform-x sampling) and is the natural solver start.
    """
    if S < 0.0:
        raise ValueError("stub height S must be >= 0")
    if n < 64:
        raise ValueError("resolution n must be >= 64")
    gprof = specfun.default_profile()
    aprof = specfun.arclength_profile()
    c0 = gprof.c0
    l_top = aprof.total / c0
    total = 2.0 * S + l_top
    s = np.linspace(0.0, total, n + 1)

    pts = np.empty((n + 1, 2))
    s_floor = 1e-9 * total
    on_left = s < S - s_floor
    on_right = s > S + l_top + s_floor
    at_left_junction = np.abs(s - S) <= s_floor
    at_right_junction = np.abs(s - (S + l_top)) <= s_floor
    on_top = ~(on_left | on_right | at_left_junction | at_right_junction)
    pts[on_left, 0] = 0.0
    pts[on_left, 1] = s[on_left]
    pts[on_right, 0] = 1.0
    pts[on_right, 1] = total - s[on_right]
    pts[at_left_junction] = (0.0, S)
    pts[at_right_junction] = (1.0, S)
    st = s[on_top] - S
    # The arclength from the left top end to slope level m is
    # (1/c0) integral_m^inf (1+t^2)^(-3/4) dt, so the odd primitive of
    # (1+t^2)^(-3/4) equals its half-line value minus c0 * st.
    arc_vals = aprof.half - c0 * st
    m = aprof.inverse(arc_vals)
    pts[on_top, 0] = (c0 / 2.0 - gprof.g_of(m)) / c0
    pts[on_top, 1] = S + _u0_from_slopes(m, c0)
    pts[0] = (0.0, 0.0)
    pts[-1] = (1.0, 0.0)
    return PolyCurve(pts)


# ----------------------------------------------------------------------
# Cone shooting profile on the left half interval
# ----------------------------------------------------------------------

@dataclass
class ConeCandidate:
    """Shooting profile u on [0, 1/2] with concave slopes m0 down to m_half.

    C0 <= 0 is the stationarity constant of the left branch; C1 = -C0 and
    m1 = -m0 are the mirrored right-branch values used when the candidate
    is reflected about x = 1/2.
    """

    m0: float
    C0: float
    x: np.ndarray
    slope_grid: np.ndarray
    height_grid: np.ndarray
    m_half: float
    peak_x: float | None
    peak_height: float | None
    ode_residual: float

    @property
    def m1(self) -> float:
        return -self.m0

    @property
    def C1(self) -> float:
        return -self.C0

    def symmetric_graph(self) -> SampledGraph:
        """Even reflection about x = 1/2 onto the full interval."""
        vals = np.concatenate([self.height_grid, self.height_grid[-2::-1]])
        return SampledGraph(vals)


def _f0_table(m0: float):
    """Cumulative F0 in the variable tau = sqrt(m0 - z).

    F0(z) = integral_z^{m0} dw / (sqrt(m0 - w) (1 + w^2)^(5/4)) becomes
    integral_0^{sqrt(m0-z)} 2 (1 + (m0 - tau^2)^2)^(-5/4) d(tau): smooth,
    with a finite limit as tau -> inf (the integrand decays like tau^-5).
    Returns (tau grid, cumulative values); the grid is uniform near the
    singular end and geometric in the far tail.
    """
    near = np.linspace(0.0, math.sqrt(m0) + 3.0, 2049)
    far = (math.sqrt(m0) + 3.0) * np.logspace(0.0, math.log10(2000.0), 1024)[1:]
    tau = np.concatenate([near, far])
    xi, wi = np.polynomial.legendre.leggauss(12)
    mid = 0.5 * (tau[:-1] + tau[1:])[:, None]
    half = 0.5 * (tau[1:] - tau[:-1])[:, None]
    nodes = mid + half * xi[None, :]
    z = m0 - nodes * nodes
    vals = 2.0 * (1.0 + z * z) ** -1.25
    panel_ints = (vals * wi[None, :]).sum(axis=1) * half[:, 0]
    cum = np.concatenate([[0.0], np.cumsum(panel_ints)])
    return tau, cum


def cone_shooting(m0: float, C0: float, n: int) -> ConeCandidate:
    """Tabulate u'(x) = F0^{-1}(sqrt(2|C0|) x) and integrate to heights.

    C0 = 0 degenerates to the constant-slope profile u' = m0.  Since F0
    has a finite limit as the slope runs to -inf, large |C0| makes the
    profile blow down before x = 1/2; the tabulation then stops at 99.9%
    of the blow-up abscissa and the grid covers [0, x_end] instead of
    [0, 1/2].  The returned ode_residual is the max-norm defect of
    -u'' = sqrt(2|C0|) sqrt(m0 - u') (1 + u'^2)^(5/4) under central
    differencing, restricted to slope levels the grid resolves
    (|u'| <= m0 + 2).
    """
    if m0 <= 0.0:
        raise ValueError("m0 = u'(0) must be > 0")
    if C0 > 0.0:
        raise ValueError("C0 must be <= 0")
    half_n = max(n // 2, 8)
    root = math.sqrt(2.0 * abs(C0))

    if C0 == 0.0:
        x = np.linspace(0.0, 0.5, half_n + 1)
        slopes = np.full(half_n + 1, m0)
        return ConeCandidate(m0=m0, C0=0.0, x=x, slope_grid=slopes,
                             height_grid=m0 * x, m_half=m0, peak_x=None,
                             peak_height=None, ode_residual=0.0)

    tau, cum = _f0_table(m0)
    f_limit = float(cum[-1])
    x_blow = f_limit / root
    x_end = min(0.5, 0.999 * x_blow)
    x = np.linspace(0.0, x_end, half_n + 1)
    targets = root * x

    xi, wi = np.polynomial.legendre.leggauss(12)

    def f0_exact(t):
        """Cumulative table value plus a partial-panel Gauss correction."""
        idx = np.clip(np.searchsorted(tau, t, side="right") - 1, 0, tau.size - 2)
        t0 = tau[idx]
        mid = 0.5 * (t0 + t)[:, None]
        half = 0.5 * (t - t0)[:, None]
        nodes = mid + half * xi[None, :]
        z = m0 - nodes * nodes
        partial = (2.0 * (1.0 + z * z) ** -1.25 * wi[None, :]).sum(axis=1)
        return cum[idx] + partial * half[:, 0]

    tau_of_target = np.interp(targets, cum, tau)
    for _ in range(6):
        z = m0 - tau_of_target ** 2
        f = f0_exact(tau_of_target) - targets
        df = 2.0 * (1.0 + z * z) ** -1.25
        tau_of_target = np.clip(tau_of_target - f / df, 0.0, tau[-1])
    slopes = m0 - tau_of_target ** 2

    h = x[1] - x[0]
    heights = np.concatenate([[0.0],
                              np.cumsum(0.5 * (slopes[1:] + slopes[:-1]) * h)])

    peak_x = None
    peak_height = None
    if slopes[-1] < 0.0:
        k = max(int(np.searchsorted(-slopes, 0.0)), 1)
        s0, s1 = slopes[k - 1], slopes[k]
        frac = s0 / (s0 - s1)
        peak_x = float(x[k - 1] + frac * h)
        peak_height = float(heights[k - 1]
                            + h * frac * (s0 + 0.5 * frac * (s1 - s0)))
    elif abs(slopes[-1]) <= 1e-9 * m0:
        peak_x = float(x[-1])
        peak_height = float(heights[-1])

    upp = np.gradient(slopes, h, edge_order=2)
    rhs = -root * np.sqrt(np.maximum(m0 - slopes, 0.0)) \
        * (1.0 + slopes * slopes) ** 1.25
    resolved = np.abs(slopes) <= m0 + 2.0
    resolved[0] = resolved[-1] = False
    residual = float(np.abs(upp - rhs)[resolved].max()) if resolved.any() else 0.0

    return ConeCandidate(m0=m0, C0=float(C0), x=x, slope_grid=slopes,
                         height_grid=heights, m_half=float(slopes[-1]),
                         peak_x=peak_x, peak_height=peak_height,
                         ode_residual=residual)


def shooting_rate_for_peak_at(m0: float, x_star: float = 0.5) -> float:
    """sqrt(2|C0|) such that the shooting slope vanishes at x_star.

    With sqrt(2|C0|)/2 = F0(0) the slope reaches zero exactly at
    x = 1/2, the equality case of the height bound.
    """
    spec = specfun.QuadratureSpec(rel_tol=1e-12, abs_tol=1e-14,
                                  singular_right=True)
    f0_at_zero = specfun.integrate(
        lambda w: 1.0 / (np.sqrt(m0 - w) * (1.0 + w * w) ** 1.25),
        0.0, m0, spec)
    return f0_at_zero / x_star


# ----------------------------------------------------------------------
# Certified bounds
# ----------------------------------------------------------------------

def cone_height_bound(m0: float) -> float:
    """Peak-height bound (1/3) m0 2F1(1,3/2;7/4;-m0^2)/2F1(1/2,1;3/4;-m0^2)."""
    return cone_threshold_ratio(m0)


def length_bound_one_sided(m: float) -> float:
    """|m| + sqrt(1 + m^2): length bound for caps with one trivial stub."""
    m = abs(m)
    return m + math.hypot(1.0, m)


def length_bound_touching(o: Obstacle) -> float:
    """2 (sup psi + slope bound) + 1 for graphs touching the obstacle."""
    return 2.0 * (o.sup_value + o.slope_bound) + 1.0


@dataclass(frozen=True)
class LengthBound:
    value: float
    one_sided_term: float
    touching_term: float
    near_degenerate: bool  # Ginv argument within 1e-6 of c0/2


def length_bound_main(alpha: float, o: Obstacle) -> LengthBound:
    """max of the touching bound and the slope bound through Ginv.

    Requires alpha < c0^2; raises DomainError otherwise.  When the Ginv
    argument comes within 1e-6 of c0/2 the (finite) result carries a
    near-degenerate warning flag.
    """
    prof = specfun.default_profile()
    c0 = prof.c0
    arg = math.sqrt((alpha + c0 * c0) / 2.0) - c0 / 2.0
    if arg >= prof.half:
        raise DomainError(
            f"energy level {alpha} >= c0^2; the slope bound degenerates")
    near = prof.half - arg < 1e-6
    m = prof.g_inv(arg)
    one_sided = length_bound_one_sided(m)
    touching = length_bound_touching(o)
    return LengthBound(value=max(one_sided, touching),
                       one_sided_term=one_sided, touching_term=touching,
                       near_degenerate=near)


# ----------------------------------------------------------------------
# Stationarity (Euler-Lagrange) diagnostics
# ----------------------------------------------------------------------

@dataclass
class ELReport:
    """Residual diagnostics of the curvature potential v = u''/(1+u'^2)^(5/4).

    Off the contact set, v'/(1+u'^2)^(5/4) is constant interval-by-interval
    for an unpenalized minimizer, and the natural boundary conditions are
    v(0) = v(1) = 0.  With length weight eps > 0 the interior equation is
    -2 v''/(1+u'^2)^(5/4) + 5 u'' u' v'/(1+u'^2)^(9/4) = -eps u''/(1+u'^2)^(3/2).
    """

    v_grid: np.ndarray
    lagrange_grid: np.ndarray
    v_boundary: tuple
    piecewise_const_dev: float
    penalized_residual: float
    contact_indices: np.ndarray
    contact_tol: float

    def to_json(self) -> dict:
        return {
            "v_boundary": list(self.v_boundary),
            "piecewise_const_dev": self.piecewise_const_dev,
            "penalized_residual": self.penalized_residual,
            "contact_indices": self.contact_indices.tolist(),
            "contact_tol": self.contact_tol,
            "v_grid": self.v_grid.tolist(),
            "lagrange_grid": self.lagrange_grid.tolist(),
        }


def _off_contact_intervals(contact: np.ndarray, total: int):
    """Maximal index runs of non-contact nodes."""
    intervals = []
    start = None
    for i in range(total):
        if not contact[i]:
            if start is None:
                start = i
        elif start is not None:
            intervals.append((start, i - 1))
            start = None
    if start is not None:
        intervals.append((start, total - 1))
    return intervals


#: Nodes dropped at each end of every off-contact interval before the
#: constancy statistic (one-sided stencils and contact kinks pollute them).
EDGE_TRIM = 4
#: Minimum interior nodes for an interval to enter the statistic.
MIN_INTERVAL_NODES = 8
#: Nodes with |u'| beyond this are excluded from the statistics: a
#: uniform-x grid does not resolve near-vertical stretches, so their
#: finite differences carry no information.
SLOPE_CUT = 10.0


def el_residuals(g: SampledGraph, o: Obstacle, epsilon: float = 0.0,
                 contact_tol: float | None = None) -> ELReport:
    """Contact set and stationarity residuals of a feasible graph.

    The constancy deviation is the per-interval standard deviation of
    v'/(1+u'^2)^(5/4) relative to its mean magnitude, floored by the
    interval's natural v-slope scale max|v|/width so the statistic stays
    meaningful when the constant itself is near zero; the worst interval
    is reported.
    """
    if contact_tol is None:
        contact_tol = 1e-6 * (1.0 + max(o.sup_value, 0.0))
    h = g.h
    u = g.values
    up = g.derivative()
    upp = g.second_derivative()
    one_p = 1.0 + up * up
    v = upp * one_p ** -1.25
    vp = _central(v, h)
    lagrange = vp * one_p ** -1.25
    vpp = _central(vp, h)

    psi = np.asarray(o(g.x))
    contact = np.abs(u - psi) <= contact_tol
    contact[0] = contact[-1] = False
    intervals = _off_contact_intervals(contact, u.size)
    resolved = np.abs(up) <= SLOPE_CUT

    devs = []
    pen = []
    for (a, b) in intervals:
        lo = max(a + EDGE_TRIM, 1)
        hi = min(b - EDGE_TRIM, u.size - 2)
        keep = np.arange(lo, hi + 1)
        keep = keep[resolved[keep]]
        if keep.size < MIN_INTERVAL_NODES:
            continue
        seg = lagrange[keep]
        width = max(g.x[keep[-1]] - g.x[keep[0]], h)
        floor = np.abs(v[keep]).max() / width
        scale = max(np.abs(seg).mean(), floor)
        devs.append(seg.std() / scale if scale > 0.0 else 0.0)
        resid = (-2.0 * vpp[keep] * one_p[keep] ** -1.25
                 + 5.0 * upp[keep] * up[keep] * vp[keep] * one_p[keep] ** -2.25
                 + epsilon * upp[keep] * one_p[keep] ** -1.5)
        pen.append(np.abs(resid).max())

    return ELReport(
        v_grid=v,
        lagrange_grid=lagrange,
        v_boundary=(float(v[0]), float(v[-1])),
        piecewise_const_dev=float(max(devs)) if devs else 0.0,
        penalized_residual=float(max(pen)) if pen else 0.0,
        contact_indices=np.nonzero(contact)[0],
        contact_tol=float(contact_tol),
    )


def _central(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def el_report_to_json(rep: ELReport, path, manifest=None):
    obj = rep.to_json()
    if manifest:
        obj["provenance"] = manifest
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
