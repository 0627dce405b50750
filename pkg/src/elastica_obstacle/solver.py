"""Penalized-energy minimization over cap-shaped curves with continuation.

The objective on a polyline with pinned endpoints is the constant-speed
bending form (1/L^3) sum |second difference|^2 / h^3 plus eps * L, with
quadratic penalties keeping the curve above the obstacle (at nodes and at
obstacle kinks), near constant speed, and monotone in x.  Each penalty
stage is minimized by preconditioned descent with Armijo backtracking,
interleaved with cap-shape projections; stages continue from eps_start
down to eps_min with warm starts.  Everything is deterministic: fixed
iteration order, no randomness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solveh_banded

from . import analysis, envelope, geometry, specfun
from .envelope import CapShape
from .geometry import PolyCurve, SampledGraph
from .obstacles import Obstacle, is_admissible

__all__ = [
    "DivergenceError",
    "SolverConfig",
    "StageInfo",
    "SolveReport",
    "discrete_objective",
    "minimize_stage",
    "initial_guess",
    "solve",
]


class DivergenceError(RuntimeError):
    """Objective kept increasing: line search underflowed twice in a row."""


@dataclass
class SolverConfig:
    """Continuation and penalty parameters.

    The defaults complete the reference cone problems in seconds at
    n = 1024 (about 14 warm-started stages).
    """

    n: int = 1024
    eps_start: float = 1.0
    eps_factor: float = 0.5
    eps_min: float = 1e-4
    obstacle_penalty: float = 1e7
    speed_penalty: float = 1e5
    monotone_penalty: float = 1e6
    max_iters: int = 800
    grad_tol: float = 1e-7
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    min_step: float = 1e-14
    cap_project_every: int = 100
    verticality_slope: float = 20.0
    stub_tol: float = 5e-3
    contact_tol: float | None = None
    symmetry_nudge: float = 1e-3

    def __post_init__(self):
        if self.obstacle_penalty <= 0 or self.speed_penalty <= 0 \
                or self.monotone_penalty <= 0:
            raise ValueError("penalty weights must be > 0")
        if not 0.0 < self.eps_factor < 1.0:
            raise ValueError("eps_factor must lie in (0, 1)")
        if self.eps_start <= 0 or self.eps_min < 0:
            raise ValueError("eps_start must be > 0 and eps_min >= 0")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be > 0")

    def eps_schedule(self) -> list:
        eps = []
        e = self.eps_start
        while e > self.eps_min * (1.0 + 1e-12):
            eps.append(e)
            e *= self.eps_factor
        eps.append(self.eps_min)
        return eps


# ----------------------------------------------------------------------
# Objective and analytic gradient
# ----------------------------------------------------------------------

def discrete_objective(c: PolyCurve, o: Obstacle, epsilon: float,
                       cfg: SolverConfig):
    """Objective value and analytic gradient on the node positions.

    Endpoint rows of the gradient are zero (the endpoints are pinned).
    The obstacle penalty acts at the nodes and, additionally, on the
    linear interpolant at the obstacle's interior kinks, where nodal
    checks alone would let chords cut the corner.
    """
    pts = c.points
    nseg = pts.shape[0] - 1
    h = 1.0 / nseg
    e = np.diff(pts, axis=0)
    ell = np.linalg.norm(e, axis=1)
    L = ell.sum()
    unit = e / ell[:, None]

    d = pts[2:] - 2.0 * pts[1:-1] + pts[:-2]
    s2 = float((d * d).sum())
    cb = 1.0 / (h ** 3 * L ** 3)
    bending = s2 * cb

    x = pts[:, 0]
    y = pts[:, 1]
    psi = np.asarray(o(x))
    viol = np.maximum(psi - y, 0.0)

    mean = L / nseg
    sdev = ell - mean

    dx = np.diff(x)
    mono = np.maximum(-dx, 0.0)

    nu = cfg.obstacle_penalty
    mu = cfg.speed_penalty
    w = cfg.monotone_penalty

    value = (bending + epsilon * L + nu * float(viol @ viol)
             + mu * float(sdev @ sdev) + w * float(mono @ mono))

    grad = np.zeros_like(pts)

    # d(S2)/dp = 2 (d_{k-1} - 2 d_k + d_{k+1}) on interior nodes
    dg = np.zeros_like(pts)
    dg[1:-1] = -2.0 * d
    dg[2:] += d
    dg[:-2] += d
    dL = np.zeros_like(pts)
    dL[1:] += unit
    dL[:-1] -= unit
    grad += 2.0 * cb * dg - (3.0 * bending / L) * dL
    grad += epsilon * dL

    grad[:, 0] += 2.0 * nu * viol * np.asarray(o.slope_at(x))
    grad[:, 1] += -2.0 * nu * viol

    coef = 2.0 * mu * sdev
    grad[1:] += coef[:, None] * unit
    grad[:-1] -= coef[:, None] * unit

    grad[1:, 0] += 2.0 * w * -mono
    grad[:-1, 0] += 2.0 * w * mono

    # kink penalty on the interpolant
    kinks = o.kinks()
    if kinks.size:
        for K in kinks:
            i = int(np.clip(np.searchsorted(x, K, side="right") - 1,
                            0, nseg - 1))
            dxi = x[i + 1] - x[i]
            psi_k = float(o(K))
            if dxi <= 1e-12:
                v = max(psi_k - max(y[i], y[i + 1]), 0.0)
                value += nu * v * v
                j = i if y[i] >= y[i + 1] else i + 1
                grad[j, 1] += -2.0 * nu * v
                continue
            lam = (K - x[i]) / dxi
            yk = (1.0 - lam) * y[i] + lam * y[i + 1]
            v = max(psi_k - yk, 0.0)
            value += nu * v * v
            if v > 0.0:
                slope = (y[i + 1] - y[i]) / dxi
                grad[i, 1] += -2.0 * nu * v * (1.0 - lam)
                grad[i + 1, 1] += -2.0 * nu * v * lam
                grad[i, 0] += 2.0 * nu * v * slope * (1.0 - lam)
                grad[i + 1, 0] += 2.0 * nu * v * slope * lam

    grad[0] = 0.0
    grad[-1] = 0.0
    return value, grad


def _objective_and_grad(pts, o, epsilon, cfg):
    return discrete_objective(PolyCurve(pts), o, epsilon, cfg)


# ----------------------------------------------------------------------
# Preconditioner: bending stiffness plus penalty diagonals, banded SPD
# ----------------------------------------------------------------------

def _precondition(g: np.ndarray, pts: np.ndarray, o: Obstacle,
                  cfg: SolverConfig, L: float) -> np.ndarray:
    """Solve M d = g with M the dominant part of the objective Hessian.

    M couples the coordinates: the bending stiffness (pentadiagonal per
    coordinate, pinned ends), the speed penalty's tangential blocks
    2 mu (e e^T) on each segment's endpoints (the penalty only resists
    motion along the segment direction: an isotropic surrogate would
    freeze the soft normal modes that carry the descent), and the active
    obstacle/monotonicity diagonals.  Banded Cholesky on the interleaved
    (x0, y0, x1, y1, ...) ordering, half-bandwidth 5.
    """
    nseg = pts.shape[0] - 1
    h = 1.0 / nseg
    m = nseg - 1
    dim = 2 * m
    bend = 2.0 / (h ** 3 * L ** 3)
    mu2 = 2.0 * cfg.speed_penalty

    x = pts[1:-1, 0]
    y = pts[1:-1, 1]
    psi = np.asarray(o(x))
    active = psi - y > -1e-9
    slope = np.asarray(o.slope_at(x))
    dxs = np.diff(pts[:, 0])
    mono_active = (dxs[:-1] < 0.0) | (dxs[1:] < 0.0)

    e = np.diff(pts, axis=0)
    unit = e / np.linalg.norm(e, axis=1)[:, None]
    txx = mu2 * unit[:, 0] * unit[:, 0]
    txy = mu2 * unit[:, 0] * unit[:, 1]
    tyy = mu2 * unit[:, 1] * unit[:, 1]

    # upper-banded storage: ab[5 + i - j, j] holds M[i, j] for i <= j
    ab = np.zeros((6, dim))
    ridge = 1e-9 * bend

    diag_bend = np.full(m, 6.0 * bend)
    diag_bend[0] = diag_bend[-1] = 5.0 * bend
    # segment i touches free nodes i-1 and i (0-based free indexing)
    seg_on_node = np.zeros(m)
    seg_on_node += txx[:-1] + txx[1:]
    ab[5, 0::2] = (diag_bend + seg_on_node
                   + 2.0 * cfg.obstacle_penalty * active * slope ** 2
                   + 2.0 * cfg.monotone_penalty * mono_active + ridge)
    seg_on_node_y = tyy[:-1] + tyy[1:]
    ab[5, 1::2] = (diag_bend + seg_on_node_y
                   + 2.0 * cfg.obstacle_penalty * active + ridge)
    # same-node xy coupling (offset 1): from both segments at the node
    ab[4, 1::2] = txy[:-1] + txy[1:]
    # neighbor-node coupling (offset 2 in nodes): bending -4b plus the
    # shared segment's -e e^T block
    ab[3, 2::2] = -4.0 * bend - txx[1:-1]
    ab[3, 3::2] = -4.0 * bend - tyy[1:-1]
    ab[2, 3::2] = -txy[1:-1]   # x_k with y_{k+1}
    ab[4, 2::2] = -txy[1:-1]   # y_k with x_{k+1}: offset (2k+3)-(2k+1)=2
    # bending second-neighbor (offset 4 in slots)
    ab[1, 4::2] = bend
    ab[1, 5::2] = bend

    rhs = g[1:-1].reshape(-1)
    sol = solveh_banded(ab, rhs)
    out = np.zeros_like(g)
    out[1:-1] = sol.reshape(m, 2)
    return out


# ----------------------------------------------------------------------
# Stage minimization
# ----------------------------------------------------------------------

@dataclass
class StageInfo:
    epsilon: float
    iterations: int
    objective: float
    grad_norm: float
    converged: bool
    projections: int
    stop_reason: str = "max_iters"
    log: list = field(default_factory=list)  # (iter, objective, grad, step)


#: Accepted steps with relative decrease below this count as stagnant.
_STALL_REL = 1e-13
#: Consecutive stagnant steps before a stage stops (the penalized
#: objective is only C^1 at penalty activations, where the gradient
#: plateaus without further progress).
_STALL_LIMIT = 12


def _project_state(pts: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Cap-project the iterate at its own nodes and resample.

    The envelope is taken over the curve's own abscissae rather than the
    uniform x-grid: the iterate's nodes are dense exactly where it is
    steep, so this keeps the junction regions resolved (a uniform-x
    profile would hide the first steep cell and re-inject corner energy
    on every projection).
    """
    x = np.minimum(np.maximum.accumulate(pts[:, 0]), 1.0)
    y = pts[:, 1]

    # collapse vertical runs to their top, then upper hull over the nodes
    ux, inverse = np.unique(x, return_inverse=True)
    uy = np.full(ux.size, -np.inf)
    np.maximum.at(uy, inverse, y)
    verts = _upper_hull_xy(ux, uy)
    vx, vy = verts

    h_left = max(float(vy[0]), 0.0)
    h_right = max(float(vy[-1]), 0.0)
    chain_x = [0.0]
    chain_y = [0.0]
    if h_left > 1e-12:
        chain_x.append(0.0)
        chain_y.append(h_left)
    sel = (vx > 1e-12) & (vx < 1.0 - 1e-12)
    chain_x.extend(vx[sel])
    chain_y.extend(np.maximum(vy[sel], 0.0))
    if h_right > 1e-12:
        chain_x.append(1.0)
        chain_y.append(h_right)
    chain_x.append(1.0)
    chain_y.append(0.0)
    chain = np.column_stack([chain_x, chain_y])
    keep = np.concatenate(
        [[True], np.linalg.norm(np.diff(chain, axis=0), axis=1) > 1e-13])
    curve = geometry.to_constant_speed(PolyCurve(chain[keep]),
                                       n=pts.shape[0] - 1)
    return curve.points


def _upper_hull_xy(x: np.ndarray, y: np.ndarray):
    """Upper-hull vertex chain of points with strictly increasing x."""
    stack = [0]
    for i in range(1, x.size):
        while len(stack) >= 2:
            i1, i2 = stack[-2], stack[-1]
            if (x[i2] - x[i1]) * (y[i] - y[i2]) >= \
               (y[i2] - y[i1]) * (x[i] - x[i2]):
                stack.pop()
            else:
                break
        stack.append(i)
    idx = np.asarray(stack)
    return x[idx], y[idx]


def _resample_state(pts: np.ndarray) -> np.ndarray:
    """Constant-speed resample with monotone-x fixup, nodes on the curve."""
    fixed = pts.copy()
    fixed[:, 0] = np.minimum(np.maximum.accumulate(fixed[:, 0]), 1.0)
    fixed[0] = (0.0, 0.0)
    fixed[-1] = (1.0, 0.0)
    return geometry.to_constant_speed(PolyCurve(fixed)).points


#: L-BFGS memory (pairs kept for the two-loop recursion).
_LBFGS_MEMORY = 25


class _LbfgsState:
    """Two-loop L-BFGS recursion seeded by the banded preconditioner."""

    def __init__(self):
        self.s = []
        self.y = []
        self.rho = []

    def reset(self):
        self.s.clear()
        self.y.clear()
        self.rho.clear()

    def push(self, s: np.ndarray, y: np.ndarray):
        sy = float((s * y).sum())
        if sy > 1e-12 * math.sqrt(float((s * s).sum()) * float((y * y).sum())):
            self.s.append(s)
            self.y.append(y)
            self.rho.append(1.0 / sy)
            if len(self.s) > _LBFGS_MEMORY:
                self.s.pop(0)
                self.y.pop(0)
                self.rho.pop(0)

    def direction(self, g, pts, o, cfg, L) -> np.ndarray:
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(self.s), reversed(self.y),
                             reversed(self.rho)):
            a = rho * float((s * q).sum())
            alphas.append(a)
            q -= a * y
        r = _precondition(q, pts, o, cfg, L)
        for (s, y, rho), a in zip(zip(self.s, self.y, self.rho),
                                  reversed(alphas)):
            b = rho * float((y * r).sum())
            r += (a - b) * s
        return -r


def minimize_stage(start: PolyCurve, o: Obstacle, epsilon: float,
                   cfg: SolverConfig) -> tuple:
    """Descend one penalty stage to grad_tol or max_iters.

    Preconditioned L-BFGS with Armijo backtracking: the banded
    bending+penalty preconditioner seeds the two-loop recursion, which
    supplies the along-valley curvature a single preconditioner solve
    cannot.  Every cap_project_every accepted steps the iterate is
    cap-projected and resampled to constant speed; the projection is
    kept only when it does not increase the objective beyond the O(1/n)
    discrete slack (the continuum projection never increases the
    penalized energy, but its sampled form can convert sub-grid
    roughness into corner energy), otherwise the iterate is only
    resampled.  Raises :class:`DivergenceError` if the line search
    underflows twice in a row.
    """
    pts = start.points.copy()
    slack = 1.0 / pts.shape[0]
    f, g = _objective_and_grad(pts, o, epsilon, cfg)
    info = StageInfo(epsilon=epsilon, iterations=0, objective=f,
                     grad_norm=float(np.abs(g).max()), converged=False,
                     projections=0)
    stalled_once = False
    lbfgs = _LbfgsState()

    def _maybe_project(pts, f):
        candidate = _project_state(pts, cfg)
        f_cand, g_cand = _objective_and_grad(candidate, o, epsilon, cfg)
        if f_cand <= f + slack:
            info.projections += 1
            return candidate, f_cand, g_cand
        resampled = _resample_state(pts)
        f_res, g_res = _objective_and_grad(resampled, o, epsilon, cfg)
        if f_res <= f + slack:
            return resampled, f_res, g_res
        return pts, f, g

    stagnant = 0
    for it in range(cfg.max_iters):
        gnorm = float(np.abs(g).max())
        if gnorm <= cfg.grad_tol:
            info.converged = True
            info.stop_reason = "grad_tol"
            break
        if stagnant >= _STALL_LIMIT:
            info.converged = True
            info.stop_reason = "stagnation"
            break

        L = PolyCurve(pts).length
        direction = lbfgs.direction(g, pts, o, cfg, L)
        slope0 = float((g * direction).sum())
        if slope0 >= 0.0:
            lbfgs.reset()
            direction = -_precondition(g, pts, o, cfg, L)
            slope0 = float((g * direction).sum())

        alpha = 1.0
        accepted = False
        while alpha >= cfg.min_step:
            trial = pts + alpha * direction
            try:
                f_trial, g_trial = _objective_and_grad(trial, o, epsilon, cfg)
            except geometry.ImmersionError:
                alpha *= cfg.armijo_shrink
                continue
            if f_trial <= f + cfg.armijo_c * alpha * slope0:
                accepted = True
                break
            alpha *= cfg.armijo_shrink

        if not accepted:
            if stalled_once:
                raise DivergenceError(
                    f"line search underflowed at iteration {it} "
                    f"(objective {f:.6e})")
            stalled_once = True
            pts, f, g = _maybe_project(pts, f)
            lbfgs.reset()
            continue

        stalled_once = False
        if f - f_trial <= _STALL_REL * (1.0 + abs(f)):
            stagnant += 1
        else:
            stagnant = 0
        lbfgs.push(alpha * direction, g_trial - g)
        pts, f, g = trial, f_trial, g_trial
        info.iterations = it + 1
        info.log.append((it + 1, f, float(np.abs(g).max()), alpha))

        if (it + 1) % cfg.cap_project_every == 0:
            new_pts, f, g = _maybe_project(pts, f)
            if new_pts is not pts:
                lbfgs.reset()
            pts = new_pts

    info.objective = f
    info.grad_norm = float(np.abs(g).max())
    return PolyCurve(pts), info


# ----------------------------------------------------------------------
# Initial guess and full continuation
# ----------------------------------------------------------------------

def initial_guess(o: Obstacle, n: int) -> PolyCurve:
    """Constant-speed comparison cap with stub height sup psi: feasible
    for every admissible obstacle."""
    return analysis.comparison_polyline(o.sup_value, n)


def _diagnostic_graph(pts: np.ndarray, cap: CapShape, n: int) -> SampledGraph:
    """Cubic-spline resample of the converged polyline's graph part.

    Linear interpolation would put sub-grid kinks into u and wreck the
    finite-difference curvature diagnostics; a C^2 spline through the
    strictly-increasing-x nodes keeps them clean.  The endpoint values
    are pinned to the cap's stub heights.
    """
    x = pts[:, 0]
    y = pts[:, 1]
    keep = (x > 1e-9) & (x < 1.0 - 1e-9)
    xs = x[keep]
    ys = y[keep]
    inc = np.concatenate([[True], np.diff(xs) > 1e-12])
    xs = xs[inc]
    ys = ys[inc]
    spline = CubicSpline(xs, ys, bc_type="natural", extrapolate=True)
    grid = np.linspace(0.0, 1.0, n + 1)
    vals = spline(grid)
    vals[0] = cap.h_left
    vals[-1] = cap.h_right
    return SampledGraph(vals)


@dataclass
class SolveReport:
    alpha: float
    breakdown: geometry.EnergyBreakdown
    length: float
    eps_trajectory: list          # rows (eps, E_eps, E, L)
    contact_nodes: np.ndarray
    boundary_slopes: tuple
    classification: str
    cap: CapShape
    graph: SampledGraph
    el: analysis.ELReport
    bounds_check: dict
    feasibility_margin: float
    symmetry_defect: float
    converged: bool
    stages: list
    final_curve: PolyCurve

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "bending": self.breakdown.bending,
            "length": self.length,
            "epsilon_final": self.breakdown.epsilon,
            "eps_trajectory": [list(r) for r in self.eps_trajectory],
            "contact_nodes": self.contact_nodes.tolist(),
            "boundary_slopes": list(self.boundary_slopes),
            "classification": self.classification,
            "bounds_check": self.bounds_check,
            "feasibility_margin": self.feasibility_margin,
            "symmetry_defect": self.symmetry_defect,
            "converged": self.converged,
            "el": self.el.to_json(),
            "cap": envelope.cap_to_json(self.cap),
        }


def solve(o: Obstacle, cfg: SolverConfig | None = None) -> SolveReport:
    """Warm-started continuation from eps_start down to eps_min.

    The start is the feasible comparison cap with a deterministic
    relative tilt of symmetry_nudge toward the left, which breaks the
    exact left/right tie for symmetric obstacles (either resolution is
    acceptable; an exactly symmetric iterate is a saddle the descent
    cannot leave).
    """
    cfg = cfg or SolverConfig()
    if not is_admissible(o):
        raise ValueError("obstacle violates the admissibility conditions")

    state = initial_guess(o, cfg.n)
    pts = state.points.copy()
    pts[:, 1] *= 1.0 + cfg.symmetry_nudge * (1.0 - pts[:, 0])
    state = PolyCurve(pts)

    trajectory = []
    stages = []
    converged = True
    for eps in cfg.eps_schedule():
        try:
            state, info = minimize_stage(state, o, eps, cfg)
        except DivergenceError:
            converged = False
            info = StageInfo(epsilon=eps, iterations=-1, objective=math.nan,
                             grad_norm=math.nan, converged=False,
                             projections=0)
        stages.append(info)
        eb = geometry.curve_energy(state, eps)
        trajectory.append((eps, eb.total, eb.bending, eb.length))
        converged = converged and info.converged

    # terminal projection: lift violating nodes, then one cap projection
    pts = state.points.copy()
    pts[:, 0] = np.minimum(np.maximum.accumulate(pts[:, 0]), 1.0)
    psi = np.asarray(o(pts[:, 0]))
    pts[:, 1] = np.maximum(pts[:, 1], psi)
    pts[0] = (0.0, 0.0)
    pts[-1] = (1.0, 0.0)
    cap = envelope.cap_project(PolyCurve(pts), n=cfg.n)
    final_curve = geometry.to_constant_speed(envelope.cap_to_curve(cap),
                                             n=cfg.n)

    graph = _diagnostic_graph(pts, cap, cfg.n)
    el = analysis.el_residuals(graph, o, cfg.eps_min,
                               contact_tol=cfg.contact_tol)

    up = graph.derivative()
    slope_left = float(up[0])
    slope_right = float(up[-1])
    left_vertical = (slope_left > cfg.verticality_slope
                     and cap.h_left > cfg.stub_tol)
    right_vertical = (-slope_right > cfg.verticality_slope
                      and cap.h_right > cfg.stub_tol)
    if left_vertical and right_vertical:
        classification = "both_vertical"
    elif left_vertical:
        classification = "left_vertical"
    elif right_vertical:
        classification = "right_vertical"
    else:
        classification = "graph"

    alpha = geometry.graph_energy(graph)
    cap_eb = envelope.cap_energy(cap, cfg.eps_min)
    length = cap_eb.length
    c0 = specfun.compute_c0()
    c0sq = c0 * c0

    from .obstacles import feasible as feas_check
    margin = feas_check(cap, o, tol=1e-6).margin

    bound21 = geometry.energy_oscillation_bound(graph, 0, graph.n)
    checks = {
        "energy_upper_bound": bool(alpha <= c0sq * 1.02),
        "oscillation_lower_bound": bool(alpha >= bound21 - 1e-6),
        "touching": bool(el.contact_indices.size > 0),
        "feasible": bool(margin >= -1e-6),
    }
    if alpha < c0sq * 0.98:
        lb = analysis.length_bound_main(alpha, o)
        checks["length_bound"] = bool(length <= lb.value * 1.02)
        checks["at_most_one_vertical"] = classification != "both_vertical"

    sym = float(np.abs(graph.values - graph.values[::-1]).max())

    return SolveReport(
        alpha=alpha,
        breakdown=cap_eb,
        length=length,
        eps_trajectory=trajectory,
        contact_nodes=el.contact_indices,
        boundary_slopes=(slope_left, slope_right),
        classification=classification,
        cap=cap,
        graph=graph,
        el=el,
        bounds_check=checks,
        feasibility_margin=float(margin),
        symmetry_defect=sym,
        converged=converged,
        stages=stages,
        final_curve=final_curve,
    )
