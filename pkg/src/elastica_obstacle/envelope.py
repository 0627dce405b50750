"""Cap-shape projection: vertical stubs plus a least concave majorant.

Any discrete pseudograph (non-decreasing x, pinned at (0,0) and (1,0))
is projected to a cap: the upper profile of the polyline is sampled on
the uniform x-grid, replaced by its least concave majorant, and the
hull's values at x = 0 and x = 1 become the heights of the two vertical
stubs.  The projection never increases bending energy or length beyond
an O(1/n) sampling slack, for every length-penalty weight at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import EnergyBreakdown, PolyCurve, SampledGraph, graph_energy

__all__ = [
    "NotAPseudographError",
    "CapShape",
    "upper_concave_envelope",
    "cap_project",
    "cap_to_curve",
    "cap_energy",
    "cap_to_json",
    "cap_from_json",
]

#: Tolerance for certifying discrete concavity of a cap top.
CONCAVITY_TOL = 1e-9


class NotAPseudographError(ValueError):
    """Curve is not a discrete pseudograph (x decreasing or ends off-pin)."""


@dataclass
class CapShape:
    """Vertical stub heights plus a graph top with top(0/1) = stub heights."""

    h_left: float
    h_right: float
    top: SampledGraph
    concave_certified: bool = False

    def __post_init__(self):
        if self.h_left < 0.0 or self.h_right < 0.0:
            raise ValueError("stub heights must be >= 0")
        if abs(self.top.values[0] - self.h_left) > 1e-12 or \
           abs(self.top.values[-1] - self.h_right) > 1e-12:
            raise ValueError("top graph must meet the stub heights at x = 0, 1")
        if self.concave_certified:
            d2 = np.diff(self.top.values, 2)
            if d2.size and d2.max() > CONCAVITY_TOL:
                raise ValueError("concavity certificate violated")


def _upper_hull_indices(values: np.ndarray) -> np.ndarray:
    """Vertex indices of the upper hull of (i, values[i]), monotone chain."""
    stack = [0]
    for i in range(1, values.size):
        while len(stack) >= 2:
            i1, i2 = stack[-2], stack[-1]
            # pop i2 if it lies on or below the chord i1 -> i
            if (i2 - i1) * (values[i] - values[i2]) >= \
               (values[i2] - values[i1]) * (i - i2):
                stack.pop()
            else:
                break
        stack.append(i)
    return np.asarray(stack)


def upper_concave_envelope(profile: SampledGraph) -> SampledGraph:
    """Least concave majorant of the sampled profile on its own grid.

    Output dominates the input at every node (exactly), is concave up to
    rounding, equals the input at hull-contact nodes, and is linear in
    between; built by a monotone-chain upper hull in O(n).
    """
    v = profile.values
    idx = _upper_hull_indices(v)
    out = np.interp(np.arange(v.size), idx, v[idx])
    out[idx] = v[idx]
    np.maximum(out, v, out=out)
    return SampledGraph(out)


def _profile_from_polyline(points: np.ndarray, n: int) -> np.ndarray:
    """Upper profile sup{y : (x, y) on the polyline} on the uniform grid.

    Running max over the grid nodes covered by each segment; vertical
    segments contribute max(y_i, y_{i+1}) at their grid-aligned x.
    """
    h = 1.0 / n
    prof = np.full(n + 1, -np.inf)
    x = points[:, 0]
    y = points[:, 1]
    for i in range(len(points) - 1):
        x0, x1 = x[i], x[i + 1]
        y0, y1 = y[i], y[i + 1]
        j0 = int(math.ceil(x0 / h - 1e-12))
        j1 = int(math.floor(x1 / h + 1e-12))
        if j1 < j0:
            continue
        js = np.arange(max(j0, 0), min(j1, n) + 1)
        if x1 - x0 <= 1e-15:
            vals = np.full(js.size, max(y0, y1))
        else:
            vals = y0 + (y1 - y0) * (js * h - x0) / (x1 - x0)
        np.maximum.at(prof, js, vals)
    if not np.all(np.isfinite(prof)):
        raise NotAPseudographError("profile grid not fully covered by the curve")
    return prof


def cap_project(c: PolyCurve, epsilon: float = 0.0,
                n: int | None = None) -> CapShape:
    """Project a discrete pseudograph onto a cap shape.

    The result dominates the curve's profile exactly at grid nodes, and
    its penalized energy and length never exceed the input's beyond
    O(1/n) sampling slack, for every epsilon >= 0 simultaneously (the
    epsilon argument is accepted for signature symmetry only).

    Raises :class:`NotAPseudographError` if x decreases or the endpoints
    are off (0, 0) / (1, 0).
    """
    del epsilon
    pts = c.points
    x = pts[:, 0]
    if np.any(np.diff(x) < -1e-12):
        raise NotAPseudographError("x-components must be non-decreasing")
    if abs(x[0]) > 1e-9 or abs(x[-1] - 1.0) > 1e-9 or \
       abs(pts[0, 1]) > 1e-9 or abs(pts[-1, 1]) > 1e-9:
        raise NotAPseudographError("curve must run from (0, 0) to (1, 0)")
    n = c.n if n is None else int(n)
    prof = _profile_from_polyline(pts, n)
    env = upper_concave_envelope(SampledGraph(prof))
    vals = np.maximum(env.values, 0.0)
    top = SampledGraph(vals)
    d2 = np.diff(vals, 2)
    certified = bool(d2.size == 0 or d2.max() <= CONCAVITY_TOL)
    return CapShape(h_left=float(vals[0]), h_right=float(vals[-1]),
                    top=top, concave_certified=certified)


def cap_energy(cs: CapShape, epsilon: float = 0.0) -> EnergyBreakdown:
    """Bending of the top graph (the straight stubs carry none) plus the
    cap's total polyline length."""
    top_pts = np.column_stack([cs.top.x, cs.top.values])
    top_len = float(np.linalg.norm(np.diff(top_pts, axis=0), axis=1).sum())
    return EnergyBreakdown(
        bending=graph_energy(cs.top),
        length=cs.h_left + cs.h_right + top_len,
        epsilon=epsilon,
    )


def cap_to_curve(cs: CapShape) -> PolyCurve:
    """Stub-top-stub concatenation as a near-uniform polyline.

    Every edge (the two stubs and each top grid cell) is subdivided into
    ceil(edge/delta) equal pieces with delta = L_top / n, so all original
    vertices are preserved: re-projecting the result reproduces the cap
    exactly up to rounding, and the total length is the exact sum
    h_left + h_right + sum of top chords.
    """
    top = cs.top
    xs = top.x
    ys = top.values
    chords = np.hypot(np.diff(xs), np.diff(ys))
    l_top = float(chords.sum())
    delta = l_top / top.n
    # stubs shorter than this are folded into the adjacent top edge
    stub_floor = 1e-12 * max(1.0, l_top)

    nodes = [np.array([0.0, 0.0])]

    def _append_edge(p1):
        p0 = nodes[-1] if nodes[-1].ndim == 1 else nodes[-1][-1]
        p1 = np.asarray(p1, dtype=float)
        length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
        pieces = max(1, math.ceil(length / delta - 1e-12))
        lam = np.arange(1, pieces + 1) / pieces
        nodes.append(p0[None, :] + lam[:, None] * (p1 - p0)[None, :])

    if cs.h_left > stub_floor:
        _append_edge([0.0, cs.h_left])
    for i in range(1, top.n + 1):
        _append_edge([xs[i], ys[i]])
    if cs.h_right > stub_floor:
        _append_edge([1.0, 0.0])
    else:
        nodes[-1][-1] = (1.0, 0.0)

    return PolyCurve(np.vstack([n[None, :] if n.ndim == 1 else n for n in nodes]))


def cap_to_json(cs: CapShape, manifest=None) -> dict:
    return {
        "h_left": cs.h_left,
        "h_right": cs.h_right,
        "n": cs.top.n,
        "top": cs.top.values.tolist(),
        "concave_certified": cs.concave_certified,
        "provenance": manifest or {},
    }


def cap_from_json(obj: dict) -> CapShape:
    return CapShape(
        h_left=float(obj["h_left"]),
        h_right=float(obj["h_right"]),
        top=SampledGraph(np.asarray(obj["top"], dtype=float)),
        concave_certified=bool(obj["concave_certified"]),
    )


def save_cap_json(cs: CapShape, path, manifest=None):
    with open(path, "w") as fh:
        json.dump(cap_to_json(cs, manifest), fh, indent=1)
