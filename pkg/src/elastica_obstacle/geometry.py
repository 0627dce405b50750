"""Discrete graphs and planar curves with their bending/length functionals.

A :class:`SampledGraph` holds u on the uniform grid x_i = i/n; a
:class:`PolyCurve` holds a planar polyline with uniform parameter
t_i = i/n.  Derivatives are central finite differences with second-order
one-sided stencils at the ends; integrals are trapezoid sums on the grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .specfun import GProfile, g_of

__all__ = [
    "ImmersionError",
    "NonMonotoneXError",
    "NotConstantSpeedError",
    "SampledGraph",
    "PolyCurve",
    "EnergyBreakdown",
    "graph_energy",
    "curve_energy",
    "constant_velocity_energy",
    "to_constant_speed",
    "graph_to_curve",
    "curve_to_graph",
    "energy_oscillation_bound",
    "curve_to_csv",
    "curve_from_csv",
    "graph_to_csv",
    "graph_from_csv",
    "curve_to_json",
    "curve_from_json",
    "graph_to_json",
    "graph_from_json",
]

#: Minimum segment length, relative to total length (violations raise).
IMMERSION_FLOOR = 1e-9

#: Allowed relative deviation of segment lengths for "constant speed".
CONSTANT_SPEED_TOL = 0.01


class ImmersionError(ValueError):
    """A polyline segment is shorter than the immersion floor."""


class NonMonotoneXError(ValueError):
    """Curve x-components are not strictly increasing."""


class NotConstantSpeedError(ValueError):
    """Segment lengths deviate too much from their mean."""

    def __init__(self, deviation: float):
        super().__init__(
            f"segment-length deviation {deviation:.3e} exceeds "
            f"{CONSTANT_SPEED_TOL:.0%}"
        )
        self.deviation = deviation


def _d1(values: np.ndarray, h: float) -> np.ndarray:
    """First derivative: central interior, second-order one-sided ends."""
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def _d2(values: np.ndarray, h: float) -> np.ndarray:
    """Second derivative: central interior, second-order one-sided ends."""
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)
    out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2]
              - values[3]) / (h * h)
    out[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3]
               - values[-4]) / (h * h)
    return out


@dataclass
class SampledGraph:
    """Function u on the uniform grid over [0, 1], n >= 8 cells."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 9:
            raise ValueError("graph needs at least 9 samples (n >= 8)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("graph values must be finite")

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.size)

    @property
    def boundary(self) -> tuple:
        return float(self.values[0]), float(self.values[-1])

    def derivative(self) -> np.ndarray:
        return _d1(self.values, self.h)

    def second_derivative(self) -> np.ndarray:
        return _d2(self.values, self.h)

    def curvature(self) -> np.ndarray:
        up = self.derivative()
        upp = self.second_derivative()
        return upp / (1.0 + up * up) ** 1.5


@dataclass
class PolyCurve:
    """Planar polyline with uniform parameter grid t_i = i/n."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must be an (n+1, 2) array")
        if self.points.shape[0] < 2:
            raise ValueError("a curve needs at least two points")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("curve points must be finite")
        seg = self.segment_lengths()
        if np.any(seg <= IMMERSION_FLOOR * max(seg.sum(), 1e-300)):
            raise ImmersionError(
                f"minimum segment {seg.min():.3e} under the immersion floor"
            )

    @property
    def n(self) -> int:
        return self.points.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.points.shape[0])

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths().sum())

    def derivative(self) -> np.ndarray:
        return np.column_stack(
            [_d1(self.points[:, 0], self.h), _d1(self.points[:, 1], self.h)]
        )

    def second_derivative(self) -> np.ndarray:
        return np.column_stack(
            [_d2(self.points[:, 0], self.h), _d2(self.points[:, 1], self.h)]
        )

    def normal(self) -> np.ndarray:
        dp = self.derivative()
        speed = np.linalg.norm(dp, axis=1)
        return np.column_stack([-dp[:, 1], dp[:, 0]]) / speed[:, None]


@dataclass(frozen=True)
class EnergyBreakdown:
    """Bending + epsilon * length split of the penalized energy."""

    bending: float
    length: float
    epsilon: float

    @property
    def total(self) -> float:
        return self.bending + self.epsilon * self.length


def graph_energy(g: SampledGraph) -> float:
    """Trapezoid sum of u''^2 / (1 + u'^2)^(5/2) on the grid."""
    up = g.derivative()
    upp = g.second_derivative()
    density = upp * upp / (1.0 + up * up) ** 2.5
    return float(np.trapezoid(density, dx=g.h))


def curve_energy(c: PolyCurve, epsilon: float = 0.0) -> EnergyBreakdown:
    """Bending <gamma'', N>^2 / |gamma'|^3 (trapezoid in t) plus length."""
    dp = c.derivative()
    dpp = c.second_derivative()
    speed = np.linalg.norm(dp, axis=1)
    normal_component = (-dp[:, 1] * dpp[:, 0] + dp[:, 0] * dpp[:, 1]) / speed
    density = normal_component ** 2 / speed ** 3
    bending = float(np.trapezoid(density, dx=c.h))
    return EnergyBreakdown(bending=bending, length=c.length, epsilon=epsilon)


def _speed_deviation(c: PolyCurve) -> float:
    seg = c.segment_lengths()
    mean = seg.mean()
    return float(np.abs(seg - mean).max() / mean)


def constant_velocity_energy(c: PolyCurve, epsilon: float = 0.0) -> EnergyBreakdown:
    """(1/L^3) * trapezoid of |gamma''|^2 plus epsilon * L.

    Valid only on (approximately) constant-speed curves; raises
    :class:`NotConstantSpeedError` when segment lengths deviate more than
    1% from their mean.
    """
    dev = _speed_deviation(c)
    if dev > CONSTANT_SPEED_TOL:
        raise NotConstantSpeedError(dev)
    dpp = c.second_derivative()
    integral = float(np.trapezoid((dpp * dpp).sum(axis=1), dx=c.h))
    L = c.length
    return EnergyBreakdown(bending=integral / L ** 3, length=L, epsilon=epsilon)


def to_constant_speed(c: PolyCurve, n: int | None = None) -> PolyCurve:
    """Resample at points equally spaced in cumulative chord length.

    The new nodes lie on the input polyline; the first and last points are
    copied exactly.
    """
    n = c.n if n is None else int(n)
    seg = c.segment_lengths()
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n + 1)
    x = np.interp(targets, s, c.points[:, 0])
    y = np.interp(targets, s, c.points[:, 1])
    pts = np.column_stack([x, y])
    pts[0] = c.points[0]
    pts[-1] = c.points[-1]
    return PolyCurve(pts)


def graph_to_curve(g: SampledGraph) -> PolyCurve:
    """(x_i, u_i) as a polyline with uniform parameter grid."""
    return PolyCurve(np.column_stack([g.x, g.values]))


def curve_to_graph(c: PolyCurve, n: int | None = None) -> SampledGraph:
    """Monotone linear interpolation onto the uniform x-grid.

    Requires strictly increasing x-components (no vertical segments).
    """
    x = c.points[:, 0]
    if np.any(np.diff(x) <= 0.0):
        raise NonMonotoneXError("curve x-components must be strictly increasing")
    n = c.n if n is None else int(n)
    grid = np.linspace(0.0, 1.0, n + 1)
    return SampledGraph(np.interp(grid, x, c.points[:, 1]))


def energy_oscillation_bound(g: SampledGraph, b1: int, b2: int,
                             prof: GProfile | None = None) -> float:
    """(G(u'(b2)) - G(u'(b1)))^2 on finite-difference slopes.

    A lower bound for the bending energy, for any node pair.
    """
    up = g.derivative()
    if not (0 <= b1 <= g.n and 0 <= b2 <= g.n):
        raise IndexError("grid indices out of range")
    diff = g_of(up[b2], prof) - g_of(up[b1], prof)
    return float(diff * diff)


# ----------------------------------------------------------------------
# Serialization: CSV with 17-significant-digit decimals, JSON mirrors
# ----------------------------------------------------------------------

def _write_csv(path, header, columns, manifest=None):
    with open(path, "w", newline="") as fh:
        if manifest is not None:
            fh.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([f"{v:.17g}" for v in row])


def _read_csv(path, ncols):
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            rows.append(line.strip().split(","))
    data = rows[1:]  # skip header
    cols = [np.array([float(r[j]) for r in data]) for j in range(ncols)]
    return cols


def curve_to_csv(c: PolyCurve, path, manifest=None):
    _write_csv(path, ["t", "x", "y"],
               [c.t, c.points[:, 0], c.points[:, 1]], manifest)


def curve_from_csv(path) -> PolyCurve:
    _, x, y = _read_csv(path, 3)
    return PolyCurve(np.column_stack([x, y]))


def graph_to_csv(g: SampledGraph, path, manifest=None):
    _write_csv(path, ["x", "u"], [g.x, g.values], manifest)


def graph_from_csv(path) -> SampledGraph:
    _, u = _read_csv(path, 2)
    return SampledGraph(u)


def curve_to_json(c: PolyCurve, manifest=None) -> dict:
    return {
        "n": c.n,
        "t": c.t.tolist(),
        "x": c.points[:, 0].tolist(),
        "y": c.points[:, 1].tolist(),
        "provenance": manifest or {},
    }


def curve_from_json(obj) -> PolyCurve:
    return PolyCurve(np.column_stack([obj["x"], obj["y"]]))


def graph_to_json(g: SampledGraph, manifest=None) -> dict:
    return {
        "n": g.n,
        "x": g.x.tolist(),
        "u": g.values.tolist(),
        "provenance": manifest or {},
    }


def graph_from_json(obj) -> SampledGraph:
    return SampledGraph(np.asarray(obj["u"]))
