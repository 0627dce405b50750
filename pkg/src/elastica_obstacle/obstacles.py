"""Obstacles, admissibility diagnostics, and the cone family.

An admissible obstacle is negative at both endpoints, positive somewhere,
and has bounded one-sided slopes.  Construction does not enforce
admissibility (so diagnostics can report on bad inputs); the solver does.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .specfun import THRESHOLD_SUP_ABS_ERR, cone_threshold_sup

__all__ = [
    "Obstacle",
    "ConeObstacle",
    "TabulatedObstacle",
    "AdmissibilityCheck",
    "FeasibilityResult",
    "NonexistenceDiagnostic",
    "admissibility_check",
    "feasible",
    "cone_nonexistence_diagnostic",
    "obstacle_to_json",
    "obstacle_from_json",
    "parse_obstacle_spec",
]


class Obstacle:
    """Base class: evaluable psi on [0, 1] with sup and slope bound."""

    kind: str = "generic"

    def __call__(self, x):
        raise NotImplementedError

    def slope_at(self, x):
        """Right-sided slope (one-sided convention at kinks)."""
        raise NotImplementedError

    @property
    def sup_value(self) -> float:
        raise NotImplementedError

    @property
    def slope_bound(self) -> float:
        raise NotImplementedError

    def kinks(self) -> np.ndarray:
        """Interior x-positions where the slope may jump."""
        return np.empty(0)


@dataclass
class ConeObstacle(Obstacle):
    """Symmetric cone with valley [0, s] and peak A at x = 1/2.

    psi(x) = A/(1/2 - s) * (min(x, 1-x) - s).
    """

    peak: float
    valley: float

    kind = "cone"

    def __post_init__(self):
        if not self.peak > 0.0:
            raise ValueError("cone peak A must be > 0")
        if not 0.0 < self.valley < 0.5:
            raise ValueError("cone valley parameter s must lie in (0, 1/2)")

    @property
    def _slope(self) -> float:
        return self.peak / (0.5 - self.valley)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = self._slope * (np.minimum(x, 1.0 - x) - self.valley)
        return vals if vals.ndim else float(vals)

    def slope_at(self, x):
        x = np.asarray(x, dtype=float)
        s = np.where(x < 0.5, self._slope, -self._slope)
        return s if s.ndim else float(s)

    @property
    def sup_value(self) -> float:
        return self.peak

    @property
    def slope_bound(self) -> float:
        return self._slope

    def kinks(self) -> np.ndarray:
        return np.array([self.valley, 0.5, 1.0 - self.valley])


@dataclass
class TabulatedObstacle(Obstacle):
    """Piecewise-linear interpolation of (x, psi) samples on [0, 1]."""

    xs: np.ndarray
    psis: np.ndarray
    kind: str = "tabulated"

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.psis = np.asarray(self.psis, dtype=float)
        if self.xs.ndim != 1 or self.xs.shape != self.psis.shape:
            raise ValueError("xs and psis must be matching 1-d arrays")
        if self.xs.size < 2 or np.any(np.diff(self.xs) <= 0):
            raise ValueError("xs must be strictly increasing with >= 2 samples")
        if abs(self.xs[0]) > 1e-12 or abs(self.xs[-1] - 1.0) > 1e-12:
            raise ValueError("samples must cover [0, 1]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.interp(x, self.xs, self.psis)
        return vals if vals.ndim else float(vals)

    def slope_at(self, x):
        x = np.asarray(x, dtype=float)
        chords = np.diff(self.psis) / np.diff(self.xs)
        idx = np.clip(np.searchsorted(self.xs, x, side="right") - 1,
                      0, chords.size - 1)
        s = chords[idx]
        return s if s.ndim else float(s)

    @property
    def sup_value(self) -> float:
        return float(self.psis.max())

    @property
    def slope_bound(self) -> float:
        return float(np.abs(np.diff(self.psis) / np.diff(self.xs)).max())

    def kinks(self) -> np.ndarray:
        return self.xs[1:-1]


@dataclass(frozen=True)
class AdmissibilityCheck:
    name: str
    passed: bool
    detail: str


def admissibility_check(o: Obstacle) -> list[AdmissibilityCheck]:
    """Per-condition diagnostics (negative endpoints, positive max,
    bounded one-sided slopes); never raises."""
    p0 = float(o(0.0))
    p1 = float(o(1.0))
    checks = [
        AdmissibilityCheck(
            "endpoints_negative", p0 < 0.0 and p1 < 0.0,
            f"psi(0)={p0:.6g}, psi(1)={p1:.6g}",
        ),
        AdmissibilityCheck(
            "positive_max", o.sup_value > 0.0, f"sup={o.sup_value:.6g}",
        ),
        AdmissibilityCheck(
            "bounded_slopes", np.isfinite(o.slope_bound),
            f"slope_bound={o.slope_bound:.6g}",
        ),
    ]
    return checks


def is_admissible(o: Obstacle) -> bool:
    return all(c.passed for c in admissibility_check(o))


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    margin: float     # worst signed value of u - psi (negative = violation)
    argmin_x: float


def _scan_points(n: int, o: Obstacle) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, n + 1)
    kinks = o.kinks()
    return np.unique(np.concatenate([grid, kinks])) if kinks.size else grid


def feasible(shape, o: Obstacle, tol: float = 1e-9) -> FeasibilityResult:
    """Check u >= psi - tol at grid nodes and at obstacle kinks.

    ``shape`` is a SampledGraph or a CapShape (its top graph is tested;
    the vertical stubs sit at x in {0, 1} where psi < 0 for admissible
    obstacles).
    """
    graph = getattr(shape, "top", shape)
    pts = _scan_points(graph.n, o)
    u = np.interp(pts, graph.x, graph.values)
    margin = u - np.asarray(o(pts))
    i = int(np.argmin(margin))
    worst = float(margin[i])
    return FeasibilityResult(feasible=worst >= -tol, margin=worst,
                             argmin_x=float(pts[i]))


@dataclass(frozen=True)
class NonexistenceDiagnostic:
    """Outcome of the peak-height test against the threshold constant."""

    decision: str                  # graph_minimizer_possible | _impossible
    threshold: float
    margin: float                  # peak - threshold
    threshold_error: float
    within_uncertainty_band: bool  # |margin| inside the reporting band

    BAND = 1e-4


def cone_nonexistence_diagnostic(o: ConeObstacle) -> NonexistenceDiagnostic:
    """Graph minimizers are ruled out iff the peak exceeds the threshold
    constant (strict, with the threshold's error margin reported)."""
    thr = cone_threshold_sup()
    margin = o.peak - thr
    return NonexistenceDiagnostic(
        decision=("graph_minimizer_impossible" if margin > 0.0
                  else "graph_minimizer_possible"),
        threshold=thr,
        margin=margin,
        threshold_error=THRESHOLD_SUP_ABS_ERR,
        within_uncertainty_band=abs(margin) <= NonexistenceDiagnostic.BAND,
    )


# ----------------------------------------------------------------------
# Serialization and the CLI shorthand
# ----------------------------------------------------------------------

def obstacle_to_json(o: Obstacle) -> dict:
    if isinstance(o, ConeObstacle):
        return {"kind": "cone", "params": {"A": o.peak, "s": o.valley}}
    if isinstance(o, TabulatedObstacle):
        return {
            "kind": o.kind,
            "samples": [{"x": float(x), "psi": float(p)}
                        for x, p in zip(o.xs, o.psis)],
        }
    raise TypeError(f"cannot serialize obstacle of type {type(o)!r}")


def obstacle_from_json(obj: dict) -> Obstacle:
    kind = obj.get("kind")
    if kind == "cone":
        p = obj["params"]
        return ConeObstacle(peak=float(p["A"]), valley=float(p["s"]))
    if kind in ("piecewise_linear", "tabulated"):
        xs = np.array([s["x"] for s in obj["samples"]])
        ps = np.array([s["psi"] for s in obj["samples"]])
        return TabulatedObstacle(xs, ps, kind=kind)
    raise ValueError(f"unknown obstacle kind {kind!r}")


_CONE_RE = re.compile(r"^cone:A=([^,]+),s=(.+)$")


def parse_obstacle_spec(text: str) -> Obstacle:
    """Parse the CLI shorthand, e.g. ``cone:A=1.2,s=0.25``."""
    m = _CONE_RE.match(text.strip())
    if m:
        return ConeObstacle(peak=float(m.group(1)), valley=float(m.group(2)))
    raise ValueError(
        f"unrecognized obstacle spec {text!r} (expected cone:A=<val>,s=<val>)"
    )


def load_obstacle_file(path) -> Obstacle:
    with open(path) as fh:
        return obstacle_from_json(json.load(fh))
