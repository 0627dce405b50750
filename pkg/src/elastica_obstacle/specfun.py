"""Self-contained special functions and quadrature.

Provides the Gamma function, the real Gauss hypergeometric function 2F1
with the Pfaff transformation, adaptive Gauss-Legendre quadrature with
inverse-square-root endpoint handling, the slope potential

    G(x) = integral_0^x (1+s^2)^(-5/4) ds

with its inverse, the constant c0 = G(inf) - G(-inf), and the cone
threshold constant

    sup_{A>0} (1/3) A 2F1(1, 3/2; 7/4; -A^2) / 2F1(1/2, 1; 3/4; -A^2).

All functions are pure; the only shared state is an immutable cached
profile table for G.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "PoleError",
    "DomainError",
    "ConvergenceError",
    "ToleranceError",
    "QuadratureSpec",
    "Hyp2F1Params",
    "PfaffTransform",
    "GProfile",
    "gamma",
    "rgamma",
    "pochhammer",
    "hyp2f1",
    "pfaff_transform",
    "integrate",
    "default_profile",
    "g_of",
    "g_inv",
    "compute_c0",
    "cone_threshold_ratio",
    "cone_threshold_limit",
    "cone_threshold_sweep",
    "cone_threshold_sup",
    "THRESHOLD_SUP_ABS_ERR",
]


class PoleError(ValueError):
    """Evaluation at a pole (non-positive integer argument)."""


class DomainError(ValueError):
    """Argument outside the supported real domain."""


class ConvergenceError(RuntimeError):
    """A series failed its term-decay test within the iteration cap."""


class ToleranceError(RuntimeError):
    """Quadrature could not meet the requested tolerance.

    The best available estimate is attached as ``best``.
    """

    def __init__(self, message, best, error):
        super().__init__(message)
        self.best = best
        self.error = error


# ----------------------------------------------------------------------
# Gamma function
# ----------------------------------------------------------------------

# Lanczos approximation, g = 7, 9 coefficients (double precision set).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _is_nonpositive_integer(x: float, tol: float = 0.0) -> bool:
    return x <= 0.5 and abs(x - round(x)) <= tol and round(x) <= 0


def gamma(x: float) -> float:
    """Gamma function for real arguments, relative error <= 1e-12 on [0.1, 30].

    Uses a fixed Lanczos sum with reflection for x < 0.5.  Raises
    :class:`PoleError` at 0, -1, -2, ...
    """
    x = float(x)
    if x <= 0.0 and x == round(x):
        raise PoleError(f"gamma pole at {x}")
    if x < 0.5:
        # Reflection: gamma(x) gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def rgamma(x: float) -> float:
    """Reciprocal Gamma, entire: returns 0.0 at the poles of Gamma."""
    x = float(x)
    if x <= 0.0 and x == round(x):
        return 0.0
    return 1.0 / gamma(x)


def pochhammer(a: float, n: int) -> float:
    """Rising factorial (a)_n = a (a+1) ... (a+n-1) = Gamma(a+n)/Gamma(a).

    Computed as a plain product; the ratio-of-Gamma form is the defining
    identity, not the implementation.
    """
    if n < 0:
        raise ValueError("pochhammer order must be >= 0")
    acc = 1.0
    for k in range(n):
        acc *= a + k
    return acc


# ----------------------------------------------------------------------
# Gauss hypergeometric function
# ----------------------------------------------------------------------

_SERIES_CAP = 100_000
_SERIES_TOL = 1e-16
# Below this working argument the plain series is used directly; above it
# the 1-z connection formula takes over (its two sub-series run at 1-z).
_SERIES_SWITCH = 0.95
# Largest argument at which the plain series is still allowed as a
# fallback (about 75k terms at the cap).
_SERIES_FALLBACK_MAX = 1.0 - 5e-4


@dataclass(frozen=True)
class Hyp2F1Params:
    """Parameters (a, b; c; z) of the real Gauss hypergeometric function.

    c must not be a non-positive integer and z < 1 (real-domain
    restriction; negative z is mapped into [0, 1) by the Pfaff
    transformation).
    """

    a: float
    b: float
    c: float
    z: float

    def __post_init__(self):
        if _is_nonpositive_integer(self.c):
            raise PoleError(f"hypergeometric c parameter is a pole: c={self.c}")
        if not self.z < 1.0:
            raise DomainError(f"hypergeometric argument must satisfy z < 1, got {self.z}")


@dataclass(frozen=True)
class PfaffTransform:
    """Result of the Pfaff transformation.

    2F1(a, b; c; z) = prefactor * 2F1(params.a, params.b; params.c; params.z)
    with prefactor = (1-z)^(-a).
    """

    params: Hyp2F1Params
    prefactor_base: float
    prefactor_exponent: float

    @property
    def prefactor(self) -> float:
        return self.prefactor_base ** self.prefactor_exponent


def pfaff_transform(p: Hyp2F1Params) -> PfaffTransform:
    """Map (a, b; c; z) to (a, c-b; c; z/(z-1)) with prefactor (1-z)^(-a)."""
    zp = 0.0 if p.z == 0.0 else p.z / (p.z - 1.0)
    return PfaffTransform(
        params=Hyp2F1Params(p.a, p.c - p.b, p.c, zp),
        prefactor_base=1.0 - p.z,
        prefactor_exponent=-p.a,
    )


def _hyp2f1_series(a: float, b: float, c: float, z: float,
                   cap: int = _SERIES_CAP) -> float:
    """Plain power series at |z| < 1 with a two-term decay stopping test."""
    term = 1.0
    total = 1.0
    small_runs = 0
    for n in range(cap):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) <= _SERIES_TOL * max(abs(total), 1e-300):
            small_runs += 1
            if small_runs >= 2:
                return total
        else:
            small_runs = 0
    raise ConvergenceError(
        f"2F1 series did not converge within {cap} terms "
        f"(a={a}, b={b}, c={c}, z={z})"
    )


def _hyp2f1_near_one(a: float, b: float, c: float, z: float) -> float:
    """Connection formula in 1-z for z close to 1 (c-a-b not an integer)."""
    s = c - a - b
    w = 1.0 - z
    coef1 = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b)
    coef2 = gamma(c) * gamma(-s) * rgamma(a) * rgamma(b)
    t1 = coef1 * _hyp2f1_series(a, b, 1.0 - s, w)
    t2 = coef2 * w ** s * _hyp2f1_series(c - a, c - b, 1.0 + s, w)
    return t1 + t2


def hyp2f1(a, b=None, c=None, z=None) -> float:
    """Real Gauss hypergeometric function 2F1(a, b; c; z), z < 1.

    Accepts either a single :class:`Hyp2F1Params` or the four scalars.
    Strategy: plain series on [0, 0.95]; Pfaff transformation for z < 0
    (mapping into [0, 1)); the 1-z connection formula close to 1.  Raises
    :class:`DomainError` for z >= 1 and :class:`ConvergenceError` when no
    route converges within the iteration cap.
    """
    if isinstance(a, Hyp2F1Params):
        p = a
    else:
        p = Hyp2F1Params(float(a), float(b), float(c), float(z))

    if p.z == 0.0:
        return 1.0
    if p.z < 0.0:
        tr = pfaff_transform(p)
        return tr.prefactor * hyp2f1(tr.params)
    if p.z <= _SERIES_SWITCH:
        return _hyp2f1_series(p.a, p.b, p.c, p.z)

    s = p.c - p.a - p.b
    if abs(s - round(s)) > 1e-9:
        return _hyp2f1_near_one(p.a, p.b, p.c, p.z)
    if p.z <= _SERIES_FALLBACK_MAX:
        return _hyp2f1_series(p.a, p.b, p.c, p.z)
    raise ConvergenceError(
        f"2F1 argument too close to 1 for integer c-a-b={s}: z={p.z}"
    )


# ----------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Control parameters for :func:`integrate`.

    ``singular_left``/``singular_right`` declare inverse-square-root
    integrand behaviour at the corresponding endpoint; the integrand is
    then smoothed by the substitution t = a + tau^2 (resp. b - tau^2).
    """

    panel_count: int = 16
    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    singular_left: bool = False
    singular_right: bool = False

    def __post_init__(self):
        if self.panel_count < 4:
            raise ValueError("panel_count must be >= 4")
        if not (self.abs_tol > 0.0 or self.rel_tol > 0.0):
            raise ValueError("at least one of abs_tol, rel_tol must be > 0")
        if self.abs_tol < 0.0 or self.rel_tol < 0.0:
            raise ValueError("tolerances must be >= 0")


@lru_cache(maxsize=None)
def _gl_nodes(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def _panel_values(f, lo: np.ndarray, hi: np.ndarray, npts: int) -> np.ndarray:
    """Gauss-Legendre estimates of integral of f over each panel [lo, hi]."""
    x, w = _gl_nodes(npts)
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    vals = f(mid + half * x[None, :])
    return (vals * w[None, :]).sum(axis=1) * half[:, 0]


_MAX_REFINE_ROUNDS = 40


def _adaptive_gl(f, a: float, b: float, panel_count: int,
                 abs_tol: float, rel_tol: float):
    """Adaptive panel-splitting Gauss-Legendre on a smooth integrand."""
    lo = np.linspace(a, b, panel_count + 1)[:-1]
    hi = np.linspace(a, b, panel_count + 1)[1:]
    coarse = _panel_values(f, lo, hi, 7)
    fine = _panel_values(f, lo, hi, 15)
    err = np.abs(fine - coarse)

    for _ in range(_MAX_REFINE_ROUNDS):
        total = fine.sum()
        tol = max(abs_tol, rel_tol * abs(total))
        bad = err > tol * (hi - lo) / (b - a)
        if err.sum() <= tol or not bad.any():
            return total, err.sum()
        split_lo, split_hi = lo[bad], hi[bad]
        mid = 0.5 * (split_lo + split_hi)
        new_lo = np.concatenate([lo[~bad], split_lo, mid])
        new_hi = np.concatenate([hi[~bad], mid, split_hi])
        keep_fine = fine[~bad]
        keep_err = err[~bad]
        add_lo = np.concatenate([split_lo, mid])
        add_hi = np.concatenate([mid, split_hi])
        add_coarse = _panel_values(f, add_lo, add_hi, 7)
        add_fine = _panel_values(f, add_lo, add_hi, 15)
        lo = new_lo
        hi = new_hi
        fine = np.concatenate([keep_fine, add_fine])
        err = np.concatenate([keep_err, np.abs(add_fine - add_coarse)])

    total = fine.sum()
    raise ToleranceError(
        f"quadrature tolerance not met on [{a}, {b}]", best=total, error=err.sum()
    )


def integrate(f, a: float, b: float, spec: QuadratureSpec | None = None) -> float:
    """Integrate f over [a, b] with declared endpoint singularities removed.

    f must accept numpy arrays.  Declared singular endpoints are handled
    exactly for the (t-a)^(-1/2) weight by the substitution t = a + tau^2
    (and mirrored on the right); the transformed integrand is smooth and
    fed to adaptive Gauss-Legendre.  Raises :class:`ToleranceError` with
    the best estimate attached if refinement stalls.
    """
    spec = spec or QuadratureSpec()
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a, spec)

    if spec.singular_left and spec.singular_right:
        m = 0.5 * (a + b)
        half = QuadratureSpec(spec.panel_count, spec.abs_tol / 2.0,
                              spec.rel_tol / 2.0, True, False)
        left = integrate(f, a, m, half)
        right = integrate(
            f, m, b,
            QuadratureSpec(spec.panel_count, spec.abs_tol / 2.0,
                           spec.rel_tol / 2.0, False, True),
        )
        return left + right

    if spec.singular_left:
        width = b - a
        g = lambda tau: 2.0 * tau * f(a + tau * tau)
        lo, hi = 0.0, math.sqrt(width)
    elif spec.singular_right:
        width = b - a
        g = lambda tau: 2.0 * tau * f(b - tau * tau)
        lo, hi = 0.0, math.sqrt(width)
    else:
        g, lo, hi = f, a, b

    value, _ = _adaptive_gl(g, lo, hi, spec.panel_count, spec.abs_tol, spec.rel_tol)
    return value


# ----------------------------------------------------------------------
# The slope potential G and its inverse
# ----------------------------------------------------------------------
#
# With t = tan(theta) the integrand (1+t^2)^(-p) dt becomes
# cos(theta)^(2p-2) d(theta), so
#     F(x) = integral_0^x (1+t^2)^(-p) dt = Phi(arctan x),
#     Phi(theta) = integral_0^theta cos(tau)^(2p-2) d(tau).
# For p = 5/4 this is G; p = 3/4 gives the arc-length companion used by
# the closed-form comparison curve.  Phi is tabulated cumulatively on a
# uniform theta grid; the last stretch before pi/2 (where the integrand
# may lose smoothness) is evaluated through theta = pi/2 - phi^2, which
# restores smoothness in phi.

_THETA_SWITCH_GAP = 0.20   # tail region is [pi/2 - gap, pi/2)
_PROFILE_PANELS = 4096
_PANEL_GL = 8
_TAIL_GL = 32


class PowerIntegralProfile:
    """Tabulated F(x) = integral_0^x (1+s^2)^(-p) ds with vectorized inverse."""

    def __init__(self, p: float, panels: int = _PROFILE_PANELS):
        self.p = float(p)
        self._q = 2.0 * self.p - 2.0          # cos exponent
        self._theta_max = 0.5 * math.pi - _THETA_SWITCH_GAP
        grid = np.linspace(0.0, self._theta_max, panels + 1)
        xi, wi = _gl_nodes(_PANEL_GL)
        mid = 0.5 * (grid[:-1] + grid[1:])[:, None]
        half = 0.5 * (grid[1:] - grid[:-1])[:, None]
        nodes = mid + half * xi[None, :]
        panel_ints = (np.cos(nodes) ** self._q * wi[None, :]).sum(axis=1) * half[:, 0]
        self._theta_grid = grid
        self._phi_cum = np.concatenate([[0.0], np.cumsum(panel_ints)])
        self.half = float(self._phi_cum[-1] + self._tail(np.array([self._theta_max]))[0])
        self.total = 2.0 * self.half
        # monotone sample table (x, F(x)) for inversion seeds
        self.table_x = np.tan(grid)
        self.table_f = self._phi_cum.copy()

    # -- forward ---------------------------------------------------------

    def _tail(self, theta: np.ndarray) -> np.ndarray:
        """integral_theta^(pi/2) cos(tau)^q d(tau) via tau = pi/2 - phi^2."""
        gap = np.maximum(0.5 * math.pi - theta, 0.0)
        phi_max = np.sqrt(gap)
        out = np.zeros_like(phi_max)
        pos = phi_max > 0.0
        if pos.any():
            xi, wi = _gl_nodes(_TAIL_GL)
            mid = 0.5 * phi_max[pos][:, None]
            nodes = mid + mid * xi[None, :]
            vals = 2.0 * nodes * np.sin(nodes * nodes) ** self._q
            out[pos] = (vals * wi[None, :]).sum(axis=1) * mid[:, 0]
        return out

    def _phi(self, theta: np.ndarray) -> np.ndarray:
        """Cumulative integral of cos^q from 0 to theta (theta in [0, pi/2))."""
        theta = np.asarray(theta, dtype=float)
        out = np.empty_like(theta)
        near = theta > self._theta_max
        if near.any():
            out[near] = self.half - self._tail(theta[near])
        far = ~near
        if far.any():
            th = theta[far]
            step = self._theta_grid[1] - self._theta_grid[0]
            idx = np.minimum((th / step).astype(int), len(self._theta_grid) - 2)
            base = self._phi_cum[idx]
            t0 = self._theta_grid[idx]
            xi, wi = _gl_nodes(_PANEL_GL)
            mid = 0.5 * (t0 + th)[:, None]
            half = 0.5 * (th - t0)[:, None]
            nodes = mid + half * xi[None, :]
            partial = (np.cos(nodes) ** self._q * wi[None, :]).sum(axis=1) * half[:, 0]
            out[far] = base + partial
        return out

    def value(self, x):
        """F(x), odd in x, vectorized."""
        x_arr = np.asarray(x, dtype=float)
        theta = np.arctan(np.abs(x_arr))
        res = self._phi(theta) * np.sign(x_arr)
        if np.isscalar(x) or x_arr.ndim == 0:
            return float(res)
        return res

    def derivative(self, x):
        x_arr = np.asarray(x, dtype=float)
        return (1.0 + x_arr * x_arr) ** (-self.p)

    # -- inverse ---------------------------------------------------------

    def _tail_x(self, y_gap: np.ndarray) -> np.ndarray:
        """Asymptotic seed: solve integral_x^inf s^(-2p) ds ~ y_gap."""
        e = 2.0 * self.p - 1.0
        return (e * np.maximum(y_gap, 1e-300)) ** (-1.0 / e)

    def inverse(self, y):
        """F^{-1}(y) for |y| < total/2, vectorized Newton with table seeds."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(np.abs(y_arr) >= self.half):
            raise DomainError(
                f"inverse argument outside (-{self.half!r}, {self.half!r})"
            )
        ay = np.abs(y_arr)
        x = np.interp(ay, self.table_f, self.table_x)
        deep = ay > self.table_f[-1]
        if deep.any():
            x[deep] = np.minimum(self._tail_x(self.half - ay[deep]), 1e12)
        for _ in range(60):
            r = self._phi(np.arctan(x)) - ay
            dx = r * (1.0 + x * x) ** self.p
            x = np.maximum(x - dx, 0.0)
            if np.all(np.abs(dx) <= 1e-12 * (1.0 + np.abs(x))):
                break
        res = x * np.sign(y_arr)
        if np.isscalar(y) or np.asarray(y).ndim == 0:
            return float(res[0])
        return res


@lru_cache(maxsize=4)
def _profile_for(p: float) -> PowerIntegralProfile:
    return PowerIntegralProfile(p)


@dataclass(frozen=True)
class GProfile:
    """Immutable handle on the tabulated G with c0 = 2 G(inf)."""

    c0: float
    half: float
    table: tuple  # (x samples, G samples), strictly increasing

    def g_of(self, x):
        return _profile_for(1.25).value(x)

    def g_inv(self, y):
        return _profile_for(1.25).inverse(y)


@lru_cache(maxsize=1)
def default_profile() -> GProfile:
    prof = _profile_for(1.25)
    return GProfile(c0=prof.total, half=prof.half,
                    table=(tuple(prof.table_x), tuple(prof.table_f)))


def g_of(x, prof: GProfile | None = None):
    """G(x) = integral_0^x (1+s^2)^(-5/4) ds; odd, strictly increasing."""
    prof = prof or default_profile()
    return prof.g_of(x)


def g_inv(y, prof: GProfile | None = None):
    """Inverse of G on (-c0/2, c0/2); raises DomainError outside."""
    prof = prof or default_profile()
    return prof.g_inv(y)


def compute_c0() -> float:
    """c0 = integral_R (1+s^2)^(-5/4) ds via the tangent substitution."""
    return default_profile().c0


def arclength_profile() -> PowerIntegralProfile:
    """Companion table for integral (1+t^2)^(-3/4) dt (arclength sampling)."""
    return _profile_for(0.75)


# ----------------------------------------------------------------------
# Cone threshold constant
# ----------------------------------------------------------------------

#: Absolute error budget of :func:`cone_threshold_sup`.
THRESHOLD_SUP_ABS_ERR = 1e-5


def cone_threshold_ratio(A: float, via: str = "series") -> float:
    """(1/3) A 2F1(1, 3/2; 7/4; -A^2) / 2F1(1/2, 1; 3/4; -A^2) for A > 0.

    ``via='quadrature'`` evaluates the equivalent integral form

        int_0^A t / (sqrt(A-t) (1+t^2)^(5/4)) dt
        / (2 int_0^A 1 / (sqrt(A-t) (1+t^2)^(5/4)) dt)

    with the square-root endpoint removed by substitution; the two routes
    agree to 1e-8.
    """
    if A <= 0.0:
        raise DomainError("cone peak slope A must be > 0")
    if via == "series":
        num = hyp2f1(1.0, 1.5, 1.75, -A * A)
        den = hyp2f1(0.5, 1.0, 0.75, -A * A)
        return A * num / (3.0 * den)
    if via == "quadrature":
        spec = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-14, singular_right=True)
        i0 = integrate(
            lambda t: (1.0 + t * t) ** -1.25 / np.sqrt(A - t), 0.0, A, spec)
        i1 = integrate(
            lambda t: t * (1.0 + t * t) ** -1.25 / np.sqrt(A - t), 0.0, A, spec)
        return i1 / (2.0 * i0)
    raise ValueError(f"unknown route {via!r}")


def cone_threshold_limit() -> float:
    """Closed-form A -> inf limit of the threshold ratio.

    (1/3) Gamma(7/4) Gamma(1/4) / (Gamma(3/4)^2 Gamma(3/2)).
    """
    return (gamma(1.75) * gamma(0.25)
            / (3.0 * gamma(0.75) ** 2 * gamma(1.5)))


def cone_threshold_sweep(a_min: float = 1e-3, a_max: float = 1e4,
                         count: int = 400):
    """Log-spaced sweep of the threshold ratio; returns (A, ratio) arrays."""
    A = np.logspace(math.log10(a_min), math.log10(a_max), count)
    vals = np.array([cone_threshold_ratio(float(a)) for a in A])
    return A, vals


def _golden_max(f, lo: float, hi: float, iters: int = 60) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return max(fc, fd)


@lru_cache(maxsize=1)
def cone_threshold_sup() -> float:
    """Supremum over A > 0 of the threshold ratio, absolute error <= 1e-5.

    Combines a 400-point log sweep refined by golden section with the
    closed-form A -> inf limit; returns the larger of the two.
    """
    A, vals = cone_threshold_sweep()
    i = int(np.argmax(vals))
    lo = A[max(i - 1, 0)]
    hi = A[min(i + 1, len(A) - 1)]
    refined = _golden_max(lambda a: cone_threshold_ratio(a), lo, hi)
    return max(refined, cone_threshold_limit())
