"""Periodic 1-D potential landscapes, their equilibria and quasipotentials.

The diffusion attached to a landscape is

    dX = -U'(X) dt + sqrt(a * eps) dW

on the circle obtained by identifying the two ends of ``[lo, hi]``.  For a
gradient drift in one dimension the quasipotential has a closed form:
``V(x, y) = (2 / a) * (total rise of U along the cheaper way round from x
to y)``.  Descents are free, every climb is paid in full.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PPoly
from scipy.optimize import brentq

from .errors import (
    DegenerateCritical,
    EmptySet,
    NoEquilibria,
    NonUniqueDeepest,
    NotPeriodic,
    OutOfDomain,
)

DEFAULT_SCAN = 20001


@dataclass(frozen=True, eq=False)
class PotentialLandscape:
    """A bounded potential on ``[lo, hi]`` extended periodically.

    ``U`` and ``dU`` must accept numpy arrays.  ``pieces`` is an optional
    piecewise polynomial for ``U`` on ``[pieces.x[0], pieces.x[0] + period]``;
    the simulator evaluates the drift from it inside compiled loops.
    """

    lo: float
    hi: float
    U: Callable[[np.ndarray], np.ndarray]
    dU: Callable[[np.ndarray], np.ndarray]
    noise: float = 2.0
    pieces: PPoly | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    periodic_tol: float = 1e-8

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("empty domain")
        if not self.noise > 0:
            raise ValueError("noise convention a must be positive")
        u = self.U(np.array([self.lo, self.hi]))
        du = self.dU(np.array([self.lo, self.hi]))
        scale = max(1.0, float(np.max(np.abs(u))))
        if abs(u[0] - u[1]) > self.periodic_tol * scale:
            raise NotPeriodic(f"U(lo)={u[0]!r} but U(hi)={u[1]!r}")
        dscale = max(1.0, float(np.max(np.abs(du))))
        if abs(du[0] - du[1]) > self.periodic_tol * dscale * 1e2:
            raise NotPeriodic(f"U'(lo)={du[0]!r} but U'(hi)={du[1]!r}")
        if not np.all(np.isfinite(self.U(self.grid(2001)))):
            raise NotPeriodic("U is not bounded on the domain")

    @property
    def period(self) -> float:
        return self.hi - self.lo

    def grid(self, n: int, endpoint: bool = False) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n, endpoint=endpoint)

    def wrap(self, x):
        return self.lo + np.mod(np.asarray(x, dtype=float) - self.lo, self.period)

    def distance(self, x, y):
        """Distance on the circle."""
        d = np.abs(self.wrap(x) - self.wrap(y))
        return np.minimum(d, self.period - d)

    def d2U(self, x, h: float | None = None):
        """Second difference of ``U`` (used for classification)."""
        h = 1e-4 * self.period if h is None else h
        x = np.asarray(x, dtype=float)
        return (self.U(x + h) - 2.0 * self.U(x) + self.U(x - h)) / (h * h)

    def as_pieces(self) -> PPoly:
        """Piecewise polynomial form; analytic landscapes are resampled."""
        if self.pieces is not None:
            return self.pieces
        xs = np.linspace(self.lo, self.hi, 4097)
        ys = self.U(xs)
        ys[-1] = ys[0]
        return CubicSpline(xs, ys, bc_type="periodic")

    def critical_points(self, n_scan: int = DEFAULT_SCAN, xtol: float = 1e-13) -> np.ndarray:
        return self._critical_points(n_scan, xtol)

    @cached_property
    def _crit_default(self) -> np.ndarray:
        return self._scan_roots(DEFAULT_SCAN, 1e-13)

    def _critical_points(self, n_scan, xtol):
        if n_scan == DEFAULT_SCAN and xtol == 1e-13:
            return self._crit_default
        return self._scan_roots(n_scan, xtol)

    def _scan_roots(self, n_scan, xtol):
        xs = np.linspace(self.lo, self.hi, n_scan)
        s = self.dU(xs)
        s[-1] = s[0]
        roots = []
        f = lambda x: float(self.dU(np.array([x]))[0])
        for k in range(n_scan - 1):
            if s[k] == 0.0:
                roots.append(xs[k])
            elif s[k] * s[k + 1] < 0.0:
                roots.append(brentq(f, xs[k], xs[k + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
        return np.array(sorted(roots), dtype=float)


# constructors ---------------------------------------------------------------


def _wrapped_callables(pp: PPoly, period: float):
    base = float(pp.x[0])
    dpp = pp.derivative()

    def U(x):
        x = np.asarray(x, dtype=float)
        return pp(base + np.mod(x - base, period))

    def dU(x):
        x = np.asarray(x, dtype=float)
        return dpp(base + np.mod(x - base, period))

    return U, dU


def quintic_extrema_pieces(xs: Sequence[float], us: Sequence[float], period: float) -> PPoly:
    """C^2 periodic quintic spline whose only critical points are the knots.

    ``xs`` are the positions of alternating minima and maxima (cyclically),
    ``us`` the potential values there.  Each knot gets the curvature
    ``±6 * min(|dU|/dx^2)`` over its two adjacent segments, which keeps every
    segment strictly monotone and every extremum non-degenerate.
    """
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    n = len(xs)
    if n < 2 or n % 2:
        raise ValueError("need an even number (>= 2) of alternating extrema")
    if np.any(np.diff(xs) <= 0) or xs[-1] - xs[0] >= period:
        raise ValueError("extrema positions must be strictly increasing within one period")
    xe = np.append(xs, xs[0] + period)
    ue = np.append(us, us[0])
    dx = np.diff(xe)
    du = np.diff(ue)
    if np.any(du == 0) or np.any(np.sign(du[1:]) == np.sign(du[:-1])) or np.sign(du[0]) == np.sign(du[-1]):
        raise ValueError("extrema values must alternate between minima and maxima")
    steep = np.abs(du) / dx**2
    kappa = np.empty(n)
    for k in range(n):
        left = steep[k - 1]
        right = steep[k]
        # a minimum is followed by a rise
        sign = 1.0 if du[k] > 0 else -1.0
        kappa[k] = sign * 6.0 * min(left, right)
    kappa_e = np.append(kappa, kappa[0])
    coefs = np.zeros((6, n))
    for k in range(n):
        D, ua, d, ka, kb = dx[k], ue[k], du[k], kappa_e[k], kappa_e[k + 1]
        s_coef = [
            ua,
            0.0,
            0.5 * ka * D**2,
            10 * d - 1.5 * ka * D**2 + 0.5 * kb * D**2,
            -15 * d + 1.5 * ka * D**2 - kb * D**2,
            6 * d - 0.5 * ka * D**2 + 0.5 * kb * D**2,
        ]
        for p in range(6):
            coefs[5 - p, k] = s_coef[p] / D**p
    return PPoly(coefs, xe)


def from_extrema(
    xs: Sequence[float],
    us: Sequence[float],
    lo: float,
    hi: float,
    noise: float = 2.0,
    name: str = "extrema",
    params: dict | None = None,
) -> PotentialLandscape:
    """Landscape with prescribed alternating extrema (exact positions and heights)."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < lo) or np.any(xs >= hi):
        raise OutOfDomain("extrema must lie in [lo, hi)")
    pp = quintic_extrema_pieces(xs, us, hi - lo)
    U, dU = _wrapped_callables(pp, hi - lo)
    return PotentialLandscape(lo, hi, U, dU, noise=noise, pieces=pp, name=name,
                              params=dict(params or {}, extrema=[list(map(float, xs)), list(map(float, us))]))


def from_knots(xs: Sequence[float], us: Sequence[float], noise: float = 2.0, name: str = "knots") -> PotentialLandscape:
    """Periodic cubic spline through ``(xs, us)``; the ends of ``xs`` bound the domain."""
    xs = np.asarray(xs, dtype=float)
    us = np.array(us, dtype=float)
    if abs(us[0] - us[-1]) > 1e-12 * max(1.0, abs(us[0])):
        raise NotPeriodic("first and last knot values must agree")
    us[-1] = us[0]
    sp = CubicSpline(xs, us, bc_type="periodic")
    U, dU = _wrapped_callables(sp, xs[-1] - xs[0])
    return PotentialLandscape(float(xs[0]), float(xs[-1]), U, dU, noise=noise, pieces=sp, name=name,
                              params={"knots": [list(map(float, xs)), list(map(float, us))]})


def double_well(h_L: float, h_R: float, width: float = 0.3, top: float | None = None,
                noise: float = 2.0) -> PotentialLandscape:
    """Asymmetric double well on ``[-2w, 2w]``.

    Minima at ``x_L = -w`` (U = 0) and ``x_R = w`` (U = h_L - h_R), the
    separating maximum at 0 (U = h_L) and an outer barrier at the domain ends
    (U = ``top``, default ``2 h_L``) that closes the circle.
    """
    if not h_L > h_R > 0:
        raise ValueError("need h_L > h_R > 0")
    top = 2.0 * h_L if top is None else float(top)
    if not top > h_L:
        raise ValueError("outer barrier must be higher than h_L")
    w = float(width)
    return from_extrema(
        [-2 * w, -w, 0.0, w],
        [top, 0.0, h_L, h_L - h_R],
        -2 * w,
        2 * w,
        noise=noise,
        name="double_well",
        params={"h_L": h_L, "h_R": h_R, "width": w, "top": top},
    )


def cosine_well(amplitude: float = 1.0, noise: float = 2.0) -> PotentialLandscape:
    """``U(x) = A (1 - cos 2 pi x)`` on ``[0, 1]``."""
    A = float(amplitude)
    two_pi = 2.0 * math.pi
    return PotentialLandscape(
        0.0, 1.0,
        lambda x: A * (1.0 - np.cos(two_pi * np.asarray(x, dtype=float))),
        lambda x: A * two_pi * np.sin(two_pi * np.asarray(x, dtype=float)),
        noise=noise, name="cosine", params={"amplitude": A},
    )


def three_well(noise: float = 2.0) -> PotentialLandscape:
    """Fixed three-well test landscape on ``[0, 3]`` with depths 0, 0.4, 0.7."""
    return from_extrema(
        [0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
        [1.6, 0.0, 1.0, 0.4, 1.3, 0.7],
        0.0, 3.0, noise=noise, name="three_well",
    )


def random_extrema_landscape(rng: np.random.Generator, n_wells: int | None = None,
                             noise: float = 2.0) -> PotentialLandscape:
    """Random alternating landscape on ``[0, 1]`` with 2-4 wells."""
    n_wells = int(rng.integers(2, 5)) if n_wells is None else n_wells
    n = 2 * n_wells
    gaps = rng.uniform(0.5, 1.5, size=n)
    xs = np.concatenate([[0.0], np.cumsum(gaps)[:-1]]) / gaps.sum()
    xs = xs + rng.uniform(0, 1) * gaps[-1] / gaps.sum()
    xs = np.sort(np.mod(xs, 1.0))
    mins = rng.uniform(0.0, 1.0, size=n_wells)
    us = np.empty(n)
    # even slots are minima, odd slots maxima above both neighbours
    us[0::2] = mins
    for k in range(n_wells):
        us[2 * k + 1] = max(mins[k], mins[(k + 1) % n_wells]) + rng.uniform(0.1, 1.0)
    if np.argmin(xs) != 0:
        order = np.argsort(xs)
        xs, us = xs[order], us[order]
    return from_extrema(xs, us, 0.0, 1.0, noise=noise, name="random_extrema")


def random_knot_landscape(rng: np.random.Generator, n_knots: int | None = None,
                          noise: float = 2.0) -> PotentialLandscape:
    """Random periodic cubic spline through 6-12 knots on ``[0, 1]``."""
    n_knots = int(rng.integers(6, 13)) if n_knots is None else n_knots
    xs = np.sort(rng.uniform(0, 1, size=n_knots - 2))
    xs = np.concatenate([[0.0], xs, [1.0]])
    while np.min(np.diff(xs)) < 0.02:
        xs = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, size=n_knots - 2)), [1.0]])
    us = rng.uniform(0.0, 1.0, size=n_knots)
    us[-1] = us[0]
    return from_knots(xs, us, noise=noise, name="random_knots")


# equilibria -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EquilibriumSet:
    """Equilibria indexed the usual way: ``O_1`` first, then the remaining
    stable points, then the unstable ones (each group in position order)."""

    points: np.ndarray
    stable: np.ndarray
    index_of_O1: int = 0
    W: np.ndarray | None = None

    @property
    def l(self) -> int:
        return len(self.points)

    @property
    def stable_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.stable)]

    @property
    def unstable_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(~self.stable)]

    def in_position_order(self) -> list[int]:
        return [int(i) for i in np.argsort(self.points, kind="stable")]

    def min_separation(self, landscape: PotentialLandscape) -> float:
        if self.l < 2:
            return landscape.period
        p = np.sort(self.points)
        gaps = np.diff(np.append(p, p[0] + landscape.period))
        return float(gaps.min())


def find_equilibria(landscape: PotentialLandscape, tol: float = 1e-6,
                    n_scan: int = DEFAULT_SCAN) -> EquilibriumSet:
    """Locate and classify the zeros of ``U'``; pick the deepest stable point.

    ``tol`` bounds ``|U''|`` from below at every root.  The deepest point is
    the stable argmin of ``W(O_j)``; ties are rejected.
    """
    from .graphcalc import min_wgraph_weight

    roots = landscape.critical_points(n_scan=n_scan)
    if len(roots) == 0:
        raise NoEquilibria(f"U' has no zero on [{landscape.lo}, {landscape.hi}]")
    curv = landscape.d2U(roots)
    flat = np.abs(curv) < tol
    if np.any(flat):
        raise DegenerateCritical(f"|U''| < {tol} at x = {roots[flat].tolist()}")
    stable = curv > 0
    if len(roots) < 2 or not np.any(stable):
        raise NoEquilibria("need at least one stable and one unstable equilibrium")
    # on a circle non-degenerate critical points must alternate
    if np.any(stable == np.roll(stable, -1)):
        raise DegenerateCritical("stable and unstable points do not alternate")

    order = np.argsort(~stable, kind="stable")  # stable first, position order kept
    pts = roots[order]
    st = stable[order]
    V = _pairwise_quasipotential(landscape, pts)
    W = np.array([min_wgraph_weight(V, [j]).weight for j in range(len(pts))])
    s_idx = np.flatnonzero(st)
    Ws = W[s_idx]
    best = Ws.min()
    scale = max(1.0, float(np.max(np.abs(W[np.isfinite(W)]))))
    ties = s_idx[np.abs(Ws - best) <= 1e-9 * scale]
    if len(ties) > 1:
        raise NonUniqueDeepest(
            f"stable points {pts[ties].tolist()} tie for min W = {best}")
    o1 = int(ties[0])
    rest_stable = [int(i) for i in s_idx if i != o1]
    unstable = [int(i) for i in np.flatnonzero(~st)]
    perm = [o1] + rest_stable + unstable
    return EquilibriumSet(points=pts[perm], stable=st[perm], index_of_O1=0, W=W[perm])


# quasipotential -------------------------------------------------------------


def _rise_along(landscape: PotentialLandscape, x: float, ys: np.ndarray, direction: int) -> np.ndarray:
    """Total increase of U when sweeping from x to each y in one direction."""
    P = landscape.period
    crit = landscape.critical_points()
    if direction > 0:
        dist_y = np.mod(ys - x, P)
        dist_c = np.mod(crit - x, P)
    else:
        dist_y = np.mod(x - ys, P)
        dist_c = np.mod(x - crit, P)
    order = np.argsort(dist_c)
    dist_c = dist_c[order]
    keep = dist_c > 0
    dist_c = dist_c[keep]
    cpos = crit[order][keep]
    bp_dist = np.concatenate([[0.0], dist_c])
    bp_U = np.concatenate([landscape.U(np.array([x])), landscape.U(cpos)])
    cum = np.concatenate([[0.0], np.cumsum(np.maximum(np.diff(bp_U), 0.0))])
    k = np.searchsorted(bp_dist, dist_y, side="right") - 1
    return cum[k] + np.maximum(landscape.U(ys) - bp_U[k], 0.0)


def quasipotential_from(landscape: PotentialLandscape, x: float, ys) -> np.ndarray:
    """``V(x, y)`` for an array of targets (cheaper of the two directions)."""
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    _check_domain(landscape, np.append(ys, x))
    ys = landscape.wrap(ys)
    x = float(landscape.wrap(x))
    right = _rise_along(landscape, x, ys, +1)
    left = _rise_along(landscape, x, ys, -1)
    v = (2.0 / landscape.noise) * np.minimum(right, left)
    v[landscape.distance(ys, x) == 0.0] = 0.0
    return v


def quasipotential_1d(landscape: PotentialLandscape, x: float, y: float) -> float:
    return float(quasipotential_from(landscape, x, [y])[0])


def _check_domain(landscape, xs):
    eps = 1e-12 * landscape.period
    if np.any(xs < landscape.lo - eps) or np.any(xs > landscape.hi + eps):
        raise OutOfDomain(f"points outside [{landscape.lo}, {landscape.hi}]")


def _pairwise_quasipotential(landscape, pts):
    V = np.vstack([quasipotential_from(landscape, p, pts) for p in pts])
    np.fill_diagonal(V, 0.0)
    return V


@dataclass(frozen=True, eq=False)
class QuasipotentialMatrix:
    V: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.V if dtype is None else self.V.astype(dtype)

    @property
    def l(self) -> int:
        return self.V.shape[0]

    def violations(self, atol: float = 1e-12) -> list[str]:
        """Names of the matrix invariants that fail (empty when valid)."""
        V = self.V
        out = []
        if np.any(np.diag(V) != 0):
            out.append("diagonal")
        if np.any(V < -atol):
            out.append("nonnegative")
        # V[i,k] <= V[i,j] + V[j,k] for all triples
        via = V[:, :, None] + V[None, :, :]
        if np.any(V[:, None, :] > via + atol * max(1.0, float(np.max(V)))):
            out.append("triangle")
        return out


def quasipotential_matrix(landscape: PotentialLandscape, eq: EquilibriumSet) -> QuasipotentialMatrix:
    return QuasipotentialMatrix(_pairwise_quasipotential(landscape, eq.points))


@dataclass(frozen=True)
class SetInfima:
    """``inf_A [f + V(O_j, .)]`` and ``inf_A [2 f + V(O_j, .)]`` per equilibrium."""

    fV: np.ndarray
    two_fV: np.ndarray
    spacing: float
    n_points: int


def _set_points(landscape, eq, A, spacing):
    if not A:
        raise EmptySet("A has no intervals")
    chunks = []
    extra = np.concatenate([eq.points, landscape.critical_points()])
    for a, b in A:
        if b < a:
            raise EmptySet(f"interval [{a}, {b}] is empty")
        _check_domain(landscape, np.array([a, b]))
        n = max(2, int(math.ceil((b - a) / spacing)) + 1)
        chunks.append(np.linspace(a, b, n))
        chunks.append(extra[(extra >= a) & (extra <= b)])
    return np.unique(np.concatenate(chunks))


def _as_f(f):
    if callable(f):
        return lambda x: np.broadcast_to(np.asarray(f(x), dtype=float), np.shape(x))
    c = float(f)
    return lambda x: np.full(np.shape(x), c)


def set_infima(landscape: PotentialLandscape, eq: EquilibriumSet, A, f=0.0,
               spacing: float | None = None) -> SetInfima:
    """Both infima for every equilibrium, evaluated on a grid over ``A``.

    The grid is uniform with the reported spacing and also contains every
    equilibrium and critical point of ``U`` inside ``A``.
    """
    spacing = landscape.period / 1e4 if spacing is None else float(spacing)
    xs = _set_points(landscape, eq, A, spacing)
    fx = _as_f(f)(xs)
    fV = np.empty(eq.l)
    two_fV = np.empty(eq.l)
    for j, p in enumerate(eq.points):
        v = quasipotential_from(landscape, p, xs)
        fV[j] = np.min(fx + v)
        two_fV[j] = np.min(2 * fx + v)
    return SetInfima(fV, two_fV, spacing, len(xs))


def quasipotential_to_set(landscape: PotentialLandscape, eq: EquilibriumSet, j: int, A, f=0.0,
                          spacing: float | None = None) -> tuple[float, float]:
    """``(inf_A [f + V(O_j, .)], inf_A [2 f + V(O_j, .)])`` for one index."""
    spacing = landscape.period / 1e4 if spacing is None else float(spacing)
    xs = _set_points(landscape, eq, A, spacing)
    fx = _as_f(f)(xs)
    v = quasipotential_from(landscape, eq.points[j], xs)
    return float(np.min(fx + v)), float(np.min(2 * fx + v))


def grid_quasipotential_oracle(landscape: PotentialLandscape, x: float, ys,
                               n: int = 20000) -> tuple[np.ndarray, float, float]:
    """Shortest path on a uniform ring of ``n`` nodes, edge cost = uphill step.

    Independent of the critical-point machinery; used as a test oracle.
    ``x`` and ``ys`` are snapped to the nearest grid node.
    """
    nodes = landscape.lo + landscape.period * np.arange(n) / n
    Ug = landscape.U(nodes)
    up_right = np.maximum(np.roll(Ug, -1) - Ug, 0.0)   # i -> i+1
    up_left = np.maximum(np.roll(Ug, 1) - Ug, 0.0)     # i -> i-1
    i0 = int(np.round((landscape.wrap(x) - landscape.lo) / landscape.period * n)) % n
    # on a ring with nonnegative costs the shortest path never turns around
    right = np.roll(np.concatenate([[0.0], np.cumsum(np.roll(up_right, -i0))[:-1]]), i0)
    rl = np.roll(up_left, -i0)
    left_from = np.concatenate([[0.0], np.cumsum(rl[::-1][:-1])])  # distance to i0-1, i0-2, ...
    left = np.empty(n)
    left[(i0 - np.arange(n)) % n] = left_from
    best = np.minimum(right, left)
    idx = np.round((landscape.wrap(np.asarray(ys, dtype=float)) - landscape.lo) / landscape.period * n).astype(int) % n
    return (2.0 / landscape.noise) * best[idx], landscape.period / n, float(np.max(np.abs(np.diff(np.append(Ug, Ug[0])))))
