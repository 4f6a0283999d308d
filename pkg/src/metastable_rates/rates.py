"""Decay-rate formulas for the bias and the variance per unit time.

All vectors are indexed by equilibrium, position 0 being the deepest
stable point ``O_1``.  Reports print indices 1-based.

Notation used below, for ``j`` in ``L``:

* ``fV[j]  = inf_A [ f + V(O_j, .) ]`` and ``f2V[j] = inf_A [ 2 f + V(O_j, .) ]``
* ``W[j]   = W(O_j)`` and ``Wp[j] = W(O_1 u O_j)`` (undefined for ``j = 0``)
* ``h1``   = cheapest escape from ``O_1``; ``w = W[0] - min_{j>0} Wp[j]``

Variance rate pieces::

    R1[j] = f2V[j] + W[j] - W[0]
    R2[0] = 2 fV[0] - h1
    R2[j] = 2 fV[j] + W[j] - 2 W[0] + Wp[j]        (j > 0)
    R3[j] = 2 fV[j] + 2 W[j] - 2 W[0] - w
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import CaseParamOutOfRange, HorizonTooSmall
from .graphcalc import min_wgraph_weight


class Regime(str, Enum):
    SINGLE = "SingleCycle"
    MULTI = "Multicycle"

    def __str__(self):
        return self.value


def compute_h(V) -> np.ndarray:
    """Row minima of ``V`` off the diagonal."""
    V = np.array(V, dtype=float)
    np.fill_diagonal(V, np.inf)
    return V.min(axis=1)


def compute_W(V) -> tuple[np.ndarray, np.ndarray]:
    """``W(O_j)`` for every j and ``W(O_1 u O_j)`` for ``j >= 1`` (nan at 0)."""
    V = np.asarray(V, dtype=float)
    l = V.shape[0]
    W = np.array([min_wgraph_weight(V, [j]).weight for j in range(l)])
    Wp = np.full(l, np.nan)
    for j in range(1, l):
        Wp[j] = min_wgraph_weight(V, [0, j]).weight
    return W, Wp


def w_from(W, W_pair) -> float:
    return float(W[0] - np.nanmin(np.asarray(W_pair, dtype=float)[1:]))


def compute_w(V) -> float:
    W, Wp = compute_W(V)
    return w_from(W, Wp)


def regime(h1: float, w: float) -> Regime:
    """Single cycles suffice only when ``h1 > w``; the boundary is multicycle."""
    return Regime.SINGLE if h1 > w else Regime.MULTI


@dataclass
class RateInputs:
    infA_fV: np.ndarray
    infA_2fV: np.ndarray
    W: np.ndarray
    W_pair: np.ndarray
    h1: float
    c: float | None = None
    V: np.ndarray | None = None
    h: np.ndarray | None = None
    stable: np.ndarray | None = None
    f_nonnegative: bool | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.infA_fV = np.asarray(self.infA_fV, dtype=float)
        self.infA_2fV = np.asarray(self.infA_2fV, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        self.W_pair = np.asarray(self.W_pair, dtype=float).copy()
        self.W_pair[0] = np.nan
        l = len(self.W)
        if not (len(self.infA_fV) == len(self.infA_2fV) == len(self.W_pair) == l):
            raise ValueError("all per-equilibrium vectors must have the same length")

    @property
    def l(self) -> int:
        return len(self.W)

    @property
    def w(self) -> float:
        return w_from(self.W, self.W_pair)

    @classmethod
    def from_V(cls, V, infA_fV, infA_2fV=None, c=None, stable=None, f_nonnegative=None):
        """Inputs with every graph quantity computed from ``V``."""
        V = np.asarray(V, dtype=float)
        W, Wp = compute_W(V)
        h = compute_h(V)
        infA_2fV = infA_fV if infA_2fV is None else infA_2fV
        return cls(infA_fV, infA_2fV, W, Wp, float(h[0]), c=c, V=V, h=h,
                   stable=None if stable is None else np.asarray(stable, dtype=bool),
                   f_nonnegative=f_nonnegative,
                   provenance={"W": "computed", "W_pair": "computed", "h1": "computed"})

    @classmethod
    def supplied(cls, infA_fV, W_rel, W1, W_pair, h1, infA_2fV=None, c=None):
        """Inputs from published derived quantities.

        ``W_rel[j] = W(O_j) - W(O_1)``; ``W_pair`` lists ``W(O_1 u O_j)`` for
        ``j >= 2`` only (length ``l - 1``).
        """
        W = np.asarray(W_rel, dtype=float) + float(W1)
        Wp = np.concatenate([[np.nan], np.asarray(W_pair, dtype=float)])
        infA_2fV = infA_fV if infA_2fV is None else infA_2fV
        return cls(infA_fV, infA_2fV, W, Wp, float(h1), c=c,
                   provenance={"W": "supplied", "W_pair": "supplied", "h1": "supplied"})

    @classmethod
    def from_landscape(cls, landscape, A, f=0.0, c=None, eq=None, spacing=None):
        from .landscape import find_equilibria, quasipotential_matrix, set_infima

        eq = find_equilibria(landscape) if eq is None else eq
        V = quasipotential_matrix(landscape, eq).V
        inf = set_infima(landscape, eq, A, f, spacing=spacing)
        nonneg = None if callable(f) else bool(float(f) >= 0)
        out = cls.from_V(V, inf.fV, inf.two_fV, c=c, stable=eq.stable, f_nonnegative=nonneg)
        out.provenance["infima_spacing"] = inf.spacing
        return out

    def band_violations(self, atol: float = 1e-12) -> list[int]:
        """Indices breaking ``fV <= f2V <= 2 fV`` (only meaningful for ``f >= 0``)."""
        if not self.f_nonnegative:
            return []
        bad = (self.infA_2fV > 2 * self.infA_fV + atol) | (self.infA_2fV < self.infA_fV - atol)
        return [int(j) for j in np.flatnonzero(bad)]

    def require_horizon(self):
        if self.c is None:
            return
        need = max(self.h1, self.w)
        if not self.c > need:
            raise HorizonTooSmall(f"c = {self.c} must exceed h1 v w = {need}")


@dataclass
class RateReport:
    h: np.ndarray | None
    h1: float
    w: float
    W: np.ndarray
    W_pair: np.ndarray
    regime: Regime
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    variance_rate: float
    argmin: tuple[int, int]
    bias_rate: float | None
    c: float | None
    provenance: dict
    checks: dict

    def table_rows(self) -> list[tuple]:
        rows = []
        for j in range(len(self.W)):
            rows.append((j + 1, self.W[j], self.W[j] - self.W[0],
                         self.W_pair[j], self.R1[j], self.R2[j], self.R3[j]))
        return rows

    def to_dict(self) -> dict:
        def vec(x):
            return None if x is None else [None if not np.isfinite(v) else float(v) for v in x]

        return {
            "h": vec(self.h),
            "h1": self.h1,
            "w": self.w,
            "W": vec(self.W),
            "W_pair": vec(self.W_pair),
            "regime": self.regime.value,
            "R1": vec(self.R1),
            "R2": vec(self.R2),
            "R3": vec(self.R3),
            "variance_rate": self.variance_rate,
            "argmin": {"j": self.argmin[0], "superscript": self.argmin[1]},
            "bias_rate": self.bias_rate,
            "c": self.c,
            "provenance": dict(self.provenance),
            "checks": dict(self.checks),
        }

    def format(self) -> str:
        def num(v):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return "-"
            # grid infima leave float dust such as 2e-16
            return f"{round(float(v), 10) + 0.0:g}"

        lines = [
            f"regime        {self.regime.value}",
            f"h1            {num(self.h1)}",
            f"w             {num(self.w)}",
            f"variance rate {num(self.variance_rate)}  (j={self.argmin[0]}, superscript {self.argmin[1]})",
            f"bias rate     {num(self.bias_rate)}" + ("" if self.c is None else f"  (c={num(self.c)})"),
            "",
            "j\tW(O_j)\tW(O_j)-W(O_1)\tW(O_1uO_j)\tR1\tR2\tR3",
        ]
        for row in self.table_rows():
            lines.append("\t".join([str(row[0])] + [num(v) for v in row[1:]]))
        if self.regime is Regime.SINGLE:
            lines.append("(R3 not part of the minimum in the single-cycle regime)")
        return "\n".join(lines)


def rate_vectors(inp: RateInputs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fV, f2V, W, Wp = inp.infA_fV, inp.infA_2fV, inp.W, inp.W_pair
    W1 = W[0]
    w = inp.w
    R1 = f2V + W - W1
    R2 = 2 * fV + W - 2 * W1 + Wp
    R2[0] = 2 * fV[0] - inp.h1
    # limit of the m-dependent rate as m + h1 decreases to w
    R3 = 2 * fV + 2 * W - 2 * W1 - w
    return R1, R2, R3


def variance_decay_rates(inputs: RateInputs) -> RateReport:
    """Every piece of the variance lower bound and its minimum.

    Ties in the minimum go to the smallest ``j``, then the smallest
    superscript.
    """
    inputs.require_horizon()
    R1, R2, R3 = rate_vectors(inputs)
    w = inputs.w
    reg = regime(inputs.h1, w)
    stack = [R1, R2] + ([R3] if reg is Regime.MULTI else [])
    best, arg = math.inf, (0, 0)
    for j in range(inputs.l):
        for s, R in enumerate(stack, start=1):
            if R[j] < best:
                best, arg = float(R[j]), (j + 1, s)
    bias = bias_decay_rate(inputs) if inputs.c is not None else None
    checks = {
        "R2_1_consistent": bool(R2[0] == 2 * inputs.infA_fV[0] - inputs.h1),
        "single_cycle_dominance": bool(reg is Regime.MULTI or np.all(R3 >= R2 - 1e-12)),
        "bias_bound_vs_R2": bool(
            2 * np.min(inputs.infA_fV + inputs.W) - 2 * inputs.W[0] - inputs.h1
            >= np.min(R2) - 1e-12),
        "f_band_violations": inputs.band_violations(),
    }
    return RateReport(
        h=inputs.h, h1=inputs.h1, w=w, W=inputs.W, W_pair=inputs.W_pair, regime=reg,
        R1=R1, R2=R2, R3=R3, variance_rate=best, argmin=arg, bias_rate=bias,
        c=inputs.c, provenance=dict(inputs.provenance), checks=checks,
    )


def bias_decay_rate(inputs: RateInputs) -> float:
    """``min_j(fV[j] + W[j]) - W[0] + c - (h1 v w)``; requires ``c``."""
    if inputs.c is None:
        raise HorizonTooSmall("bias rate needs the horizon exponent c")
    inputs.require_horizon()
    lead = float(np.min(inputs.infA_fV + inputs.W) - inputs.W[0])
    return lead + float(inputs.c) - max(inputs.h1, inputs.w)


# reduction to stable points -------------------------------------------------


@dataclass
class ReductionReport:
    parts: dict
    details: dict

    @property
    def ok(self) -> bool:
        return all(self.parts.values())


def stable_reduction_check(V, stable, infA_fV=None, atol: float = 1e-9) -> ReductionReport:
    """Compare graph minima over all equilibria with those over stable ones.

    Graphs over the stable points use the stable-by-stable submatrix of
    ``V``.  Part 1 is evaluated at every equilibrium; part 4 uses
    ``infA_fV`` when given and otherwise the columns of ``V``.
    """
    V = np.asarray(V, dtype=float)
    stable = np.asarray(stable, dtype=bool)
    l = V.shape[0]
    s_idx = [int(i) for i in np.flatnonzero(stable)]
    if not stable[0]:
        raise ValueError("index 0 must be the deepest stable point")
    Vs = V[np.ix_(s_idx, s_idx)]
    ls = len(s_idx)
    W_full = np.array([min_wgraph_weight(V, [j]).weight for j in range(l)])
    W_st = {j: (min_wgraph_weight(Vs, [k]).weight if ls > 1 else 0.0) for k, j in enumerate(s_idx)}

    def close(a, b):
        return abs(a - b) <= atol * max(1.0, abs(a), abs(b))

    # part 1: W(x) at every equilibrium
    p1_full = np.min(W_full[:, None] + V, axis=0)
    p1_st = np.min(W_full[s_idx][:, None] + V[s_idx], axis=0)
    part1 = all(close(a, b) for a, b in zip(p1_full, p1_st))
    part2 = all(close(W_full[j], W_st[j]) for j in s_idx)
    part3 = True
    pairs = {}
    for k, j in enumerate(s_idx[1:], start=1):
        full = min_wgraph_weight(V, [0, j]).weight
        st = min_wgraph_weight(Vs, [0, k]).weight if ls > 2 else 0.0
        pairs[j + 1] = (full, st)
        part3 &= close(full, st)
    if infA_fV is None:
        cols = [V[:, k] for k in range(l)]
    else:
        cols = [np.asarray(infA_fV, dtype=float)]
    part4 = all(close(np.min(col + W_full), np.min(col[s_idx] + W_full[s_idx])) for col in cols)
    return ReductionReport(
        parts={1: bool(part1), 2: bool(part2), 3: bool(part3), 4: bool(part4)},
        details={"W_full": W_full.tolist(), "W_stable": {j + 1: v for j, v in W_st.items()},
                 "W_pair": pairs, "W_x_full": p1_full.tolist(), "W_x_stable": p1_st.tolist()},
    )


# double well closed forms ---------------------------------------------------


CASES = ("I", "II", "III", "IV")


def _check_case(h_L, h_R, case, b):
    if not h_L > h_R > 0:
        raise CaseParamOutOfRange(f"need h_L > h_R > 0, got h_L={h_L}, h_R={h_R}")
    if case not in CASES:
        raise CaseParamOutOfRange(f"unknown case {case!r}")
    if case in ("II", "III") and not (b is not None and 0 < b <= h_R):
        raise CaseParamOutOfRange(f"case {case} needs b in (0, h_R], got {b}")
    if case == "IV" and not (b is not None and b > h_R):
        raise CaseParamOutOfRange(f"case IV needs b > h_R, got {b}")


def doublewell_case_rate(h_L: float, h_R: float, case: str, b: float | None = None) -> float:
    """Closed-form variance rate for the asymmetric double well with ``f = 0``."""
    _check_case(h_L, h_R, case, b)
    if case == "I":
        return h_L - 2 * h_R
    if case in ("II", "III"):
        return h_L + 2 * (b - h_R)
    return h_L + (b - h_R)


def doublewell_case_inputs(h_L: float, h_R: float, case: str, b: float | None = None,
                           c: float | None = None) -> RateInputs:
    """Two-state (stable points only) inputs matching a double-well case."""
    _check_case(h_L, h_R, case, b)
    V = np.array([[0.0, h_L], [h_R, 0.0]])
    inf_1 = {"I": h_L, "II": h_L, "III": h_L + (b or 0.0), "IV": h_L + (b or 0.0)}[case]
    inf_2 = 0.0 if case == "I" else b
    return RateInputs.from_V(V, [inf_1, inf_2], c=c, f_nonnegative=True)


def doublewell_crest_point(landscape) -> float:
    """Point right of ``x_R`` where ``U`` climbs back to ``h_L``."""
    p = landscape.params
    w = p["width"]
    return brentq(lambda x: float(landscape.U(np.array([x]))[0]) - p["h_L"], w, 2 * w, xtol=1e-14)


def doublewell_case_set(landscape, case: str, delta: float) -> list[tuple[float, float]]:
    """A representative set ``A`` for each case on a built-in double well."""
    p = landscape.params
    w = p["width"]
    if case == "I":
        return [(w - w / 4, w + w / 4)]
    if case == "II":
        return [(w / 4, w - max(delta, w / 4))]
    xs = doublewell_crest_point(landscape)
    if case == "III":
        return [(w + max(delta, (xs - w) / 4), xs - (xs - w) / 4)]
    if case == "IV":
        return [(xs + max(delta, (2 * w - xs) / 4), 2 * w - (2 * w - xs) / 4)]
    raise CaseParamOutOfRange(f"unknown case {case!r}")


# worked examples with published derived inputs -------------------------------

EXAMPLE_INPUTS = {
    "example1": dict(infA_fV=[8, 4, 4, 0, 0], W_rel=[0, 4, 2, 6, 3], W1=5,
                     W_pair=[5, 3, 5, 2], h1=4),
    "example2": dict(infA_fV=[4, 0, 0, 0, 5], W_rel=[0, 4, 2, 6, 1], W1=7,
                     W_pair=[7, 5, 7, 2], h1=4),
}

EXAMPLE_EXPECTED = {
    "example1": dict(R1=[8, 8, 6, 6, 3], R2=[12, 12, 8, 6, 0], h1=4, w=3,
                     regime=Regime.SINGLE, variance_rate=0, argmin=(5, 2), bias_c=6, bias=5),
    "example2": dict(R1=[4, 4, 2, 6, 6], R2=[4, 4, 0, 6, 6], R3=[3, 3, -1, 7, 7], h1=4, w=5,
                     regime=Regime.MULTI, variance_rate=-1, argmin=(3, 3), bias_c=7, bias=4),
}


def example_inputs(name: str, c: float | None = None) -> RateInputs:
    return RateInputs.supplied(**EXAMPLE_INPUTS[name], c=c)
