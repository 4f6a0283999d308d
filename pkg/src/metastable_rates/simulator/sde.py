"""Euler-Maruyama integration of the small-noise gradient diffusion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from ..errors import OutOfDomain, StepUnstable
from ..landscape import EquilibriumSet, PotentialLandscape, find_equilibria
from .kernels import em_chunk, indicator_values

CHUNK = 1 << 20


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Independent counter-based stream for one replica."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DriftTable:
    breaks: np.ndarray
    dcoef: np.ndarray
    period: float
    max_abs_dU: float
    max_abs_d2U: float

    @classmethod
    def from_landscape(cls, landscape: PotentialLandscape) -> "DriftTable":
        pp = landscape.as_pieces()
        d1 = pp.derivative()
        d2 = d1.derivative()
        xs = np.linspace(pp.x[0], pp.x[0] + landscape.period, 20001)
        return cls(
            np.ascontiguousarray(d1.x, dtype=float),
            np.ascontiguousarray(d1.c, dtype=float),
            landscape.period,
            float(np.max(np.abs(d1(xs)))),
            float(np.max(np.abs(d2(xs)))),
        )

    @property
    def base(self) -> float:
        return float(self.breaks[0])


def default_dt(eps: float, delta: float, noise: float, max_abs_d2U: float) -> float:
    """Largest step resolving both the delta-balls and the gradient stiffness."""
    cands = [0.01 / max_abs_d2U] if max_abs_d2U > 0 else []
    if eps > 0:
        cands.append(delta**2 / (10.0 * noise * eps))
    return min(cands) if cands else 1e-3


@dataclass
class SdeRun:
    """One replica's configuration.

    Give either ``T`` or ``c`` (with ``T = exp(c / eps)``), or neither and
    use ``n_cycles`` for a cycle-count run.
    """

    landscape: PotentialLandscape
    eps: float
    delta: float
    seed: int = 0
    replica: int = 0
    dt: float | None = None
    T: float | None = None
    c: float | None = None
    n_cycles: int | None = None
    start: float | None = None
    burn_in: int = 1
    complete_last: bool = False
    max_steps: int | None = None
    eq: EquilibriumSet | None = None
    drift: DriftTable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.eq is None:
            self.eq = find_equilibria(self.landscape)
        if self.drift is None:
            self.drift = DriftTable.from_landscape(self.landscape)
        if self.dt is None:
            self.dt = default_dt(self.eps, self.delta, self.landscape.noise, self.drift.max_abs_d2U)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.drift.max_abs_dU * self.dt > self.landscape.period / 2:
            raise StepUnstable(
                f"|U'| dt = {self.drift.max_abs_dU * self.dt:g} exceeds half the domain")
        sep = self.eq.min_separation(self.landscape)
        if not self.delta < sep / 4:
            raise ValueError(f"delta = {self.delta} must be below a quarter of the "
                             f"minimum equilibrium separation {sep:g}")
        if self.T is None and self.c is not None:
            self.T = math.exp(self.c / self.eps)
        if self.start is None:
            self.start = default_start(self.landscape, self.eq, self.delta)
        lo, hi = self.landscape.lo, self.landscape.hi
        if not lo <= self.start <= hi:
            raise OutOfDomain(f"start {self.start} outside [{lo}, {hi}]")

    @property
    def horizon_steps(self) -> int | None:
        return None if self.T is None else int(round(self.T / self.dt))

    @property
    def noise_sd(self) -> float:
        return math.sqrt(self.landscape.noise * self.eps * self.dt)

    def describe(self) -> dict:
        return {
            "landscape": self.landscape.name,
            "landscape_params": {k: v for k, v in self.landscape.params.items()},
            "eps": self.eps, "delta": self.delta, "dt": self.dt, "T": self.T, "c": self.c,
            "n_cycles": self.n_cycles, "seed": self.seed, "replica": self.replica,
            "start": self.start, "burn_in": self.burn_in, "max_steps": self.max_steps,
            "noise": self.landscape.noise,
        }


def default_start(landscape: PotentialLandscape, eq: EquilibriumSet, delta: float) -> float:
    """Point on the delta-sphere of ``O_1`` on the side of its lower barrier."""
    x1 = float(eq.points[0])
    u_r = float(landscape.U(np.array([x1 + 2 * delta]))[0])
    u_l = float(landscape.U(np.array([x1 - 2 * delta]))[0])
    side = 1.0 if u_r <= u_l else -1.0
    return float(landscape.wrap(x1 + side * delta))


def to_window(run: SdeRun, x: float) -> float:
    base, P = run.drift.base, run.drift.period
    return base + (x - base) % P


def integrate_path(run: SdeRun, n_steps: int | None = None, chunk: int = CHUNK,
                   gen: np.random.Generator | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_step_index, samples)`` chunks of the discretized path.

    ``X_{k+1} = X_k - U'(X_k) dt + sqrt(a eps dt) xi_k`` with positions kept
    in one period.  Runs forever when ``n_steps`` is None.
    """
    gen = replica_generator(run.seed, run.replica) if gen is None else gen
    x = to_window(run, float(run.start))
    d = run.drift
    sd = run.noise_sd
    done = 0
    buf = np.empty(chunk)
    while n_steps is None or done < n_steps:
        n = chunk if n_steps is None else min(chunk, n_steps - done)
        x = em_chunk(x, n, run.dt, sd, d.breaks, d.dcoef, d.period, gen, buf)
        yield done, buf[:n].copy()
        done += n


class Integrand:
    """``g(x) = exp(-f(x)/eps) 1_A(x)`` evaluated on sample arrays."""

    def __init__(self, eps: float, A=None, f=0.0, landscape: PotentialLandscape | None = None):
        self.eps = float(eps)
        self.A = None if A is None else [(float(a), float(b)) for a, b in A]
        self.f = f
        self.landscape = landscape

    def indicator(self, xs: np.ndarray) -> np.ndarray:
        if self.A is None:
            return np.ones(xs.shape, dtype=bool)
        if self.landscape is not None:
            lo, P = self.landscape.lo, self.landscape.period
            xs = lo + np.mod(xs - lo, P)
        m = np.zeros(xs.shape, dtype=bool)
        for a, b in self.A:
            m |= (xs >= a) & (xs <= b)
        return m

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        if not callable(self.f) and self.eps > 0:
            val = math.exp(-float(self.f) / self.eps)
            if self.A is None:
                return np.full(xs.shape, val)
            if self.landscape is not None:
                # compiled fast path for the common constant-f case
                return indicator_values(np.ascontiguousarray(xs, dtype=float), self.landscape.lo,
                                        self.landscape.period, np.array(self.A, dtype=float).reshape(-1, 2),
                                        val, np.empty(len(xs)))
        ind = self.indicator(xs)
        if callable(self.f):
            fx = np.asarray(self.f(xs), dtype=float)
            with np.errstate(over="ignore"):
                return np.where(ind, np.exp(-fx / self.eps), 0.0)
        if self.eps == 0:
            val = 1.0 if float(self.f) == 0 else (0.0 if float(self.f) > 0 else math.inf)
        else:
            val = math.exp(-float(self.f) / self.eps)
        return ind * val

    @property
    def sup(self) -> float:
        if callable(self.f):
            return math.inf
        return math.exp(-float(self.f) / self.eps) if self.eps > 0 else 1.0


def empirical_measure_integral(stream, g: Callable[[np.ndarray], np.ndarray], T: float, dt: float) -> float:
    """``(1/T) * sum g(X_k) dt`` over the samples in ``[0, T)`` (left endpoints)."""
    need = int(round(T / dt))
    total = 0.0
    seen = 0
    for _, xs in stream:
        take = min(len(xs), need - seen)
        total += float(np.sum(g(xs[:take]))) * dt
        seen += take
        if seen >= need:
            break
    if seen < need:
        raise ValueError("stream ended before T")
    return total / (need * dt)
