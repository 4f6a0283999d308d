"""Regenerative cycles, the embedded chain and multicycles."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoCompleteCycle, RegimeMismatch
from .kernels import BURN, CUR, CYC_START, N_INT_STATE, SEQ_LEN, detect_chunk, em_chunk
from .sde import CHUNK, Integrand, SdeRun, replica_generator, to_window

CYCLE_BUF = 4096
SEQ_BUF = 1 << 16
CUR_SEQ_BUF = 1 << 14


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CycleRecord:
    duration: float
    integral_S: float
    excursion_sequence: tuple[int, ...]
    visits: tuple[int, ...]


@dataclass(frozen=True)
class MulticycleRecord:
    member_count: int
    duration: float
    integral_S: float


@dataclass
class CycleTable:
    """Columnar storage for many cycles; step indices are absolute."""

    start: np.ndarray
    end: np.ndarray
    S: np.ndarray
    visits: np.ndarray
    seqs: list[tuple[int, ...]]
    truncated: np.ndarray
    dt: float

    @classmethod
    def empty(cls, l: int, dt: float) -> "CycleTable":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros((0, l), np.int64),
                   [], np.zeros(0, bool), dt)

    def __len__(self):
        return len(self.S)

    @property
    def duration(self) -> np.ndarray:
        return (self.end - self.start) * self.dt

    def records(self) -> list[CycleRecord]:
        d = self.duration
        return [CycleRecord(float(d[i]), float(self.S[i]), self.seqs[i], tuple(int(v) for v in self.visits[i]))
                for i in range(len(self))]

    def take(self, idx) -> "CycleTable":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return CycleTable(self.start[idx], self.end[idx], self.S[idx], self.visits[idx],
                          [self.seqs[i] for i in idx], self.truncated[idx], self.dt)

    @staticmethod
    def concat(parts: list["CycleTable"], l: int, dt: float) -> "CycleTable":
        if not parts:
            return CycleTable.empty(l, dt)
        return CycleTable(
            np.concatenate([p.start for p in parts]), np.concatenate([p.end for p in parts]),
            np.concatenate([p.S for p in parts]), np.concatenate([p.visits for p in parts]),
            [s for p in parts for s in p.seqs], np.concatenate([p.truncated for p in parts]), dt)


class CycleDetector:
    """Stateful wrapper around the compiled detector."""

    def __init__(self, run: SdeRun, g: Integrand, start_step: int = 0, burn_in: int = 0):
        self.run = run
        self.g = g
        eq = run.eq
        l = eq.l
        self.l = l
        self.pts = np.array([to_window(run, p) for p in eq.points])
        self.st = np.zeros(N_INT_STATE, np.int64)
        self.st[CUR] = 0
        self.st[CYC_START] = start_step
        self.st[SEQ_LEN] = 1
        self.st[BURN] = burn_in
        self.s_acc = np.zeros(1)
        self.visits_cur = np.zeros(l, np.int64)
        self.visits_cur[0] = 1
        self.trans = np.zeros((l, l), np.int64)
        self.cur_seq = np.zeros(CUR_SEQ_BUF, np.int64)
        self._o_start = np.empty(CYCLE_BUF, np.int64)
        self._o_end = np.empty(CYCLE_BUF, np.int64)
        self._o_S = np.empty(CYCLE_BUF)
        self._o_vis = np.empty((CYCLE_BUF, l), np.int64)
        self._o_seq = np.empty(SEQ_BUF, np.int64)
        self._o_len = np.empty(CYCLE_BUF, np.int64)

    def feed(self, g0: int, xs: np.ndarray, gx: np.ndarray | None = None) -> CycleTable:
        gx = self.g(xs) if gx is None else gx
        parts = []
        off = 0
        n = len(xs)
        while True:
            done, nc, ns = detect_chunk(
                xs[off:], gx[off:], self.run.dt, g0 + off, self.pts, self.run.delta,
                self.run.drift.period, self.st, self.s_acc, self.visits_cur, self.trans,
                self.cur_seq, self._o_start, self._o_end, self._o_S, self._o_vis,
                self._o_seq, self._o_len)
            if nc:
                lens = self._o_len[:nc]
                seqs, p = [], 0
                for L in np.abs(lens):
                    seqs.append(tuple(int(v) for v in self._o_seq[p:p + L]))
                    p += L
                parts.append(CycleTable(self._o_start[:nc].copy(), self._o_end[:nc].copy(),
                                        self._o_S[:nc].copy(), self._o_vis[:nc].copy(), seqs,
                                        lens < 0, self.run.dt))
            off += done
            if off >= n:
                break
        return CycleTable.concat(parts, self.l, self.run.dt)


def detect_cycles(run: SdeRun, stream, g: Integrand | None = None, max_cycles: int | None = None,
                  n_steps: int | None = None) -> list[CycleRecord]:
    """Cycles found in a trajectory stream (no burn-in, clock at the stream start).

    The segment after the last return to ``O_1`` is incomplete and dropped.
    """
    g = Integrand(run.eps) if g is None else g
    det = CycleDetector(run, g)
    parts = []
    count = 0
    seen = 0
    for g0, xs in stream:
        if n_steps is not None:
            xs = xs[: max(0, n_steps - seen)]
        tab = det.feed(g0, xs)
        parts.append(tab)
        count += len(tab)
        seen += len(xs)
        if (max_cycles is not None and count >= max_cycles) or (n_steps is not None and seen >= n_steps):
            break
    tab = CycleTable.concat(parts, det.l, run.dt)
    if len(tab) == 0:
        raise NoCompleteCycle(f"no complete cycle at eps = {run.eps}")
    recs = tab.records()
    return recs if max_cycles is None else recs[:max_cycles]


@dataclass
class ReplicaResult:
    """Everything measured on one replica after burn-in.

    Times are measured from the end of the burn-in cycles.  ``cycles``
    holds the complete cycles inside ``[0, T]`` (or the first ``n_cycles``);
    ``overshoot`` is the cycle straddling ``T`` when it was completed.
    """

    replica: int
    seed: int
    eps: float
    dt: float
    T: float | None
    origin_step: int
    steps_total: int
    cycles: CycleTable
    N_T: int | None
    integral: float | None
    overshoot: CycleTable | None
    trans: np.ndarray
    incomplete: bool
    config: dict = field(default_factory=dict)

    @property
    def rho(self) -> float | None:
        """Empirical-measure integral ``(1/T) int_0^T g(X_t) dt``."""
        return None if self.integral is None else self.integral / self.T

    @property
    def upper_sum(self) -> float | None:
        if self.overshoot is None or len(self.overshoot) == 0:
            return None
        return float(self.cycles.S.sum() + self.overshoot.S.sum())

    @property
    def lower_sum(self) -> float:
        return float(self.cycles.S.sum())


def simulate_replica(run: SdeRun, g: Integrand | None = None, chunk: int = CHUNK) -> ReplicaResult:
    """Run one replica: burn-in, then a horizon or a cycle count."""
    g = Integrand(run.eps) if g is None else g
    gen = replica_generator(run.seed, run.replica)
    det = CycleDetector(run, g, burn_in=run.burn_in)
    d = run.drift
    sd = run.noise_sd
    x = to_window(run, float(run.start))
    buf = np.empty(chunk)
    step = 0
    origin = 0 if run.burn_in == 0 else None
    burned = 0
    parts: list[CycleTable] = []
    n_cycles_kept = 0
    integral = 0.0
    NT = run.horizon_steps
    overshoot = None
    incomplete = False
    trans_total = np.zeros((run.eq.l, run.eq.l), np.int64)
    while True:
        n = chunk
        if run.max_steps is not None:
            n = min(n, run.max_steps - step)
            if n <= 0:
                incomplete = True
                break
        if origin is not None and NT is not None and not run.complete_last:
            n = min(n, origin + NT - step)
        x = em_chunk(x, n, run.dt, sd, d.breaks, d.dcoef, d.period, gen, buf)
        xs = buf[:n]
        gx = g(xs)
        tab = det.feed(step, xs, gx)
        if origin is None:
            # discard burn-in cycles, move the clock origin to the last one's end
            k = min(len(tab), run.burn_in - burned)
            burned += k
            if burned == run.burn_in and k > 0:
                origin = int(tab.end[k - 1])
                tab = tab.take(np.arange(k, len(tab)))
            else:
                step += n
                continue
        if NT is not None:
            lo = max(origin, step) - step
            hi = min(origin + NT, step + n) - step
            if hi > lo:
                integral += float(np.sum(gx[lo:hi])) * run.dt
            inside = tab.end <= origin + NT
            kept = tab.take(inside)
            parts.append(kept)
            n_cycles_kept += len(kept)
            if not inside.all():
                overshoot = tab.take(np.flatnonzero(~inside)[:1])
            step += n
            if step >= origin + NT and (not run.complete_last or overshoot is not None):
                break
        else:
            parts.append(tab)
            n_cycles_kept += len(tab)
            step += n
            if run.n_cycles is not None and n_cycles_kept >= run.n_cycles:
                break
    cycles = CycleTable.concat(parts, run.eq.l, run.dt)
    if NT is None and run.n_cycles is not None:
        cycles = cycles.take(np.arange(min(len(cycles), run.n_cycles)))
    if origin is None:
        origin = step
    # rebase step indices to the clock origin
    cycles.start = cycles.start - origin
    cycles.end = cycles.end - origin
    if overshoot is not None:
        overshoot.start = overshoot.start - origin
        overshoot.end = overshoot.end - origin
    T = None if NT is None else NT * run.dt
    return ReplicaResult(
        replica=run.replica, seed=run.seed, eps=run.eps, dt=run.dt, T=T, origin_step=origin,
        steps_total=step, cycles=cycles,
        N_T=None if NT is None else len(cycles) + 1,
        integral=None if NT is None else integral,
        overshoot=overshoot, trans=det.trans.copy(), incomplete=incomplete, config=run.describe(),
    )


def build_multicycles(cycles, m: float, eps: float, seed: int, h1: float | None = None,
                      w: float | None = None) -> list[MulticycleRecord]:
    """Group consecutive cycles by independent geometric draws with mean ``e^(m/eps)``.

    Cycles left over after the last full group are dropped.
    """
    if h1 is not None and w is not None:
        if not m + h1 > w:
            raise RegimeMismatch(f"need m + h1 > w, got m={m}, h1={h1}, w={w}")
        if h1 > w:
            warnings.warn("single-cycle regime (h1 > w): multicycles are not needed", RegimeWarning)
    if isinstance(cycles, CycleTable):
        dur, S = cycles.duration, cycles.S
    else:
        dur = np.array([c.duration for c in cycles])
        S = np.array([c.integral_S for c in cycles])
    p = math.exp(-m / eps)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(1 << 20,))))
    out = []
    i = 0
    n = len(dur)
    while True:
        M = int(rng.geometric(p)) if p < 1 else 1
        if i + M > n:
            break
        out.append(MulticycleRecord(M, float(dur[i:i + M].sum()), float(S[i:i + M].sum())))
        i += M
    return out
