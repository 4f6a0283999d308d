"""Replica orchestration and the statistical checks built on cycles."""
from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from ..errors import HorizonTooSmall, TooFewCycles, TooFewReplicas
from ..landscape import PotentialLandscape, find_equilibria, quasipotential_from
from .cycles import CycleTable, ReplicaResult, simulate_replica
from .sde import DriftTable, Integrand, SdeRun

# replica jobs ---------------------------------------------------------------

_TEMPLATE: dict = {}


def _run_one(replica: int) -> ReplicaResult:
    t = _TEMPLATE
    run = SdeRun(replica=replica, **t["run_kwargs"])
    return simulate_replica(run, t["g"])


def run_replicas(run_kwargs: dict, g: Integrand, replicas: Sequence[int], jobs: int = 1) -> list[ReplicaResult]:
    """Simulate independent replicas, optionally in forked worker processes.

    Every replica builds its own random stream from ``(seed, replica)``, so
    results do not depend on ``jobs`` or on scheduling order.
    """
    kw = dict(run_kwargs)
    lands = kw["landscape"]
    if kw.get("eq") is None:
        kw["eq"] = find_equilibria(lands)
    if kw.get("drift") is None:
        kw["drift"] = DriftTable.from_landscape(lands)
    _TEMPLATE.clear()
    _TEMPLATE.update(run_kwargs=kw, g=g)
    replicas = list(replicas)
    if jobs <= 1 or len(replicas) < 2:
        return [_run_one(r) for r in replicas]
    # fork keeps the landscape closures without pickling them
    ctx = mp.get_context("fork")
    with ctx.Pool(jobs) as pool:
        return pool.map(_run_one, replicas, chunksize=max(1, len(replicas) // (4 * jobs)))


# small estimators -----------------------------------------------------------


def jackknife(data: np.ndarray, stat: Callable[[np.ndarray], float]) -> tuple[float, float]:
    """Leave-one-out jackknife over the rows of ``data``; returns (estimate, SE)."""
    data = np.asarray(data, dtype=float)
    n = len(data)
    est = float(stat(data))
    if n < 2:
        return est, math.nan
    loo = np.array([stat(np.delete(data, i, axis=0)) for i in range(n)])
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return est, se


def ols(x, y, w=None) -> dict:
    """(Weighted) least squares line with standard errors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    X = np.column_stack([np.ones_like(x), x])
    WX = X * w[:, None]
    cov = np.linalg.inv(X.T @ WX)
    beta = cov @ (WX.T @ y)
    resid = y - X @ beta
    dof = len(x) - 2
    if dof > 0:
        s2 = float(np.sum(w * resid**2) / dof)
        cov_hat = cov * s2
    else:
        cov_hat = cov * math.nan
    return {"intercept": float(beta[0]), "slope": float(beta[1]),
            "intercept_se": float(math.sqrt(cov_hat[0, 0])) if dof > 0 else math.nan,
            "slope_se": float(math.sqrt(cov_hat[1, 1])) if dof > 0 else math.nan,
            "cov_unscaled": cov.tolist()}


def kappa_delta(landscape: PotentialLandscape, eq, delta: float) -> float:
    """``min V(O_1, y)`` over the delta-spheres of the other equilibria."""
    ys = []
    for p in eq.points[1:]:
        ys += [p - delta, p + delta]
    ys = landscape.wrap(np.array(ys))
    return float(np.min(quasipotential_from(landscape, float(eq.points[0]), ys)))


# return-time law ------------------------------------------------------------


@dataclass
class ReturnTimeLaw:
    n: int
    mean: float
    ks_stat: float
    ks_pvalue: float
    c_tilde: float
    tail_t: list[int]
    tail_emp: list[float]
    tail_bound: list[float]
    tail_se: list[float]
    regression_point: tuple[float, float] | None = None

    @property
    def tail_ok(self) -> bool:
        return self.c_tilde > 0 and all(e <= b + 3 * s for e, b, s in
                                        zip(self.tail_emp, self.tail_bound, self.tail_se))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"tail_ok": self.tail_ok}


def _durations(cycles) -> np.ndarray:
    if isinstance(cycles, CycleTable):
        return cycles.duration
    if len(cycles) and hasattr(cycles[0], "duration"):
        return np.array([c.duration for c in cycles], dtype=float)
    return np.asarray(cycles, dtype=float)


def return_time_law(cycles, eps: float | None = None, t_max: int = 5, min_cycles: int = 100) -> ReturnTimeLaw:
    """Normalized return times against the unit exponential law.

    ``c_tilde`` is the least-squares slope of ``-log P(tau/E tau > t)`` on
    ``t`` through the origin over ``t = 1..t_max``; the tail check allows
    three binomial standard errors.
    """
    d = _durations(cycles)
    n = len(d)
    if n < min_cycles:
        raise TooFewCycles(f"need >= {min_cycles} cycles, got {n}")
    mean = float(d.mean())
    z = d / mean
    ks = stats.kstest(z, "expon")
    ts = list(range(1, t_max + 1))
    emp = [float(np.mean(z > t)) for t in ts]
    pos = [(t, e) for t, e in zip(ts, emp) if e > 0]
    if pos:
        tt = np.array([p[0] for p in pos], dtype=float)
        yy = -np.log([p[1] for p in pos])
        c = float(np.sum(tt * yy) / np.sum(tt * tt))
    else:
        c = math.inf
    bound = [math.exp(-c * t) for t in ts]
    se = [math.sqrt(max(b * (1 - b), 1.0 / n) / n) for b in bound]
    point = None if eps is None else (1.0 / eps, math.log(mean))
    return ReturnTimeLaw(n, mean, float(ks.statistic), float(ks.pvalue), c, ts, emp, bound, se, point)


def arrhenius_fit(eps_grid, mean_times, se_log=None) -> dict:
    """Slope of ``log E tau`` against ``1/eps`` (weighted when SEs are given)."""
    x = 1.0 / np.asarray(eps_grid, dtype=float)
    y = np.log(np.asarray(mean_times, dtype=float))
    w = None if se_log is None else 1.0 / np.asarray(se_log, dtype=float) ** 2
    return ols(x, y, w)


# Wald-type identities ------------------------------------------------------


@dataclass
class WaldReport:
    n_replicas: int
    T: float
    N_mean: float
    N_var: float
    ES1: float
    VarS1: float
    Etau1: float
    rho_mean: float
    rho_var: float
    upper_mean: float | None
    wald_diff: float
    wald_se: float
    wald_upper_diff: float | None
    wald_upper_se: float | None
    ratio_diff: float
    ratio_se: float
    split_lhs: float
    split_rhs: float
    split_se: float
    gibbs: float | None = None
    n_sigma: float = 3.0

    @property
    def wald_ok(self) -> bool:
        return abs(self.wald_diff) <= self.n_sigma * self.wald_se

    @property
    def wald_upper_ok(self) -> bool | None:
        if self.wald_upper_diff is None:
            return None
        return abs(self.wald_upper_diff) <= self.n_sigma * self.wald_upper_se

    @property
    def ratio_ok(self) -> bool:
        return abs(self.ratio_diff) <= self.n_sigma * self.ratio_se

    @property
    def split_ok(self) -> bool:
        return self.split_lhs <= self.split_rhs + self.n_sigma * self.split_se

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out.update(wald_ok=self.wald_ok, wald_upper_ok=self.wald_upper_ok,
                   ratio_ok=self.ratio_ok, split_ok=self.split_ok)
        return out


def _first_cycle(r: ReplicaResult) -> tuple[float, float]:
    if len(r.cycles):
        return float(r.cycles.S[0]), float(r.cycles.duration[0])
    if r.overshoot is not None and len(r.overshoot):
        return float(r.overshoot.S[0]), float(r.overshoot.duration[0])
    return math.nan, math.nan


def gibbs_integral(landscape: PotentialLandscape, g: Integrand, n: int = 200001) -> float:
    """``int g dmu`` for the invariant density ``exp(-2U/(a eps))`` by quadrature."""
    xs = np.linspace(landscape.lo, landscape.hi, n)
    u = landscape.U(xs)
    wts = np.exp(-(2.0 / (landscape.noise * g.eps)) * (u - u.min()))
    return float(np.trapezoid(g(xs) * wts, xs) / np.trapezoid(wts, xs))


def wald_checks(results: Sequence[ReplicaResult], min_replicas: int = 20, n_sigma: float = 3.0,
                landscape: PotentialLandscape | None = None, g: Integrand | None = None) -> WaldReport:
    """Mean identity, ratio identity and the variance split across replicas.

    Each replica contributes its cycle count ``N(T)``, its first cycle's
    ``S`` and duration, and its empirical-measure integral; standard errors
    come from the jackknife over replicas.
    """
    if len(results) < min_replicas:
        raise TooFewReplicas(f"need >= {min_replicas} replicas, got {len(results)}")
    T = results[0].T
    if T is None or any(r.T != T for r in results):
        raise ValueError("all replicas need the same horizon")
    firsts = np.array([_first_cycle(r) for r in results])
    N = np.array([r.N_T for r in results], dtype=float)
    rho = np.array([r.rho for r in results])
    ups = [r.upper_sum for r in results]
    have_upper = all(u is not None for u in ups)
    U = np.array(ups, dtype=float) / T if have_upper else np.full(len(results), np.nan)
    data = np.column_stack([N, firsts[:, 0], firsts[:, 1], rho, U])
    ok = np.all(np.isfinite(data[:, :4]), axis=1)
    data = data[ok]

    def wald(d):
        return d[:, 0].mean() / T * d[:, 1].mean() - d[:, 3].mean()

    def wald_up(d):
        return d[:, 0].mean() / T * d[:, 1].mean() - d[:, 4].mean()

    def ratio(d):
        return d[:, 1].mean() / d[:, 2].mean() - d[:, 3].mean()

    col = 4 if have_upper else 3

    def split(d):
        lhs = T * d[:, col].var(ddof=1)
        rhs = 2 * d[:, 0].mean() / T * d[:, 1].var(ddof=1) + 2 * d[:, 0].var(ddof=1) / T * d[:, 1].mean() ** 2
        return lhs - rhs

    w_est, w_se = jackknife(data, wald)
    r_est, r_se = jackknife(data, ratio)
    s_est, s_se = jackknife(data, split)
    if have_upper:
        wu_est, wu_se = jackknife(data, wald_up)
    else:
        wu_est = wu_se = None
    lhs = T * data[:, col].var(ddof=1)
    return WaldReport(
        n_replicas=len(data), T=T, N_mean=float(data[:, 0].mean()), N_var=float(data[:, 0].var(ddof=1)),
        ES1=float(data[:, 1].mean()), VarS1=float(data[:, 1].var(ddof=1)), Etau1=float(data[:, 2].mean()),
        rho_mean=float(data[:, 3].mean()), rho_var=float(data[:, 3].var(ddof=1)),
        upper_mean=float(data[:, 4].mean()) if have_upper else None,
        wald_diff=w_est, wald_se=w_se, wald_upper_diff=wu_est, wald_upper_se=wu_se,
        ratio_diff=r_est, ratio_se=r_se, split_lhs=float(lhs), split_rhs=float(lhs - s_est), split_se=s_se,
        gibbs=None if landscape is None or g is None else gibbs_integral(landscape, g), n_sigma=n_sigma,
    )


# variance decay rate ---------------------------------------------------------


@dataclass
class EpsSummary:
    eps: float
    T: float
    n_replicas: int
    n_incomplete: int
    N_mean: float
    ES1: float
    VarS1: float
    Etau1: float
    rho_mean: float
    T_var: float
    rate: float
    rate_se: float
    n_cycles: int
    dt: float


@dataclass
class EstimatorSummary:
    per_eps: list[EpsSummary]
    regression: dict
    formula_rate: float | None
    seed: int
    replicas: int
    c: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"per_eps": [e.__dict__ for e in self.per_eps], "regression": self.regression,
                "formula_rate": self.formula_rate, "seed": self.seed, "replicas": self.replicas,
                "c": self.c, "config": self.config}

    @property
    def rates(self) -> np.ndarray:
        return np.array([e.rate for e in self.per_eps])

    @property
    def eps(self) -> np.ndarray:
        return np.array([e.eps for e in self.per_eps])


def summarize_eps(results: Sequence[ReplicaResult]) -> EpsSummary:
    r0 = results[0]
    T, eps = r0.T, r0.eps
    rho = np.array([r.rho for r in results])
    firsts = np.array([_first_cycle(r) for r in results])
    N = np.array([r.N_T for r in results], dtype=float)

    def rate(d):
        return -eps * math.log(T * d.var(ddof=1))

    est, se = jackknife(rho[:, None], lambda d: rate(d[:, 0]))
    fin = np.isfinite(firsts[:, 0])
    return EpsSummary(
        eps=eps, T=T, n_replicas=len(results), n_incomplete=int(sum(r.incomplete for r in results)),
        N_mean=float(N.mean()), ES1=float(firsts[fin, 0].mean()), VarS1=float(firsts[fin, 0].var(ddof=1)),
        Etau1=float(firsts[fin, 1].mean()), rho_mean=float(rho.mean()), T_var=float(T * rho.var(ddof=1)),
        rate=est, rate_se=se, n_cycles=int(sum(len(r.cycles) for r in results)), dt=r0.dt)


def variance_rate_experiment(landscape: PotentialLandscape, eps_grid, c: float, f=0.0, A=None,
                             replicas: int = 100, seed: int = 0, delta: float = 0.05, jobs: int = 1,
                             max_steps: int | None = None, dt: float | None = None) -> EstimatorSummary:
    """``-eps log(T Var rho_T)`` on an eps grid, extrapolated linearly to eps = 0.

    The intercept of a weighted line through the per-eps estimates is the
    extrapolated rate; the formula value comes from the rate engine.
    """
    from ..rates import RateInputs, variance_decay_rates

    eps_grid = [float(e) for e in eps_grid]
    if len(eps_grid) < 3:
        raise ValueError("need at least three eps values")
    eq = find_equilibria(landscape)
    inputs = RateInputs.from_landscape(landscape, A if A is not None else [(landscape.lo, landscape.hi)],
                                       f, c=c, eq=eq)
    inputs.require_horizon()
    formula = variance_decay_rates(inputs).variance_rate
    drift = DriftTable.from_landscape(landscape)
    per = []
    for k, eps in enumerate(eps_grid):
        g = Integrand(eps, A, f, landscape)
        kw = dict(landscape=landscape, eps=eps, delta=delta, seed=seed, c=c, eq=eq, drift=drift,
                  max_steps=max_steps, dt=dt)
        res = run_replicas(kw, g, [k * 1_000_000 + r for r in range(replicas)], jobs)
        per.append(summarize_eps(res))
    x = np.array([p.eps for p in per])
    y = np.array([p.rate for p in per])
    se = np.array([p.rate_se for p in per])
    reg = ols(x, y, 1.0 / se**2)
    return EstimatorSummary(per, reg, formula, seed, replicas, c,
                            config={"landscape": landscape.name, "params": landscape.params,
                                    "eps_grid": eps_grid, "A": A, "delta": delta})


def asymptotic_variance_1d(landscape: PotentialLandscape, eps: float, A=None, f=0.0, n: int = 400001) -> float:
    """``lim T Var rho_T`` for the diffusion on the circle, by quadrature.

    With ``pi`` the invariant density, ``gbar = int g pi`` and
    ``G(x) = int_lo^x pi (g - gbar)``, the limit is
    ``(4 / (a eps)) [int G^2/pi - (int G/pi)^2 / int 1/pi]``.
    Free of sampling noise, it serves as the oracle for the trend of
    ``-eps log(T Var)`` at finite ``eps``.
    """
    xs = np.linspace(landscape.lo, landscape.hi, n)
    a = landscape.noise
    u = landscape.U(xs)
    p = np.exp(-(2.0 / (a * eps)) * (u - u.min()))
    p /= np.trapezoid(p, xs)
    g = Integrand(eps, A, f, landscape)(xs)
    gbar = np.trapezoid(g * p, xs)
    G = cumulative_trapezoid(p * (g - gbar), xs, initial=0.0)
    ip = 1.0 / p
    i1 = np.trapezoid(G * G * ip, xs)
    i2 = np.trapezoid(G * ip, xs)
    i3 = np.trapezoid(ip, xs)
    return float(4.0 / (a * eps) * (i1 - i2**2 / i3))


def _psi(al: np.ndarray, be: np.ndarray, T: float) -> np.ndarray:
    """``int_0^T exp(al s + be (T - s)) ds`` for ``al, be <= 0``, without overflow."""
    d = np.abs(al - be)
    m = np.maximum(al, be)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(d * T < 1e-10, T, -np.expm1(-d * T) / np.where(d == 0, 1.0, d))
    return np.exp(m * T) * frac


def finite_horizon_variance_1d(landscape: PotentialLandscape, eps: float, T: float, A=None, f=0.0,
                               x0: float | None = None, n: int = 1200) -> float:
    """``T Var rho_T`` for the diffusion on the circle started at ``x0``.

    The generator is discretized on ``n`` periodic cells with the
    square-root approximation (reversible for the Gibbs weights), and both
    moments of ``int_0^T g`` follow from its eigen-decomposition. ``x0``
    defaults to ``O_1``. The second moment and the squared mean cancel in
    floating point once ``T`` exceeds the slowest relaxation time by many
    orders of magnitude; use :func:`asymptotic_variance_1d` there.
    """
    a = landscape.noise
    h = landscape.period / n
    xs = landscape.lo + h * np.arange(n)
    u = landscape.U(xs)
    beta = 2.0 / (a * eps)
    k = a * eps / (2.0 * h * h)
    up = np.roll(u, -1)
    fwd = k * np.exp(-beta * (up - u) / 2)
    bwd = k * np.exp(-beta * (u - up) / 2)
    idx = np.arange(n)
    nxt = np.roll(idx, -1)
    Qs = np.zeros((n, n))
    Qs[idx, nxt] = k
    Qs[nxt, idx] = k
    Qs[idx, idx] -= fwd
    Qs[nxt, nxt] -= bwd
    lam, V = np.linalg.eigh(Qs)
    lam = np.minimum(lam, 0.0)
    lam[np.argmax(lam)] = 0.0
    s = np.exp(-beta * (u - u.min()) / 2)
    s /= np.sqrt(np.sum(s * s))
    g = Integrand(eps, A, f, landscape)(xs)
    if x0 is None:
        x0 = find_equilibria(landscape).points[0]
    i0 = int(np.argmin(np.abs(landscape.lo + np.mod(x0 - landscape.lo, landscape.period) - xs)))
    # Q = diag(1/s) Qs diag(s), so Q = S diag(lam) S^-1 with S = V / s, S^-1 = V.T s
    left = V[i0] / s[i0]
    right = (V.T * s) @ g
    M = (V.T * s) @ (g[:, None] * (V / s[:, None]))
    lk, ll = np.meshgrid(lam, lam, indexing="ij")
    zero = ll == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # int_0^T e^{lk s} phi(ll, T - s) ds with phi(l, t) = int_0^t e^{l v} dv
        flat = np.where(lk == 0, T * T / 2, (np.expm1(lk * T) - lk * T) / np.where(lk == 0, 1.0, lk * lk))
        curved = (_psi(lk, ll, T) - _psi(lk, np.zeros_like(ll), T)) / np.where(zero, 1.0, ll)
    second = 2.0 * np.sum(left[:, None] * M * right[None, :] * np.where(zero, flat, curved))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(lam == 0, T, np.expm1(lam * T) / np.where(lam == 0, 1.0, lam))
    first = np.sum(left * right * phi)
    return float(second / T - first * first / T)


@dataclass
class TrendReport:
    eps: list[float]
    rates: list[float]
    rate_se: list[float]
    formula: float
    intercept: float
    intercept_se: float
    sign_ok: bool
    monotone_ok: bool
    intercept_ok: bool
    tol: float

    @property
    def ok(self) -> bool:
        return self.sign_ok and self.monotone_ok and self.intercept_ok

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"ok": self.ok}


def variance_trend_check(summary: EstimatorSummary, tol: float = 0.3, n_sigma: float = 2.0) -> TrendReport:
    """Sign and trend of the per-eps rate estimates against the formula value.

    * sign: every point estimate has the sign of the formula rate;
    * trend: the weighted line has ``|fit - formula|`` shrinking as eps
      decreases, and no step between neighbouring eps values moves away
      from the formula by more than ``n_sigma`` combined standard errors;
    * the extrapolated intercept lies within ``tol`` of the formula.
    """
    r0 = float(summary.formula_rate)
    order = np.argsort(-summary.eps)
    e, y = summary.eps[order], summary.rates[order]
    se = np.array([summary.per_eps[i].rate_se for i in order])
    sign_ok = bool(r0 != 0 and np.all(np.sign(y) == np.sign(r0)))
    reg = summary.regression
    fit = reg["intercept"] + reg["slope"] * e
    gap = np.abs(fit - r0)
    mono = bool(np.all(np.diff(gap) <= 1e-12))
    dist = np.abs(y - r0)
    steps = np.diff(dist) <= n_sigma * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    mono = mono and bool(np.all(steps))
    icpt = float(reg["intercept"])
    return TrendReport(list(map(float, e)), list(map(float, y)), list(map(float, se)), r0, icpt,
                       float(reg["intercept_se"]), sign_ok, mono, abs(icpt - r0) <= tol, tol)
