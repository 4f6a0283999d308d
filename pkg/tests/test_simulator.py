import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from metastable_rates.errors import (NoCompleteCycle, RegimeMismatch, StepUnstable, TooFewCycles,
                                     TooFewReplicas)
from metastable_rates.graphcalc import TransitionMatrix, stationary_linear
from metastable_rates.landscape import double_well, find_equilibria, three_well
from metastable_rates.rates import doublewell_case_set
from metastable_rates.simulator import (
    CycleRecord,
    Integrand,
    SdeRun,
    asymptotic_variance_1d,
    build_multicycles,
    detect_cycles,
    empirical_measure_integral,
    finite_horizon_variance_1d,
    integrate_path,
    return_time_law,
    run_replicas,
    simulate_replica,
    variance_trend_check,
    wald_checks,
)
from metastable_rates.simulator.cycles import RegimeWarning
from metastable_rates.simulator.kernels import em_chunk
from metastable_rates.simulator.sde import default_dt, replica_generator
from metastable_rates.simulator.stats import EpsSummary, EstimatorSummary, jackknife, ols, variance_rate_experiment


@pytest.fixture(scope="module")
def dw():
    return double_well(1.0, 0.5)


@pytest.fixture(scope="module")
def horizon_runs(dw):
    eps = 0.3
    A = doublewell_case_set(dw, "I", 0.05)
    g = Integrand(eps, A, 0.0, dw)
    res = run_replicas(dict(landscape=dw, eps=eps, delta=0.05, seed=5, c=1.2, complete_last=True), g, range(25))
    return res, g


# path integration ------------------------------------------------------------


def test_ou_stationary_variance():
    # U = x^2/2 on a window wide enough never to wrap at this noise level
    eps, dt, a = 0.1, 0.01, 2.0
    breaks = np.array([-10.0, 10.0])
    dcoef = np.array([[1.0], [-10.0]])  # U'(x) = (x + 10) - 10
    out = np.empty(1_000_000)
    em_chunk(0.0, len(out), dt, math.sqrt(a * eps * dt), breaks, dcoef, 20.0, replica_generator(1, 0), out)
    exact = a * eps * dt / (1 - (1 - dt) ** 2)  # discretized recursion
    assert out[1000:].var() == pytest.approx(exact, rel=0.05)
    assert exact == pytest.approx(a * eps / 2, rel=0.01)


@pytest.mark.parametrize("start,target", [(-0.5, -0.3), (-0.1, -0.3), (0.1, 0.3), (0.55, 0.3)])
def test_zero_noise_flows_downhill(dw, start, target):
    run = SdeRun(dw, eps=0.0, delta=0.05, start=start, dt=1e-3)
    xs = np.concatenate([x for _, x in integrate_path(run, n_steps=20000)])
    assert xs[-1] == pytest.approx(target, abs=1e-6)


def test_paths_are_bit_identical(dw):
    run = SdeRun(dw, eps=0.2, delta=0.05, seed=3, replica=4)
    a = np.concatenate([x for _, x in integrate_path(run, n_steps=50_000, chunk=7_000)])
    b = np.concatenate([x for _, x in integrate_path(run, n_steps=50_000, chunk=50_000)])
    assert a.tobytes() == b.tobytes()
    other = SdeRun(dw, eps=0.2, delta=0.05, seed=3, replica=5)
    c = np.concatenate([x for _, x in integrate_path(other, n_steps=1000)])
    assert not np.array_equal(a[:1000], c)


def test_positions_stay_in_window(dw):
    run = SdeRun(dw, eps=0.5, delta=0.05, seed=1)
    xs = np.concatenate([x for _, x in integrate_path(run, n_steps=200_000)])
    assert xs.min() >= dw.lo and xs.max() < dw.hi


def test_default_dt_takes_the_smaller_bound():
    assert default_dt(0.1, 0.05, 2.0, 100.0) == pytest.approx(min(1e-4, 0.0025 / 2.0))
    assert default_dt(0.0, 0.05, 2.0, 100.0) == pytest.approx(1e-4)


def test_step_unstable(dw):
    with pytest.raises(StepUnstable):
        SdeRun(dw, eps=0.1, delta=0.05, dt=10.0)


def test_delta_too_large(dw):
    with pytest.raises(ValueError):
        SdeRun(dw, eps=0.1, delta=0.2)


# cycles ---------------------------------------------------------------------


def test_cycle_sequences_and_visits(dw):
    run = SdeRun(dw, eps=0.3, delta=0.05, seed=2)
    cycles = detect_cycles(run, integrate_path(run), max_cycles=60)
    assert len(cycles) == 60
    for c in cycles:
        seq = c.excursion_sequence
        assert seq[0] == 0 and seq[-1] == 0
        assert any(s != 0 for s in seq)
        assert c.duration > 0 and c.integral_S >= 0
        # collapsed sequences list each run of repeated hits once
        for k in set(seq):
            assert c.visits[k] >= seq.count(k) - (1 if k == 0 else 0)


def test_no_complete_cycle(dw):
    run = SdeRun(dw, eps=0.05, delta=0.05, seed=2)
    with pytest.raises(NoCompleteCycle):
        detect_cycles(run, integrate_path(run), n_steps=1000)


def test_full_domain_integral_is_one(dw):
    run = SdeRun(dw, eps=0.3, delta=0.05, seed=2)
    val = empirical_measure_integral(integrate_path(run), Integrand(0.3), 5.0, run.dt)
    assert val == 1.0


def test_sandwich_and_partition(horizon_runs):
    res, _ = horizon_runs
    for r in res:
        T = r.T
        total = r.integral
        assert r.lower_sum <= total + 1e-9
        assert total <= r.upper_sum + 1e-9
        d = r.cycles.duration.sum()
        assert d <= T + r.dt
        assert r.overshoot.end[0] * r.dt >= T - r.dt
        assert r.N_T == len(r.cycles) + 1


def test_replica_determinism(dw):
    run = SdeRun(dw, eps=0.3, delta=0.05, seed=9, n_cycles=20)
    a = simulate_replica(run)
    b = simulate_replica(SdeRun(dw, eps=0.3, delta=0.05, seed=9, n_cycles=20))
    assert a.cycles.records() == b.cycles.records()
    assert np.array_equal(a.trans, b.trans)


def test_jobs_do_not_change_results(dw):
    kw = dict(landscape=dw, eps=0.3, delta=0.05, seed=4, n_cycles=10)
    g = Integrand(0.3)
    one = run_replicas(kw, g, range(4), jobs=1)
    two = run_replicas(kw, g, range(4), jobs=2)
    for a, b in zip(one, two):
        assert a.cycles.records() == b.cycles.records()


def test_step_budget_marks_incomplete(dw):
    r = simulate_replica(SdeRun(dw, eps=0.3, delta=0.05, seed=1, c=1.5, max_steps=5000))
    assert r.incomplete


def test_embedded_chain_consistency():
    # stationary law of the empirical hit chain vs the empirical hit frequencies
    L = three_well()
    r = simulate_replica(SdeRun(L, eps=0.25, delta=0.05, seed=3, n_cycles=300))
    trans = r.trans
    idx = np.flatnonzero(trans.sum(axis=1) > 0)
    sub = trans[np.ix_(idx, idx)]
    rows = [[Fraction(int(v), int(row.sum())) for v in row] for row in sub]
    lam = np.array([float(x) for x in stationary_linear(TransitionMatrix(rows))])
    n = sub.sum()
    freq = sub.sum(axis=0) / n
    se = np.sqrt(freq * (1 - freq) / n)
    assert np.all(np.abs(lam - freq) <= 3 * se)


# multicycles -----------------------------------------------------------------


def synthetic_cycles(n, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.exponential(1.0, n)
    s = rng.uniform(0, 0.1, n)
    return [CycleRecord(float(a), float(b), (0, 1, 0), (1, 1)) for a, b in zip(d, s)]


def test_degenerate_geometric():
    cyc = synthetic_cycles(50)
    mc = build_multicycles(cyc, 0.0, 0.2, seed=1)
    assert len(mc) == 50 and all(m.member_count == 1 for m in mc)


def test_multicycle_mean_and_additivity():
    cyc = synthetic_cycles(40_000)
    m, eps = 0.3, 0.2
    mc = build_multicycles(cyc, m, eps, seed=2)
    counts = np.array([x.member_count for x in mc])
    target = math.exp(m / eps)
    assert abs(counts.mean() - target) <= 3 * counts.std(ddof=1) / math.sqrt(len(counts))
    i = 0
    for x in mc:
        assert x.duration == pytest.approx(sum(c.duration for c in cyc[i:i + x.member_count]), rel=1e-12)
        i += x.member_count
    dur = np.array([x.duration for x in mc])
    mean_tau = np.mean([c.duration for c in cyc])
    assert abs(dur.mean() - target * mean_tau) <= 3 * dur.std(ddof=1) / math.sqrt(len(dur))


def test_multicycle_regime_guards():
    cyc = synthetic_cycles(10)
    with pytest.raises(RegimeMismatch):
        build_multicycles(cyc, 0.5, 0.2, seed=0, h1=1.0, w=2.0)
    with pytest.warns(RegimeWarning):
        build_multicycles(cyc, 0.5, 0.2, seed=0, h1=2.0, w=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_multicycles(cyc, 1.5, 0.2, seed=0, h1=1.0, w=2.0)


# statistics ------------------------------------------------------------------


def test_ks_calibration_on_exponential_samples():
    rng = np.random.default_rng(0)
    ps = np.array([return_time_law(rng.exponential(2.0, 400)).ks_pvalue for _ in range(300)])
    # estimating the mean makes the test conservative; the p-values must not pile up near 0
    assert np.mean(ps < 0.05) <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 300)


def test_ks_uniform_with_known_mean():
    # with the true mean the statistic is exactly Kolmogorov distributed
    rng = np.random.default_rng(1)
    ps = np.array([stats.kstest(rng.exponential(1.0, 400), "expon").pvalue for _ in range(300)])
    assert stats.kstest(ps, "uniform").pvalue > 0.001


def test_tail_bound_on_exponential():
    law = return_time_law(np.random.default_rng(1).exponential(1.0, 5000))
    assert law.c_tilde == pytest.approx(1.0, rel=0.1)
    assert law.tail_ok


def test_too_few_cycles():
    with pytest.raises(TooFewCycles):
        return_time_law(np.ones(10))


def test_wald_identities(horizon_runs, dw):
    res, g = horizon_runs
    rep = wald_checks(res, landscape=dw, g=g)
    assert rep.wald_ok and rep.ratio_ok and rep.split_ok
    with pytest.raises(TooFewReplicas):
        wald_checks(res[:5])


def test_full_domain_wald_is_one(dw):
    res = run_replicas(dict(landscape=dw, eps=0.3, delta=0.05, seed=8, c=1.0, complete_last=True),
                       Integrand(0.3), range(20))
    for r in res:
        assert r.rho == pytest.approx(1.0, abs=1e-12)


def test_jackknife_mean_matches_standard_error():
    x = np.random.default_rng(3).normal(size=200)
    est, se = jackknife(x[:, None], lambda d: d[:, 0].mean())
    assert est == pytest.approx(x.mean())
    assert se == pytest.approx(x.std(ddof=1) / math.sqrt(200), rel=1e-9)


def test_ols_recovers_line():
    x = np.linspace(0, 1, 20)
    fit = ols(x, 2 - 3 * x)
    assert fit["intercept"] == pytest.approx(2) and fit["slope"] == pytest.approx(-3)


def test_asymptotic_variance_constant_integrand(dw):
    assert asymptotic_variance_1d(dw, 0.3) == pytest.approx(0.0, abs=1e-12)


def test_asymptotic_variance_decay_rate_approaches_formula():
    # quadrature oracle: -eps log sigma^2 approaches h_L - 2 h_R as eps shrinks
    L = double_well(1.0, 0.7, width=0.6)
    A = [(0.05, 1.15)]
    r = np.array([-e * math.log(asymptotic_variance_1d(L, e, A)) for e in (0.2, 0.1, 0.05)])
    gap = np.abs(r + 0.4)
    assert gap[-1] < 0.02 < gap[0]



@pytest.mark.parametrize("A", [[(0.0, 0.2)], [(0.4, 0.6)]])
def test_finite_horizon_variance_converges_to_quadrature(A):
    # long horizon, refined grid: the cell-based indicator gives first-order convergence
    L = three_well()
    ref = asymptotic_variance_1d(L, 0.3, A)
    err = [abs(finite_horizon_variance_1d(L, 0.3, 1e4, A, n=n) / ref - 1) for n in (600, 1200)]
    assert err[1] < 0.03
    assert err[1] < 0.7 * err[0]


def test_finite_horizon_variance_short_horizon_vanishes(dw):
    # over a horizon much shorter than any transition rho_T barely fluctuates
    A = doublewell_case_set(dw, "I", 0.05)
    assert finite_horizon_variance_1d(dw, 0.3, 1e-3, A) < 1e-6


def test_variance_estimates_match_finite_horizon_oracle(dw):
    A = doublewell_case_set(dw, "I", 0.05)
    s = variance_rate_experiment(dw, (0.4, 0.35, 0.3), 1.2, 0.0, A, replicas=200, seed=3)
    for p in s.per_eps:
        oracle = -p.eps * math.log(finite_horizon_variance_1d(dw, p.eps, p.T, A))
        assert abs(p.rate - oracle) <= 3 * p.rate_se

def _summary(rates, ses, formula):
    per = [EpsSummary(e, 1.0, 10, 0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, r, s, 10, 1e-3)
           for e, r, s in zip((0.2, 0.16, 0.13), rates, ses)]
    x = np.array([p.eps for p in per])
    reg = ols(x, np.array(rates), 1 / np.array(ses) ** 2)
    return EstimatorSummary(per, reg, formula, 0, 10, 1.2)


def test_trend_check_accepts_converging_points():
    tr = variance_trend_check(_summary([-0.33, -0.37, -0.39], [0.02] * 3, -0.4))
    assert tr.ok


def test_trend_check_rejects_wrong_sign_and_drift():
    assert not variance_trend_check(_summary([0.1, -0.2, -0.3], [0.02] * 3, -0.4)).sign_ok
    assert not variance_trend_check(_summary([-0.39, -0.3, -0.2], [0.01] * 3, -0.4)).monotone_ok
    assert not variance_trend_check(_summary([-1.2, -1.15, -1.12], [0.01] * 3, -0.4)).intercept_ok
