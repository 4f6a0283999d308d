"""Simulation of the small-noise diffusion and its regenerative structure."""
from .cycles import (
    CycleRecord,
    CycleTable,
    MulticycleRecord,
    ReplicaResult,
    build_multicycles,
    detect_cycles,
    simulate_replica,
)
from .sde import DriftTable, Integrand, SdeRun, default_dt, empirical_measure_integral, integrate_path
from .stats import (
    EstimatorSummary,
    ReturnTimeLaw,
    TrendReport,
    WaldReport,
    asymptotic_variance_1d,
    finite_horizon_variance_1d,
    return_time_law,
    run_replicas,
    variance_rate_experiment,
    variance_trend_check,
    wald_checks,
)

__all__ = [
    "CycleRecord", "CycleTable", "MulticycleRecord", "ReplicaResult", "build_multicycles",
    "detect_cycles", "simulate_replica", "DriftTable", "Integrand", "SdeRun", "default_dt",
    "empirical_measure_integral", "integrate_path", "EstimatorSummary", "ReturnTimeLaw", "TrendReport",
    "WaldReport", "asymptotic_variance_1d", "finite_horizon_variance_1d", "return_time_law", "run_replicas",
    "variance_rate_experiment", "variance_trend_check", "wald_checks",
]
