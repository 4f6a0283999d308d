"""Exception hierarchy shared by all modules.

Every error carries a short machine-friendly ``code`` so the CLI can report
it with context and map it onto an exit status.
"""


class MetastableError(Exception):
    code = "error"


class ConfigInvalid(MetastableError):
    code = "config_invalid"

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


# landscape
class LandscapeError(MetastableError):
    code = "landscape"


class NotPeriodic(LandscapeError):
    code = "not_periodic"


class NoEquilibria(LandscapeError):
    code = "no_equilibria"


class DegenerateCritical(LandscapeError):
    code = "degenerate_critical"


class NonUniqueDeepest(LandscapeError):
    code = "non_unique_deepest"


class EmptySet(LandscapeError):
    code = "empty_set"


class OutOfDomain(LandscapeError):
    code = "out_of_domain"


# graph calculus
class GraphError(MetastableError):
    code = "graph"


class TooLarge(GraphError):
    code = "too_large"


class Infeasible(GraphError):
    code = "infeasible"


class Reducible(GraphError):
    code = "reducible"


class AbsorbingState(GraphError):
    code = "absorbing_state"


class BandViolated(GraphError):
    code = "band_violated"


class IdentityMismatch(GraphError):
    """Two independent routes to the same exact quantity disagreed."""

    code = "identity_mismatch"


class NotStochastic(GraphError):
    code = "not_stochastic"


# rates
class RateError(MetastableError):
    code = "rates"


class HorizonTooSmall(RateError):
    code = "horizon_too_small"


class CaseParamOutOfRange(RateError):
    code = "case_param_out_of_range"


# simulator
class SimulationError(MetastableError):
    code = "simulation"


class StepUnstable(SimulationError):
    code = "step_unstable"


class NoCompleteCycle(SimulationError):
    code = "no_complete_cycle"


class TooFewCycles(SimulationError):
    code = "too_few_cycles"


class TooFewReplicas(SimulationError):
    code = "too_few_replicas"


class RegimeMismatch(SimulationError):
    code = "regime_mismatch"


class BudgetExceeded(SimulationError):
    code = "budget_exceeded"
