import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastable_rates.errors import CaseParamOutOfRange, HorizonTooSmall
from metastable_rates.landscape import double_well, find_equilibria, quasipotential_matrix, random_extrema_landscape
from metastable_rates.rates import (
    EXAMPLE_EXPECTED,
    RateInputs,
    Regime,
    bias_decay_rate,
    compute_h,
    compute_W,
    doublewell_case_inputs,
    doublewell_case_rate,
    doublewell_case_set,
    example_inputs,
    regime,
    stable_reduction_check,
    variance_decay_rates,
)


@pytest.mark.parametrize("name", ["example1", "example2"])
def test_worked_examples_exact(name):
    exp = EXAMPLE_EXPECTED[name]
    rep = variance_decay_rates(example_inputs(name))
    assert rep.R1.tolist() == exp["R1"]
    assert rep.R2.tolist() == exp["R2"]
    if "R3" in exp:
        assert rep.R3.tolist() == exp["R3"]
    assert (rep.h1, rep.w) == (exp["h1"], exp["w"])
    assert rep.regime is exp["regime"]
    assert rep.variance_rate == exp["variance_rate"]
    assert rep.argmin == exp["argmin"]


@pytest.mark.parametrize("name", ["example1", "example2"])
def test_worked_examples_bias(name):
    exp = EXAMPLE_EXPECTED[name]
    assert bias_decay_rate(example_inputs(name, c=exp["bias_c"])) == exp["bias"]


def test_example_consistency_checks():
    rep = variance_decay_rates(example_inputs("example1"))
    assert rep.checks["R2_1_consistent"]
    assert rep.checks["single_cycle_dominance"]


def test_regime_boundary_is_multicycle():
    assert regime(2.0, 2.0) is Regime.MULTI
    assert regime(2.5, 2.0) is Regime.SINGLE


def test_horizon_must_exceed_h1_and_w():
    with pytest.raises(HorizonTooSmall):
        bias_decay_rate(example_inputs("example1", c=4))
    with pytest.raises(HorizonTooSmall):
        bias_decay_rate(example_inputs("example1"))


def test_tie_break_smallest_index_then_superscript():
    # every piece equals zero: the first (j=1, superscript 1) wins
    inp = RateInputs([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [np.nan, 0.0], 0.0)
    rep = variance_decay_rates(inp)
    assert rep.argmin == (1, 1)


def test_two_state_from_V():
    V = np.array([[0.0, 1.0], [0.5, 0.0]])
    W, Wp = compute_W(V)
    assert W.tolist() == [0.5, 1.0]
    assert Wp[1] == 0.0
    assert compute_h(V).tolist() == [1.0, 0.5]


@pytest.mark.parametrize("case,b", [("I", None), ("II", 0.3), ("III", 0.2), ("IV", 0.7)])
@pytest.mark.parametrize("h_L,h_R", [(1.0, 0.5), (1.0, 0.3), (1.0, 0.7), (2.0, 1.5)])
def test_double_well_cases_match_engine(case, b, h_L, h_R):
    if b is not None and case in ("II", "III") and b > h_R:
        b = h_R
    if case == "IV":
        b = h_R + 0.2
    inp = doublewell_case_inputs(h_L, h_R, case, b)
    rep = variance_decay_rates(inp)
    assert rep.variance_rate == pytest.approx(doublewell_case_rate(h_L, h_R, case, b), abs=1e-12)


@pytest.mark.parametrize("h_R", [0.3, 0.5, 0.7])
def test_case_one_on_full_landscape(h_R):
    dw = double_well(1.0, h_R)
    A = doublewell_case_set(dw, "I", 0.05)
    rep = variance_decay_rates(RateInputs.from_landscape(dw, A, 0.0))
    assert rep.variance_rate == pytest.approx(1.0 - 2 * h_R, abs=1e-12)


@pytest.mark.parametrize("case", ["II", "III", "IV"])
def test_other_cases_on_full_landscape(case):
    dw = double_well(1.0, 0.5)
    A = doublewell_case_set(dw, case, 0.05)
    inp = RateInputs.from_landscape(dw, A, 0.0)
    b = float(inp.infA_fV[1])
    rep = variance_decay_rates(inp)
    assert rep.variance_rate == pytest.approx(doublewell_case_rate(1.0, 0.5, case, b), abs=1e-9)


def test_case_params_validated():
    with pytest.raises(CaseParamOutOfRange):
        doublewell_case_rate(0.5, 1.0, "I")
    with pytest.raises(CaseParamOutOfRange):
        doublewell_case_rate(1.0, 0.5, "II", 0.9)
    with pytest.raises(CaseParamOutOfRange):
        doublewell_case_rate(1.0, 0.5, "V")


def test_band_violations_flagged():
    inp = RateInputs.from_V(np.array([[0.0, 1.0], [1.0, 0.0]]), [1.0, 0.5], [3.0, 0.5], f_nonnegative=True)
    assert inp.band_violations() == [0]


@given(st.integers(0, 10_000))
def test_stable_reduction_property(seed):
    L = random_extrema_landscape(np.random.default_rng(seed))
    eq = find_equilibria(L)
    V = quasipotential_matrix(L, eq).V
    rep = stable_reduction_check(V, eq.stable)
    assert rep.ok, rep.details


def test_report_round_trip():
    rep = variance_decay_rates(example_inputs("example2", c=7))
    d = rep.to_dict()
    assert d["regime"] == "Multicycle"
    assert d["argmin"] == {"j": 3, "superscript": 3}
    assert d["bias_rate"] == 4
    text = rep.format()
    assert "Multicycle" in text and "variance rate -1" in text
