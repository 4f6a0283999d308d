from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastable_rates.config import from_dict, load, parse_number
from metastable_rates.errors import ConfigInvalid

DW = {"family": "double_well", "h_L": 1, "h_R": "1/2"}


@pytest.mark.parametrize("raw,exact", [(3, Fraction(3)), ("1/3", Fraction(1, 3)), (0.1, Fraction(1, 10)),
                                       ("2.5", Fraction(5, 2)), (" 7 ", Fraction(7))])
def test_numbers_are_exact(raw, exact):
    assert parse_number(raw, "x") == exact


@given(st.integers(-1000, 1000), st.integers(1, 1000))
def test_fraction_strings_round_trip(p, q):
    assert parse_number(f"{p}/{q}", "x") == Fraction(p, q)


@pytest.mark.parametrize("raw", [True, None, "abc", "1/0", [1]])
def test_bad_numbers(raw):
    with pytest.raises(ConfigInvalid) as e:
        parse_number(raw, "a.b")
    assert e.value.path == "a.b"


def test_inf_only_where_allowed():
    with pytest.raises(ConfigInvalid):
        parse_number("inf", "c")
    assert parse_number("inf", "V", allow_inf=True) == float("inf")


def test_exactly_one_source_block():
    with pytest.raises(ConfigInvalid, match="exactly one"):
        from_dict({"eps": [0.2]})
    with pytest.raises(ConfigInvalid, match="exactly one"):
        from_dict({"landscape": DW, "raw_V": {"V": [[0]]}})


def test_landscape_block_resolves():
    cfg = from_dict({"landscape": DW, "set": {"case": "I"}, "eps": [0.25, "0.18", "13/100"], "c": 1.5})
    L = cfg.build_landscape()
    assert L.params["h_R"] == 0.5
    assert cfg.eps == [Fraction(1, 4), Fraction(9, 50), Fraction(13, 100)]
    np.testing.assert_allclose(cfg.set_A(L), [(0.225, 0.375)], atol=1e-12)
    res = cfg.resolved()
    assert res["landscape"]["h_R"] == "1/2" and res["c"] == "3/2"


def test_eps_grid_must_decrease():
    with pytest.raises(ConfigInvalid) as e:
        from_dict({"landscape": DW, "eps": [0.1, 0.2]})
    assert e.value.path == "eps"


@pytest.mark.parametrize("block,path", [
    ({"landscape": {"family": "volcano"}}, "landscape.family"),
    ({"landscape": {"family": "double_well", "h_L": 1}}, "landscape.h_R"),
    ({"landscape": {"family": "double_well", "h_L": 1, "h_R": 2}}, "landscape.h_R"),
    ({"landscape": dict(DW, depth=3)}, "landscape.depth"),
    ({"landscape": DW, "set": {"A": [[0.3, 0.1]]}}, "set.A[0]"),
    ({"landscape": DW, "set": {"case": "IX"}}, "set.case"),
    ({"landscape": DW, "replicas": 0}, "replicas"),
    ({"landscape": DW, "simulate": {"n_cycles": "many"}}, "simulate.n_cycles"),
    ({"landscape": DW, "colour": 1}, "colour"),
    ({"raw_V": {"V": [[0, 1], [1, 1]]}}, "raw_V.V[1][1]"),
    ({"raw_V": {"V": [[0, 1], [1]]}}, "raw_V.V[1]"),
    ({"raw_V": {"V": [[0, 1], [1, 0]], "graphs": 1}}, "raw_V.graphs"),
    ({"raw_V": {"V": [[0, 1], [1, 0]]}, "graphs": {"W": [[3]]}}, "graphs.W[0][0]"),
    ({"raw_V": {"V": [[0, 1], [1, 0]]}, "graphs": {"P": [[0.5, 0.4], [0, 1]]}}, "graphs.P[0]"),
    ({"raw_W": {"infA_fV": [1, 2], "W_rel": [0, 1], "W1": 1, "W_pair": [1, 2], "h1": 1}}, "raw_W.W_pair"),
    ({"landscape": DW, "f": "y + 1"}, "f"),
])
def test_errors_carry_field_path(block, path):
    with pytest.raises(ConfigInvalid) as e:
        from_dict(block)
    assert e.value.path == path
    assert str(e.value).startswith(path)


def test_f_expression():
    cfg = from_dict({"landscape": DW, "f": "x**2 + 1/4"})
    f = cfg.f_value()
    np.testing.assert_allclose(f(np.array([0.0, 0.5])), [0.25, 0.5])
    const = from_dict({"landscape": DW, "f": "1/4"})
    assert const.f_value() == 0.25


def test_graph_indices_and_matrix():
    cfg = from_dict({"raw_V": {"V": [[0, "inf"], ["1/2", 0]]},
                     "graphs": {"W": [[1], [2, 1]], "P": [["1/2", "1/2"], [0.25, 0.75]]}})
    assert cfg.graphs["W"] == [[1], [1, 2]]
    assert cfg.raw_V["V"][0][1] == float("inf")
    assert cfg.graphs["P"][1] == [Fraction(1, 4), Fraction(3, 4)]


def test_load_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("landscape: {family: three_well}\neps: [0.3, 0.2]\nseed: 4\n")
    cfg = load(p)
    assert cfg.seed == 4 and cfg.kind == "landscape"
    bad = tmp_path / "bad.yaml"
    bad.write_text("landscape: [unclosed\n")
    with pytest.raises(ConfigInvalid, match="YAML"):
        load(bad)
    with pytest.raises(ConfigInvalid):
        load(tmp_path / "missing.yaml")
