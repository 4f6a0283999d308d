from fractions import Fraction as F
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastable_rates.errors import (AbsorbingState, BandViolated, Infeasible, NotStochastic, Reducible,
                                     TooLarge)
from metastable_rates.graphcalc import (
    RefinedChain,
    TransitionMatrix,
    WGraph,
    arborescence_weight,
    brute_force_count,
    count_wgraphs,
    enumerate_wgraphs,
    expected_visits,
    expected_visits_oracle,
    forest_count,
    mean_hitting_times,
    min_wgraph_weight,
    random_chain,
    random_refinement,
    stationary_from_graphs,
    stationary_linear,
    taboo_first_step,
    taboo_from_graphs,
    taboo_probability,
    trivial_refinement,
    visit_bound_check,
)


def test_three_states_two_roots():
    graphs = enumerate_wgraphs(3, [0, 1])
    assert [g.edges() for g in graphs] == [[(2, 0)], [(2, 1)]]


def test_four_states_one_root():
    assert count_wgraphs(4, [0]) == 16 == brute_force_count(4, [0])


@pytest.mark.parametrize("l,k", [(3, 1), (4, 2), (5, 1), (5, 3), (6, 2), (7, 1)])
def test_counts_match_forest_formula(l, k):
    roots = list(range(k))
    assert count_wgraphs(l, roots) == forest_count(l, k) == k * l ** (l - k - 1)


@given(st.integers(2, 6), st.data())
def test_counts_vs_brute_force(l, data):
    roots = data.draw(st.lists(st.integers(0, l - 1), min_size=1, max_size=l - 1, unique=True))
    assert count_wgraphs(l, roots) == brute_force_count(l, roots)


def test_every_enumerated_graph_is_valid():
    for g in enumerate_wgraphs(5, [2]):
        assert g.is_valid()
        assert len(g.edges()) == 4


def test_enumeration_cap():
    with pytest.raises(TooLarge):
        enumerate_wgraphs(10, [0])


def test_all_roots_is_trivial():
    V = np.ones((3, 3)) - np.eye(3)
    res = min_wgraph_weight(V, [0, 1, 2])
    assert res.weight == 0.0 and res.method == "trivial"


@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_enumeration_equals_arborescence(l, seed):
    rng = np.random.default_rng(seed)
    V = rng.integers(0, 20, size=(l, l)).astype(float)
    np.fill_diagonal(V, 0)
    k = int(rng.integers(1, l))
    W = rng.choice(l, size=k, replace=False).tolist()
    enum = min_wgraph_weight(V, W, method="enumeration")
    arb, g = arborescence_weight(V, W)
    assert enum.weight == arb
    assert g.is_valid() and g.weight(V) == arb


def test_ties_return_all_minimizers_sorted():
    V = np.zeros((3, 3))
    res = min_wgraph_weight(V, [0])
    assert len(res.argmin_graphs) == 3
    assert res.argmin_graphs == sorted(res.argmin_graphs)


def test_infinite_entries_forbid_arrows():
    V = np.array([[0, 1, np.inf], [2, 0, 5], [np.inf, 1, 0]])
    res = min_wgraph_weight(V, [0])
    assert res.weight == 3.0
    assert [g.edges() for g in res.argmin_graphs] == [[(1, 0), (2, 1)]]
    with pytest.raises(Infeasible):
        min_wgraph_weight(np.array([[0, np.inf], [np.inf, 0]]), [0])


def test_describe_is_one_based():
    g = WGraph((-1, 0, 1), (0,))
    assert g.describe() == "2->1 3->2"


# exact chains ----------------------------------------------------------------


def test_two_state_stationary_closed_form():
    p, q = F(1, 3), F(1, 5)
    P = TransitionMatrix([[1 - p, p], [q, 1 - q]])
    assert stationary_from_graphs(P) == [q / (p + q), p / (p + q)]


@pytest.mark.parametrize("seed", range(10))
def test_tree_formula_matches_linear_solve(seed):
    P = random_chain(np.random.default_rng(seed), 4)
    assert stationary_from_graphs(P) == stationary_linear(P)
    assert sum(stationary_from_graphs(P)) == 1


@pytest.mark.parametrize("seed", range(10))
def test_visits_and_taboo(seed):
    P = random_chain(np.random.default_rng(seed), 4, density=0.7)
    for j in range(4):
        assert expected_visits(P, j) == expected_visits_oracle(P, j)
    for i, j in product(range(4), range(4)):
        if i != j:
            assert taboo_from_graphs(P, i, j) == taboo_first_step(P, i, j) == taboo_probability(P, i, j)


def test_kac_formula():
    P = random_chain(np.random.default_rng(7), 5)
    lam = stationary_from_graphs(P)
    for i in range(5):
        # mean return time = 1 + sum_k P_ik E_k T_i
        h = mean_hitting_times(P, i)
        ret = 1 + sum(P.P[i][k] * h[k] for k in range(5))
        assert ret == 1 / lam[i]


def test_rejects_bad_matrices():
    with pytest.raises(NotStochastic):
        TransitionMatrix([[F(1, 2), F(1, 3)], [0, 1]])
    with pytest.raises(Reducible):
        stationary_from_graphs(TransitionMatrix([[1, 0], [F(1, 2), F(1, 2)]]))
    with pytest.raises(NotStochastic):
        TransitionMatrix([[1, 0, 0], [0, 1, 0]])


def test_decimals_become_exact():
    P = TransitionMatrix([[0.9, 0.1], ["1/4", "3/4"]])
    assert P.P[0][1] == F(1, 10)
    assert stationary_from_graphs(P) == [F(5, 7), F(2, 7)]


# refinements -------------------------------------------------------------------


def test_trivial_refinement_meets_bound():
    P = random_chain(np.random.default_rng(3), 3)
    ref = trivial_refinement(P)
    for j in range(1, 3):
        assert visit_bound_check(P, 1, ref, j).holds


@pytest.mark.parametrize("seed", range(8))
def test_random_refinement_meets_bound(seed):
    rng = np.random.default_rng(seed)
    P = random_chain(rng, 3 + seed % 2)
    ref = random_refinement(rng, P, F(3, 2))
    for j in range(1, P.l):
        rep = visit_bound_check(P, F(3, 2), ref, j)
        assert rep.holds and rep.margin >= 0


def test_band_violation_detected():
    P = TransitionMatrix([[F(1, 2), F(1, 2)], [F(1, 2), F(1, 2)]])
    bad = RefinedChain([[0], [1]], TransitionMatrix([[F(9, 10), F(1, 10)], [F(1, 2), F(1, 2)]]))
    with pytest.raises(BandViolated):
        visit_bound_check(P, F(2), bad, 1)


def test_absorbing_first_state():
    P = TransitionMatrix([[1, 0], [F(1, 2), F(1, 2)]])
    with pytest.raises((AbsorbingState, Reducible)):
        expected_visits(P, 1)
