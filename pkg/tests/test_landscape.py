import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastable_rates.errors import EmptySet, NonUniqueDeepest, NotPeriodic, OutOfDomain
from metastable_rates.landscape import (
    PotentialLandscape,
    cosine_well,
    double_well,
    find_equilibria,
    from_extrema,
    from_knots,
    grid_quasipotential_oracle,
    quasipotential_1d,
    quasipotential_from,
    quasipotential_matrix,
    random_extrema_landscape,
    random_knot_landscape,
    set_infima,
    three_well,
)


def sign_change_count(L, n=200001):
    xs = np.linspace(L.lo, L.hi, n, endpoint=False)
    s = np.sign(L.dU(xs))
    s = s[s != 0]
    return int(np.sum(s != np.roll(s, 1)))


def test_double_well_equilibria_order():
    dw = double_well(1.0, 0.5)
    eq = find_equilibria(dw)
    np.testing.assert_allclose(eq.points, [-0.3, 0.3, -0.6, 0.0], atol=1e-9)
    assert eq.stable.tolist() == [True, True, False, False]
    assert eq.l == 4


def test_double_well_heights():
    dw = double_well(1.0, 0.4, width=0.5)
    U = dw.U(np.array([-0.5, 0.0, 0.5, -1.0]))
    np.testing.assert_allclose(U, [0.0, 1.0, 0.6, 2.0], atol=1e-12)


def test_three_well_matches_dense_scan():
    L = three_well()
    eq = find_equilibria(L)
    # on the circle every well has a barrier on each side
    assert eq.l == sign_change_count(L) == 6
    assert eq.stable.sum() == 3
    mins = eq.points[eq.stable]
    assert np.argmin(L.U(mins)) == 0
    np.testing.assert_allclose(eq.points[0], 0.5, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_random_landscapes_alternate(seed):
    L = random_extrema_landscape(np.random.default_rng(seed))
    eq = find_equilibria(L)
    order = np.argsort(eq.points)
    stab = eq.stable[order]
    assert np.all(stab != np.roll(stab, 1))
    assert eq.l == sign_change_count(L)


def test_knots_must_close():
    with pytest.raises(NotPeriodic):
        from_knots([0, 0.5, 1], [0, 1, 0.5])


def test_non_periodic_callable_rejected():
    with pytest.raises(NotPeriodic):
        PotentialLandscape(0.0, 1.0, lambda x: np.asarray(x), lambda x: np.ones_like(np.asarray(x)))


def test_tied_deepest_well():
    L = from_extrema([0.0, 0.25, 0.5, 0.75], [1.0, 0.0, 1.0, 0.0], 0.0, 1.0)
    with pytest.raises(NonUniqueDeepest):
        find_equilibria(L)


def test_extrema_outside_domain():
    with pytest.raises(OutOfDomain):
        from_extrema([0.0, 1.5], [1.0, 0.0], 0.0, 1.0)


def test_quasipotential_double_well_values():
    dw = double_well(1.0, 0.5)
    eq = find_equilibria(dw)
    V = quasipotential_matrix(dw, eq).V
    # a = 2 so V is the uphill rise
    assert V[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert V[1, 0] == pytest.approx(0.5, abs=1e-12)
    assert V[0, 2] == pytest.approx(2.0, abs=1e-12)


def test_noise_convention_scales_quasipotential():
    a1 = double_well(1.0, 0.5, noise=1.0)
    a2 = double_well(1.0, 0.5, noise=2.0)
    assert quasipotential_1d(a1, -0.3, 0.3) == pytest.approx(2 * quasipotential_1d(a2, -0.3, 0.3))


@given(st.integers(0, 10_000))
def test_quasipotential_matrix_axioms(seed):
    L = random_extrema_landscape(np.random.default_rng(seed))
    eq = find_equilibria(L)
    Q = quasipotential_matrix(L, eq)
    V = Q.V
    assert np.all(np.diag(V) == 0)
    assert np.all(V >= 0)
    # triangle inequality over all triples
    assert np.all(V[:, None, :] <= V[:, :, None] + V[None, :, :] + 1e-12)
    assert Q.violations() == []


def test_reversal_identity_two_wells():
    dw = double_well(1.3, 0.45, width=0.4)
    eq = find_equilibria(dw)
    V = quasipotential_matrix(dw, eq).V
    dU = float(dw.U(np.array([eq.points[1]]))[0] - dw.U(np.array([eq.points[0]]))[0])
    assert V[0, 1] - V[1, 0] == pytest.approx(2.0 / dw.noise * dU, abs=1e-12)


def test_cosine_well_has_one_well():
    eq = find_equilibria(cosine_well())
    np.testing.assert_allclose(eq.points, [0.0, 0.5], atol=1e-9)
    assert eq.stable.tolist() == [True, False]


@pytest.mark.parametrize("seed", range(4))
def test_downhill_is_free(seed):
    L = random_extrema_landscape(np.random.default_rng(seed))
    eq = find_equilibria(L)
    V = quasipotential_matrix(L, eq).V
    pos = np.argsort(eq.points)
    n = eq.l
    for k in range(n):
        i = pos[k]
        if eq.stable[i]:
            continue
        for nb in (pos[(k - 1) % n], pos[(k + 1) % n]):
            assert V[i, nb] == 0.0


@pytest.mark.parametrize("seed", range(6))
def test_against_grid_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    L = random_knot_landscape(rng)
    x = float(rng.uniform(L.lo, L.hi))
    ys = rng.uniform(L.lo, L.hi, size=30)
    ref, dx, dU = grid_quasipotential_oracle(L, x, ys, n=20000)
    got = quasipotential_from(L, x, ys)
    assert np.max(np.abs(got - ref)) <= 2 * (2.0 / L.noise) * dU


def test_set_infima_contains_equilibrium():
    dw = double_well(1.0, 0.5)
    eq = find_equilibria(dw)
    inf = set_infima(dw, eq, [(0.25, 0.35)], 0.0)
    assert inf.fV[1] == pytest.approx(0.0, abs=1e-12)
    # from O_1 the cheapest way into A is over the central barrier
    assert inf.fV[0] == pytest.approx(1.0, abs=1e-9)
    assert inf.spacing > 0


def test_set_infima_f_band():
    dw = double_well(1.0, 0.5)
    eq = find_equilibria(dw)
    inf = set_infima(dw, eq, [(0.1, 0.5)], lambda x: 0.2 + x**2)
    assert np.all(inf.fV <= inf.two_fV + 1e-12)
    assert np.all(inf.two_fV <= 2 * inf.fV + 1e-12)


def test_set_infima_empty():
    dw = double_well(1.0, 0.5)
    eq = find_equilibria(dw)
    with pytest.raises((EmptySet, OutOfDomain)):
        set_infima(dw, eq, [(5.0, 6.0)], 0.0)
