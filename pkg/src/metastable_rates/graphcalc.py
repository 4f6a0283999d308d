"""W-graph combinatorics and exact Markov-chain graph identities.

States are 0-based in code: state ``0`` plays the role of the deepest
equilibrium ``O_1``.  A W-graph is stored as an arrow map ``arrows`` with
``arrows[i] = -1`` for roots and the target of the single outgoing arrow
otherwise.

Two independent routes exist for most quantities:

* minimum-weight graphs by brute enumeration and by the Chu-Liu/Edmonds
  contraction algorithm for spanning in-arborescences;
* stationary laws, visit counts and taboo probabilities by the graph
  (Markov-chain tree) formulas and by exact linear solves.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AbsorbingState,
    BandViolated,
    IdentityMismatch,
    Infeasible,
    NotStochastic,
    Reducible,
    TooLarge,
)
from .exact import fmatrix, identity, inverse, solve_vec, to_fraction

MAX_ENUM = 9


# W-graphs -------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class WGraph:
    arrows: tuple[int, ...]
    roots: tuple[int, ...] = field(compare=False)

    @property
    def l(self) -> int:
        return len(self.arrows)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in enumerate(self.arrows) if j >= 0]

    def weight(self, V) -> float:
        V = np.asarray(V, dtype=float)
        return float(sum(V[i, j] for i, j in self.edges()))

    def is_valid(self) -> bool:
        roots = set(self.roots)
        for i, j in enumerate(self.arrows):
            if (i in roots) != (j < 0) or j == i:
                return False
        for i in range(self.l):
            k, steps = i, 0
            while k not in roots:
                k = self.arrows[k]
                steps += 1
                if steps > self.l:
                    return False
        return True

    def describe(self, one_based: bool = True) -> str:
        s = 1 if one_based else 0
        return " ".join(f"{i + s}->{j + s}" for i, j in self.edges())


def _roots_tuple(l: int, W: Iterable[int]) -> tuple[int, ...]:
    roots = tuple(sorted(set(int(w) for w in W)))
    if l > MAX_ENUM:
        raise TooLarge(f"enumeration limited to l <= {MAX_ENUM}, got {l}")
    if not roots or len(roots) >= l:
        raise ValueError(f"root set must satisfy 1 <= |W| < l, got {roots} with l={l}")
    if roots[0] < 0 or roots[-1] >= l:
        raise ValueError(f"root index out of range 0..{l - 1}")
    return roots


def _acyclic_mask(maps: np.ndarray, is_root: np.ndarray) -> np.ndarray:
    """Rows of ``maps`` (roots pointing to themselves) that drain into roots."""
    l = maps.shape[1]
    f = maps
    steps = 1
    while steps < l:
        f = np.take_along_axis(f, f, axis=1)
        steps *= 2
    return is_root[f].all(axis=1)


@lru_cache(maxsize=256)
def _arrow_maps(l: int, roots: tuple[int, ...]) -> np.ndarray:
    """All valid arrow maps as an int8 array, lexicographically sorted."""
    is_root = np.zeros(l, dtype=bool)
    is_root[list(roots)] = True
    free = [i for i in range(l) if not is_root[i]]
    nf = len(free)
    # split the first (up to) two free nodes off as a prefix to bound memory
    n_prefix = min(2, nf)
    prefix_choices = list(itertools.product(range(l - 1), repeat=n_prefix))
    tail = nf - n_prefix
    n_tail = (l - 1) ** tail
    codes = np.arange(n_tail, dtype=np.int64)
    tail_digits = np.empty((n_tail, tail), dtype=np.int64)
    for k in range(tail - 1, -1, -1):
        tail_digits[:, k] = codes % (l - 1)
        codes //= l - 1
    out = []
    for pre in prefix_choices:
        maps = np.empty((n_tail, l), dtype=np.int64)
        maps[:, list(roots)] = np.array(roots)
        for k, d in enumerate(pre):
            i = free[k]
            maps[:, i] = d + (d >= i)
        for k in range(tail):
            i = free[n_prefix + k]
            d = tail_digits[:, k]
            maps[:, i] = d + (d >= i)
        ok = _acyclic_mask(maps, is_root)
        out.append(maps[ok])
    res = np.concatenate(out).astype(np.int8)
    res[:, list(roots)] = -1
    res.setflags(write=False)
    return res


def enumerate_wgraphs(l: int, W: Iterable[int]) -> list[WGraph]:
    """Every W-graph on ``{0, ..., l-1}`` with root set ``W``."""
    roots = _roots_tuple(l, W)
    return [WGraph(tuple(int(v) for v in row), roots) for row in _arrow_maps(l, roots)]


def count_wgraphs(l: int, W: Iterable[int]) -> int:
    return int(_arrow_maps(l, _roots_tuple(l, W)).shape[0])


def brute_force_count(l: int, W: Iterable[int]) -> int:
    """Count arrow maps with no cycles by plain iteration (test oracle)."""
    roots = set(W)
    free = [i for i in range(l) if i not in roots]
    n = 0
    for targets in itertools.product(*[[j for j in range(l) if j != i] for i in free]):
        amap = dict(zip(free, targets))
        ok = True
        for i in free:
            k, seen = i, 0
            while k not in roots and seen <= l:
                k = amap[k]
                seen += 1
            if k not in roots:
                ok = False
                break
        n += ok
    return n


def forest_count(l: int, k: int) -> int:
    """Rooted spanning forests of the complete graph with ``k`` given roots."""
    return k * l ** (l - k - 1)


# minimum-weight graphs ------------------------------------------------------


@dataclass(frozen=True)
class GraphMinResult:
    weight: float
    argmin_graphs: list[WGraph]
    count_enumerated: int
    method: str = "enumeration"


def _edmonds_in(C: np.ndarray, root: int) -> np.ndarray | None:
    """Min-cost spanning in-arborescence into ``root`` (parent array or None)."""
    n = C.shape[0]
    C = C.copy()
    np.fill_diagonal(C, np.inf)
    best = np.full(n, -1)
    for u in range(n):
        if u == root:
            continue
        v = int(np.argmin(C[u]))
        if not np.isfinite(C[u, v]):
            return None
        best[u] = v
    # look for a cycle among the chosen arrows
    color = np.zeros(n, dtype=int)
    cycle = None
    for s in range(n):
        if s == root or color[s]:
            continue
        path = []
        u = s
        while u != root and color[u] == 0:
            color[u] = 1
            path.append(u)
            u = best[u]
        if u != root and color[u] == 1 and u in path:
            cycle = path[path.index(u):]
        for p in path:
            color[p] = 2
        if cycle:
            break
    if cycle is None:
        return best
    in_cyc = np.zeros(n, dtype=bool)
    in_cyc[cycle] = True
    others = [u for u in range(n) if not in_cyc[u]]
    idx = {u: k for k, u in enumerate(others)}
    c = len(others)
    m = c + 1
    C2 = np.full((m, m), np.inf)
    C2[:c, :c] = C[np.ix_(others, others)]
    cyc = np.array(cycle)
    entry = {}
    for u in others:
        k = int(np.argmin(C[u, cyc]))
        C2[idx[u], c] = C[u, cyc[k]]
        entry[u] = int(cyc[k])
    exit_node = {}
    reduced = C[cyc][:, others] - C[cyc, best[cyc]][:, None]
    for k, v in enumerate(others):
        r = int(np.argmin(reduced[:, k]))
        C2[c, k] = reduced[r, k]
        exit_node[v] = int(cyc[r])
    sub = _edmonds_in(C2, idx[root])
    if sub is None:
        return None
    parent = best.copy()
    for u in others:
        if u == root:
            continue
        p = sub[idx[u]]
        parent[u] = entry[u] if p == c else others[p]
    v = others[sub[c]]
    parent[exit_node[v]] = v
    parent[root] = -1
    return parent


def arborescence_weight(V, W: Iterable[int]) -> tuple[float, WGraph]:
    """Min W-graph weight by contraction; several roots are merged into one."""
    V = np.asarray(V, dtype=float)
    l = V.shape[0]
    roots = tuple(sorted(set(int(w) for w in W)))
    free = [i for i in range(l) if i not in roots]
    n = len(free) + 1
    C = np.full((n, n), np.inf)
    C[: n - 1, : n - 1] = V[np.ix_(free, free)]
    sub_to_root = np.argmin(V[np.ix_(free, roots)], axis=1)
    C[: n - 1, n - 1] = V[np.ix_(free, roots)].min(axis=1)
    parent = _edmonds_in(C, n - 1)
    if parent is None:
        raise Infeasible(f"no finite-weight graph for roots {roots}")
    arrows = [-1] * l
    for k, u in enumerate(free):
        p = parent[k]
        arrows[u] = roots[sub_to_root[k]] if p == n - 1 else free[p]
    g = WGraph(tuple(arrows), roots)
    return g.weight(V), g


def _close(a: float, b: float) -> bool:
    return a == b or abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def min_wgraph_weight(V, W: Iterable[int], method: str = "auto") -> GraphMinResult:
    """Least total ``V`` over W-graphs, with every minimizing graph.

    For ``l <= 9`` the weight comes from full enumeration and is cross-checked
    against the contraction algorithm; a disagreement raises
    ``IdentityMismatch``.  Larger ``l`` uses the contraction algorithm only.
    """
    V = np.asarray(V, dtype=float)
    l = V.shape[0]
    roots = tuple(sorted(set(int(w) for w in W)))
    if len(roots) == l:
        # every state is a root: the empty graph
        return GraphMinResult(0.0, [WGraph((-1,) * l, roots)], 1, "trivial")
    if method == "arborescence" or (method == "auto" and l > MAX_ENUM):
        w, g = arborescence_weight(V, roots)
        return GraphMinResult(w, [g], 0, "arborescence")
    maps = _arrow_maps(l, _roots_tuple(l, roots))
    free = [i for i in range(l) if i not in roots]
    weights = V[free, maps[:, free].astype(np.int64)].sum(axis=1)
    wmin = float(weights.min())
    if not np.isfinite(wmin):
        raise Infeasible(f"every graph with roots {roots} has infinite weight")
    tol = 1e-12 * max(1.0, abs(wmin))
    hit = maps[weights <= wmin + tol]
    graphs = sorted(WGraph(tuple(int(v) for v in row), roots) for row in hit)
    if method == "auto":
        wa, _ = arborescence_weight(V, roots)
        if not _close(wa, wmin):
            raise IdentityMismatch(f"enumeration {wmin} vs contraction {wa} for roots {roots}")
        method = "enumeration+arborescence"
    return GraphMinResult(wmin, graphs, int(maps.shape[0]), method)


def min_weight_over(V, W: Iterable[int]) -> float:
    return min_wgraph_weight(V, W).weight


# exact Markov chains --------------------------------------------------------


class TransitionMatrix:
    """Row-stochastic matrix with exact rational entries."""

    def __init__(self, P, V=None):
        rows = fmatrix(P)
        l = len(rows)
        if any(len(r) != l for r in rows):
            raise NotStochastic("matrix must be square")
        for i, r in enumerate(rows):
            if any(v < 0 or v > 1 for v in r):
                raise NotStochastic(f"row {i + 1} has entries outside [0, 1]")
            if sum(r) != 1:
                raise NotStochastic(f"row {i + 1} sums to {sum(r)}, not 1")
        self.P = rows
        self.V = None if V is None else np.asarray(V, dtype=float)

    @property
    def l(self) -> int:
        return len(self.P)

    def __getitem__(self, ij):
        i, j = ij
        return self.P[i][j]

    def is_irreducible(self) -> bool:
        l = self.l
        for start in range(l):
            seen = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for v in range(l):
                    if self.P[u][v] > 0 and v not in seen:
                        seen.add(v)
                        stack.append(v)
            if len(seen) < l:
                return False
        return True

    def require_irreducible(self):
        if not self.is_irreducible():
            raise Reducible("transition matrix is not irreducible")

    def graph_product(self, g: WGraph) -> Fraction:
        out = Fraction(1)
        for i, j in g.edges():
            out *= self.P[i][j]
            if out == 0:
                break
        return out

    def graph_sum(self, W: Iterable[int]) -> Fraction:
        """Sum of ``pi(g)`` over all W-graphs."""
        if len(set(W)) == self.l:
            return Fraction(1)
        roots = _roots_tuple(self.l, W)
        total = Fraction(0)
        P = self.P
        for row in _arrow_maps(self.l, roots).tolist():
            prod = Fraction(1)
            for i, j in enumerate(row):
                if j >= 0:
                    p = P[i][j]
                    if p == 0:
                        prod = Fraction(0)
                        break
                    prod *= p
            total += prod
        return total


def stationary_from_graphs(P: TransitionMatrix) -> list[Fraction]:
    """Invariant law from the Markov-chain tree formula."""
    P = P if isinstance(P, TransitionMatrix) else TransitionMatrix(P)
    P.require_irreducible()
    if P.l == 1:
        return [Fraction(1)]
    sums = [P.graph_sum([i]) for i in range(P.l)]
    Z = sum(sums)
    return [s / Z for s in sums]


def stationary_linear(P: TransitionMatrix) -> list[Fraction]:
    """Invariant law from ``lam P = lam``, ``sum(lam) = 1`` (exact oracle)."""
    P = P if isinstance(P, TransitionMatrix) else TransitionMatrix(P)
    P.require_irreducible()
    l = P.l
    # transpose system with the last equation replaced by normalization
    A = [[P.P[j][i] - (1 if i == j else 0) for j in range(l)] for i in range(l)]
    A[-1] = [Fraction(1)] * l
    b = [Fraction(0)] * (l - 1) + [Fraction(1)]
    return solve_vec(A, b)


def mean_hitting_times(P: TransitionMatrix, target: int) -> list[Fraction]:
    """``E_x T_target`` for every ``x`` (zero at the target)."""
    l = P.l
    others = [x for x in range(l) if x != target]
    A = [[(1 if x == y else 0) - P.P[x][y] for y in others] for x in others]
    m = solve_vec(A, [Fraction(1)] * len(others))
    out = [Fraction(0)] * l
    for x, v in zip(others, m):
        out[x] = v
    return out


def _cycle_visits_oracle(P: TransitionMatrix, start: int) -> list[Fraction]:
    """Expected visits to each state before the first return to 0 that
    follows a visit elsewhere, starting at ``start`` (fundamental matrix)."""
    l = P.l
    # transient states: index 0 = state 0 before leaving it, 1..l-1 = states 1..l-1
    Q = [[Fraction(0)] * l for _ in range(l)]
    Q[0][0] = P.P[0][0]
    for k in range(1, l):
        Q[0][k] = P.P[0][k]
        for k2 in range(1, l):
            Q[k][k2] = P.P[k][k2]
    IQ = [[(1 if i == j else 0) - Q[i][j] for j in range(l)] for i in range(l)]
    Nmat = inverse(IQ)
    return list(Nmat[start])


def expected_visits_oracle(P: TransitionMatrix, j: int) -> tuple[Fraction, Fraction]:
    P = P if isinstance(P, TransitionMatrix) else TransitionMatrix(P)
    P.require_irreducible()
    if P.P[0][0] == 1:
        raise AbsorbingState("state 1 is absorbing")
    e1 = _cycle_visits_oracle(P, 0)[j]
    ej = e1 if j == 0 else _cycle_visits_oracle(P, j)[j]
    return e1, ej


def expected_visits(P: TransitionMatrix, j: int) -> tuple[Fraction, Fraction]:
    """``(E_1 N_j, E_j N_j)`` from the graph formulas, checked exactly.

    ``N_j`` counts visits to ``j`` (time 0 included) before the first visit
    to state 1 made after the chain has left state 1.
    """
    P = P if isinstance(P, TransitionMatrix) else TransitionMatrix(P)
    P.require_irreducible()
    p11 = P.P[0][0]
    if p11 == 1:
        raise AbsorbingState("state 1 is absorbing")
    lam = stationary_from_graphs(P)
    e1 = (1 / (1 - p11)) * lam[j] / lam[0]
    if j == 0:
        ej = 1 / (1 - p11)
    else:
        ej = P.graph_sum([0, j]) / P.graph_sum([0])
        via_times = lam[j] * (mean_hitting_times(P, 0)[j] + mean_hitting_times(P, j)[0])
        if ej != via_times:
            raise IdentityMismatch(f"E_j N_j: graph ratio {ej} vs hitting times {via_times}")
    o1, oj = expected_visits_oracle(P, j)
    if (e1, ej) != (o1, oj):
        raise IdentityMismatch(f"expected visits ({e1}, {ej}) vs oracle ({o1}, {oj})")
    return e1, ej


def taboo_first_step(P: TransitionMatrix, i: int, j: int) -> Fraction:
    """``P_i(T_j < T_i^+)`` from the first-step linear system."""
    l = P.l
    others = [x for x in range(l) if x not in (i, j)]
    if others:
        A = [[(1 if x == y else 0) - P.P[x][y] for y in others] for x in others]
        b = [P.P[x][j] for x in others]
        h = dict(zip(others, solve_vec(A, b)))
    else:
        h = {}
    return P.P[i][j] + sum((P.P[i][x] * h[x] for x in others), Fraction(0))


def taboo_from_graphs(P: TransitionMatrix, i: int, j: int) -> Fraction:
    """``P_i(T_j < T_i^+)`` as ``sum over G({j}) / sum over G({i, j})``."""
    return P.graph_sum([j]) / P.graph_sum([i, j])


def taboo_probability(P: TransitionMatrix, i: int, j: int) -> Fraction:
    """``P_i(T_j < T_i^+)``, returned only if three independent routes agree."""
    P = P if isinstance(P, TransitionMatrix) else TransitionMatrix(P)
    if i == j:
        raise ValueError("need i != j")
    P.require_irreducible()
    left = taboo_first_step(P, i, j)
    lam = stationary_from_graphs(P)
    right = 1 / (lam[i] * (mean_hitting_times(P, i)[j] + mean_hitting_times(P, j)[i]))
    graphs = taboo_from_graphs(P, i, j)
    if not left == right == graphs:
        raise IdentityMismatch(f"taboo probability {left} vs {right} vs {graphs}")
    return left


# refinements and the visit bound --------------------------------------------


@dataclass
class RefinedChain:
    """A chain on micro states grouped into one block per base state."""

    blocks: list[list[int]]
    P: TransitionMatrix

    def block_of(self) -> list[int]:
        out = [0] * self.P.l
        for b, members in enumerate(self.blocks):
            for x in members:
                out[x] = b
        return out

    def lumped(self, x: int, j: int) -> Fraction:
        return sum((self.P.P[x][y] for y in self.blocks[j]), Fraction(0))


def check_band(P_base: TransitionMatrix, a, ref: RefinedChain) -> None:
    a = to_fraction(a)
    if a < 1:
        raise ValueError("band factor must be >= 1")
    for i, members in enumerate(ref.blocks):
        for x in members:
            for j in range(P_base.l):
                if j == i:
                    continue
                p = ref.lumped(x, j)
                pij = P_base.P[i][j]
                if not (pij / a <= p <= a * pij):
                    raise BandViolated(
                        f"micro state {x} in block {i + 1}: p(x, X_{j + 1}) = {p} outside "
                        f"[{pij / a}, {a * pij}]")


@dataclass(frozen=True)
class VisitBoundReport:
    j: int
    a: Fraction
    exact: list[Fraction]
    bound: Fraction
    margin: Fraction

    @property
    def holds(self) -> bool:
        return self.margin >= 0


def refined_visits(ref: RefinedChain, j: int) -> list[Fraction]:
    """Exact ``E_x N~_j`` for every micro state ``x`` in block 0."""
    blk = ref.block_of()
    n = ref.P.l
    home = [x for x in range(n) if blk[x] == 0]
    away = [x for x in range(n) if blk[x] != 0]
    # phase A: in block 0 before ever leaving; phase B: away until back home
    states = [("A", x) for x in home] + [("B", x) for x in away]
    pos = {s: k for k, s in enumerate(states)}
    m = len(states)
    Q = [[Fraction(0)] * m for _ in range(m)]
    for x in home:
        for y in home:
            Q[pos[("A", x)]][pos[("A", y)]] = ref.P.P[x][y]
        for y in away:
            Q[pos[("A", x)]][pos[("B", y)]] = ref.P.P[x][y]
    for x in away:
        for y in away:
            Q[pos[("B", x)]][pos[("B", y)]] = ref.P.P[x][y]
    IQ = [[(1 if r == c else 0) - Q[r][c] for c in range(m)] for r in range(m)]
    Nmat = inverse(IQ)
    cols = [pos[s] for s in states if blk[s[1]] == j]
    return [sum((Nmat[pos[("A", x)]][c] for c in cols), Fraction(0)) for x in home]


def visit_bound_check(P_base: TransitionMatrix, a, refinement: RefinedChain, j: int) -> VisitBoundReport:
    """Exact visit counts of a band-respecting refinement against their bound.

    The bound is ``a^(4^(l-1)) / sum_{k != 1} p_1k * (sum_{G(j)} pi / sum_{G(1)} pi)``.
    """
    P_base = P_base if isinstance(P_base, TransitionMatrix) else TransitionMatrix(P_base)
    a = to_fraction(a)
    check_band(P_base, a, refinement)
    P_base.require_irreducible()
    refinement.P.require_irreducible()
    l = P_base.l
    out_mass = sum(P_base.P[0][k] for k in range(1, l))
    if out_mass == 0:
        raise AbsorbingState("state 1 is absorbing")
    ratio = P_base.graph_sum([j]) / P_base.graph_sum([0])
    bound = a ** (4 ** (l - 1)) / out_mass * ratio
    exact = refined_visits(refinement, j)
    return VisitBoundReport(j, a, exact, bound, bound - max(exact))


# random generators (test and acceptance drivers) ----------------------------


def _rand_frac(rng: np.random.Generator, den: int = 12) -> Fraction:
    return Fraction(int(rng.integers(1, den + 1)), den)


def random_chain(rng: np.random.Generator, l: int, max_out: Fraction = Fraction(1, 2),
                 density: float = 1.0) -> TransitionMatrix:
    """Irreducible rational chain whose off-diagonal row mass is ``<= max_out``."""
    while True:
        rows = []
        for i in range(l):
            w = [Fraction(0)] * l
            for k in range(l):
                if k != i and rng.random() < density:
                    w[k] = _rand_frac(rng)
            tot = sum(w)
            if tot == 0:
                w[(i + 1) % l] = Fraction(1)
                tot = Fraction(1)
            scale = max_out * Fraction(int(rng.integers(1, 7)), 6)
            w = [v / tot * scale for v in w]
            w[i] = 1 - sum(w)
            rows.append(w)
        P = TransitionMatrix(rows)
        if P.is_irreducible():
            return P


def random_refinement(rng: np.random.Generator, P_base: TransitionMatrix, a,
                      max_block: int = 3) -> RefinedChain:
    """Random refinement satisfying the band condition for factor ``a``."""
    a = to_fraction(a)
    l = P_base.l
    sizes = [int(rng.integers(1, max_block + 1)) for _ in range(l)]
    blocks, start = [], 0
    for s in sizes:
        blocks.append(list(range(start, start + s)))
        start += s
    n = start
    rows = [[Fraction(0)] * n for _ in range(n)]
    steps = 8
    for i, members in enumerate(blocks):
        for x in members:
            used = Fraction(0)
            for j in range(l):
                if j == i or P_base.P[i][j] == 0:
                    continue
                # factor uniformly on a grid of [1/a, a]
                t = Fraction(int(rng.integers(0, steps + 1)), steps)
                r = 1 / a + t * (a - 1 / a)
                mass = r * P_base.P[i][j]
                used += mass
                _spread(rng, rows[x], blocks[j], mass)
            if used > 1:
                raise BandViolated("base chain leaves no room for a refinement with this a")
            _spread(rng, rows[x], members, 1 - used)
    return RefinedChain(blocks, TransitionMatrix(rows))


def _spread(rng, row, targets, mass):
    w = [_rand_frac(rng, 6) for _ in targets]
    tot = sum(w)
    for y, v in zip(targets, w):
        row[y] += mass * v / tot


def trivial_refinement(P_base: TransitionMatrix) -> RefinedChain:
    return RefinedChain([[i] for i in range(P_base.l)], TransitionMatrix(P_base.P))
