import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from bgpdes.bgp import Network
from bgpdes.experiments import drive_scenario
from bgpdes.partition import (BipartitionProblem, InfeasibleError, Objective, SolverCapError,
                              brute_force_bipartition, default_epsilon, heuristic_bipartition,
                              recursive_bisect, solve_exact, solve_mip1, solve_mip2,
                              weights_from_ledger)
from bgpdes.topology import Graph, WeightMap, boundary, generate_glp

from conftest import complete_graph, cycle_graph, path_graph

CUT, EXPO = Objective.EDGE_CUT, Objective.VERTEX_EXPOSURE


def itertools_optimum(p):
    """Oracle: enumerate every side S via itertools, independent of the library."""
    g, w = p.graph, p.weights
    best = None
    for k in range(1, g.n):
        if abs(k - g.n / 2) > p.epsilon + 1e-9:
            continue
        for S in itertools.combinations(g.vertices, k):
            S = set(S)
            cut = [(u, v) for u, v in g.edges if (u in S) != (v in S)]
            if p.objective is CUT:
                val = sum(w.edge(u, v) for u, v in cut)
            else:
                val = sum(w.vertex(v) for v in {x for e in cut for x in e})
            best = val if best is None else min(best, val)
    return best


def random_instance(rng, n):
    edges = {(rng.randint(1, v - 1), v) for v in range(2, n + 1)}
    for _ in range(rng.randint(0, 2 * n)):
        u, v = rng.sample(range(1, n + 1), 2)
        edges.add((min(u, v), max(u, v)))
    g = Graph(n, edges)
    w = WeightMap({e: rng.randint(0, 9) for e in g.edges},
                  {v: rng.randint(0, 9) for v in g.vertices})
    return g, w


# --- spec examples

def test_cycle_edge_cut():
    sol = solve_mip1(BipartitionProblem(cycle_graph(4), epsilon=0))
    assert sol.objective_value == 2 and sol.optimal
    assert sol.S in ([1, 2], [1, 4])


def test_weighted_path_edge_cut():
    w = WeightMap({(1, 2): 5, (2, 3): 1, (3, 4): 5})
    sol = solve_mip1(BipartitionProblem(path_graph(4), w, 0))
    assert sol.objective_value == 1 and sol.S == [1, 2]


def test_single_edge():
    w = WeightMap({(1, 2): 7})
    assert solve_mip1(BipartitionProblem(path_graph(2), w, 0)).objective_value == 7


def test_path_exposure():
    sol = solve_mip2(BipartitionProblem(path_graph(4), epsilon=0, objective=EXPO))
    assert sol.objective_value == 2 and sol.S == [1, 2]
    assert sol.gamma(path_graph(4)) == {1: 0, 2: 1, 3: 1, 4: 0}


def test_cycle_exposure_all_four():
    sol = solve_mip2(BipartitionProblem(cycle_graph(4), epsilon=0, objective=EXPO))
    assert sol.objective_value == 4


def test_star_heavy_centre():
    g = Graph(4, [(1, 2), (1, 3), (1, 4)])
    w = WeightMap({}, {1: 100, 2: 1, 3: 1, 4: 1})
    p = BipartitionProblem(g, w, 1, EXPO)
    sol = solve_mip2(p)
    # centre stays with two leaves; the lone leaf and the centre are exposed
    assert sol.objective_value == brute_force_bipartition(p).objective_value == 101
    assert len(sol.S) == 3 and 1 in sol.S


def test_empty_edge_set_zero():
    assert brute_force_bipartition(BipartitionProblem(Graph(6))).objective_value == 0


def test_complete_graph_cut_four():
    assert brute_force_bipartition(BipartitionProblem(complete_graph(4), epsilon=0)
                                   ).objective_value == 4


def test_default_epsilon():
    assert default_epsilon(10) == 0 and default_epsilon(11) == 0.5


# --- errors

def test_parity_infeasible():
    with pytest.raises(InfeasibleError):
        solve_mip1(BipartitionProblem(path_graph(5), epsilon=0))


def test_wrong_objective_rejected():
    with pytest.raises(ValueError):
        solve_mip1(BipartitionProblem(path_graph(4), objective=EXPO))
    with pytest.raises(ValueError):
        solve_mip2(BipartitionProblem(path_graph(4)))


def test_caps():
    with pytest.raises(SolverCapError):
        solve_exact(BipartitionProblem(path_graph(30)), cap=20)
    with pytest.raises(SolverCapError):
        brute_force_bipartition(BipartitionProblem(path_graph(21), epsilon=0.5))


def test_negative_epsilon():
    with pytest.raises(ValueError):
        BipartitionProblem(path_graph(4), epsilon=-1)


# --- exact solver against brute force

@pytest.mark.parametrize("objective", list(Objective))
@pytest.mark.parametrize("eps", [0, 1])
def test_exact_equals_oracles(objective, eps):
    rng = random.Random(17 + eps)
    for _ in range(25):
        n = rng.choice(range(4, 13, 2))
        g, w = random_instance(rng, n)
        p = BipartitionProblem(g, w, eps, objective)
        ex, bf = solve_exact(p), brute_force_bipartition(p)
        assert ex.objective_value == bf.objective_value == itertools_optimum(p)
        # same tie-break: lexicographically smallest S holding vertex 1
        assert ex.S == bf.S
        ex.check(p)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 11), st.integers(0, 10_000), st.sampled_from(list(Objective)),
       st.sampled_from([0.5, 1, 1.5, 2]))
def test_solution_invariants(n, seed, objective, eps):
    g, w = random_instance(random.Random(seed), n)
    p = BipartitionProblem(g, w, eps, objective)
    sol = solve_exact(p)
    k = len(sol.S)
    assert n / 2 - eps - 1e-9 <= k <= n / 2 + eps + 1e-9
    assert set(sol.S) | set(sol.S_bar) == set(g.vertices) and 1 in sol.S
    beta = sol.beta(g)
    if objective is CUT:
        recomputed = sum(w.edge(*e) for e, b in beta.items() if b)
    else:
        recomputed = sum(w.vertex(v) for v, c in sol.gamma(g).items() if c)
    assert recomputed == sol.objective_value


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 11), st.integers(0, 10_000), st.sampled_from(list(Objective)))
def test_optimum_monotone_in_epsilon(n, seed, objective):
    g, w = random_instance(random.Random(seed), n)
    base = 0 if n % 2 == 0 else 0.5
    vals = [solve_exact(BipartitionProblem(g, w, base + k, objective)).objective_value
            for k in range(3)]
    assert vals[0] >= vals[1] >= vals[2]


# --- heuristic

def test_heuristic_close_to_optimum():
    rng = random.Random(99)
    close = 0
    total = 200
    for i in range(total):
        g, w = random_instance(rng, rng.randint(4, 12))
        p = BipartitionProblem(g, w, rng.choice([0.5, 1]) if g.n % 2 else rng.choice([0, 1]),
                               rng.choice(list(Objective)))
        h = heuristic_bipartition(p, seed=i)
        bf = brute_force_bipartition(p)
        assert not h.optimal
        h.check(p)
        close += h.objective_value <= 1.1 * bf.objective_value + 1e-9
    assert close >= 0.95 * total


def test_heuristic_cycle_and_determinism():
    p = BipartitionProblem(cycle_graph(4), epsilon=0)
    assert heuristic_bipartition(p).objective_value == 2
    g = generate_glp(150, seed=3)
    p = BipartitionProblem(g, epsilon=2)
    a, b = heuristic_bipartition(p, seed=5), heuristic_bipartition(p, seed=5)
    assert a.side_of == b.side_of


# --- recursive bisection

def test_recursive_q1_equals_bipartition():
    g = generate_glp(14, seed=2)
    pa = recursive_bisect(g, None, 1)
    sol = solve_exact(BipartitionProblem(g))
    assert pa.blocks() == [sol.S, sol.S_bar]


def test_recursive_path_eight_into_four():
    g = path_graph(8)
    pa = recursive_bisect(g, None, 2, epsilon=0)
    assert pa.blocks() == [[1, 2], [3, 4], [5, 6], [7, 8]]
    assert len(boundary(g, pa).cut_edges) == 3


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 20), st.integers(0, 10_000), st.sampled_from(["exact", "heuristic"]))
def test_recursive_blocks_cover(n, seed, solver):
    g = generate_glp(n, seed=seed)
    pa = recursive_bisect(g, None, 2, solver=solver)
    blocks = pa.blocks()
    assert len(blocks) == 4 and all(blocks)
    assert sorted(v for b in blocks for v in b) == list(g.vertices)


def test_recursive_too_small_block():
    with pytest.raises(InfeasibleError, match="level 2"):
        recursive_bisect(path_graph(3), None, 2, epsilon=0.5)


# --- weights from a reference run

def test_weights_two_nodes():
    net = Network(Graph(2, [(1, 2)]))
    drive_scenario(net, 1)
    w = weights_from_ledger(net.ledger)
    # each self-route goes out, then comes back as a looped echo
    assert w.edge(1, 2) == 4
    assert w.vertex(1) == 2 and w.vertex(2) == 2


def test_weights_unused_link_zero_and_conservation(glp100):
    net = Network(glp100)
    drive_scenario(net, 1)
    w = weights_from_ledger(net.ledger, glp100)
    assert sum(w.edge_weights.values()) == net.ledger.totals["entries"]
    quiet = Graph(3, [(1, 2), (2, 3)])
    w2 = weights_from_ledger(Network(quiet).ledger, quiet)
    assert w2.edge(2, 3) == 0 and w2.vertex(3) == 0
