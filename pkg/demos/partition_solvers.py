"""
Exact and heuristic balanced bipartition
=========================================

"""

# a random weighted graph small enough for brute force
import random
from bgpdes.topology import Graph, WeightMap
rng = random.Random(4)
n = 14
edges = {(rng.randint(1, v - 1), v) for v in range(2, n + 1)}
while len(edges) < 30:
    u, v = sorted(rng.sample(range(1, n + 1), 2))
    edges.add((u, v))
g = Graph(n, edges)
w = WeightMap({e: rng.randint(1, 9) for e in g.edges},
              {v: rng.randint(1, 9) for v in g.vertices})

# three solvers on the same cut problem, sides within one vertex of equal
from bgpdes.partition import (BipartitionProblem, Objective, brute_force_bipartition,
                              heuristic_bipartition, solve_exact)
p = BipartitionProblem(g, w, epsilon=1, objective=Objective.EDGE_CUT)
bf = brute_force_bipartition(p)
ex = solve_exact(p)
h = heuristic_bipartition(p)
print(f"brute force {bf.objective_value:g}, branch and bound {ex.objective_value:g} "
      f"({ex.nodes} nodes), local search {h.objective_value:g}")
print("S =", ex.S)

# the second objective penalises routers that end up on the boundary
p2 = BipartitionProblem(g, w, epsilon=1, objective=Objective.VERTEX_EXPOSURE)
ex2 = solve_exact(p2)
exposed = [v for v, x in ex2.gamma(g).items() if x]
print(f"exposure objective {ex2.objective_value:g}, boundary routers {exposed}")

# odd size with no slack cannot be split evenly
from bgpdes.partition import InfeasibleError
try:
    solve_exact(BipartitionProblem(Graph(5, [(1, 2), (2, 3), (3, 4), (4, 5)]), epsilon=0))
except InfeasibleError as exc:
    print("infeasible:", exc)
