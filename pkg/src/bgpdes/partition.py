"""Balanced bipartitioning for distributed runs.

Two objectives over an assignment of every vertex to side S or its
complement:

* EDGE_CUT: total weight of edges with end-points on different sides
  (what crosses LPs when updates carry their entries);
* VERTEX_EXPOSURE: total weight of vertices with at least one neighbour on
  the other side (what must be ghosted when only identifiers cross).

Both are solved exactly by branch-and-bound for small graphs and by a
seeded swap local search otherwise. Equal optima are broken towards the
lexicographically smallest sorted S, where S is the side holding the
smallest vertex id.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .topology import Graph, PartitionAssignment, WeightMap, norm_edge

log = logging.getLogger(__name__)

EXACT_CAP = 64
BRUTE_FORCE_CAP = 20


class Objective(str, Enum):
    EDGE_CUT = "mip1"
    VERTEX_EXPOSURE = "mip2"


class InfeasibleError(ValueError):
    """No assignment satisfies the balance constraint."""


class SolverCapError(ValueError):
    """Instance too large for the requested exact method."""


def default_epsilon(n: int) -> float:
    """Exact halves for even n, sizes differing by one for odd n."""
    return 0.0 if n % 2 == 0 else 0.5


@dataclass
class BipartitionProblem:
    graph: Graph
    weights: Optional[WeightMap] = None
    epsilon: Optional[float] = None
    objective: Objective = Objective.EDGE_CUT

    def __post_init__(self):
        self.objective = Objective(self.objective)
        if self.weights is None:
            self.weights = WeightMap.unit(self.graph)
        if self.epsilon is None:
            self.epsilon = default_epsilon(self.graph.n)
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def n(self) -> int:
        return self.graph.n

    def size_range(self) -> Tuple[int, int]:
        """Allowed |S|: within epsilon of n/2, both sides non-empty."""
        n = self.n
        lo = max(1, math.ceil(n / 2 - self.epsilon - 1e-9))
        hi = min(n - 1, math.floor(n / 2 + self.epsilon + 1e-9))
        if lo > hi:
            raise InfeasibleError(
                f"no side size in [{n / 2 - self.epsilon}, {n / 2 + self.epsilon}] "
                f"splits {n} vertices into two non-empty sides")
        return lo, hi

    def evaluate(self, in_s: Sequence[bool]) -> float:
        """Objective of an assignment given as ``in_s[v]`` for v in 1..n."""
        g, w = self.graph, self.weights
        if self.objective is Objective.EDGE_CUT:
            return float(sum(w.edge(u, v) for u, v in g.edges if in_s[u] != in_s[v]))
        exposed = set()
        for u, v in g.edges:
            if in_s[u] != in_s[v]:
                exposed.update((u, v))
        return float(sum(w.vertex(v) for v in exposed))


@dataclass
class BipartitionSolution:
    side_of: Dict[int, int]  # 0 = S (holds the smallest id), 1 = complement
    objective_value: float
    optimal: bool
    nodes: int = 0

    @property
    def S(self) -> List[int]:
        return sorted(v for v, s in self.side_of.items() if s == 0)

    @property
    def S_bar(self) -> List[int]:
        return sorted(v for v, s in self.side_of.items() if s == 1)

    def beta(self, g: Graph) -> Dict[Tuple[int, int], int]:
        """Per-edge cut indicator (exclusive-or of the end-point sides)."""
        return {e: self.side_of[e[0]] ^ self.side_of[e[1]] for e in g.edges}

    def gamma(self, g: Graph) -> Dict[int, int]:
        """Per-vertex exposure indicator, normalised from the sides."""
        b = self.beta(g)
        out = {v: 0 for v in g.vertices}
        for (u, v), cut in b.items():
            if cut:
                out[u] = out[v] = 1
        return out

    def check(self, p: BipartitionProblem) -> None:
        lo, hi = p.size_range()
        if not lo <= len(self.S) <= hi:
            raise AssertionError(f"|S|={len(self.S)} outside [{lo}, {hi}]")
        in_s = [False] + [self.side_of[v] == 0 for v in p.graph.vertices]
        if p.evaluate(in_s) != self.objective_value:
            raise AssertionError("objective does not match the assignment")


def _solution(p: BipartitionProblem, s_members: Sequence[int], optimal: bool,
              nodes: int = 0) -> BipartitionSolution:
    members = set(s_members)
    if 1 not in members:
        members = set(p.graph.vertices) - members
    side = {v: 0 if v in members else 1 for v in p.graph.vertices}
    in_s = [False] + [side[v] == 0 for v in p.graph.vertices]
    return BipartitionSolution(side, p.evaluate(in_s), optimal, nodes)


# ---------------------------------------------------------------- exact

class _Instance:
    """0-based bitmask view of a problem."""

    def __init__(self, p: BipartitionProblem):
        g, w = p.graph, p.weights
        self.n = g.n
        self.nbr = [0] * g.n
        self.wadj: List[List[Tuple[int, float]]] = [[] for _ in range(g.n)]
        for u, v in g.edges:
            a, b = u - 1, v - 1
            self.nbr[a] |= 1 << b
            self.nbr[b] |= 1 << a
            we = w.edge(u, v)
            self.wadj[a].append((b, we))
            self.wadj[b].append((a, we))
        self.vw = [w.vertex(v) for v in g.vertices]
        self.edge_cut = p.objective is Objective.EDGE_CUT

    def bound(self, s: int, top: int) -> float:
        """Lower bound over completions once vertices 0..top are fixed
        (``s`` holds those in S, the rest of 0..top are in the complement)."""
        fixed = (1 << (top + 1)) - 1
        t = fixed & ~s
        total = 0.0
        if self.edge_cut:
            for u in range(self.n):
                if s >> u & 1:
                    total += sum(we for v, we in self.wadj[u] if t >> v & 1)
                elif u > top:
                    a = b = 0.0
                    for v, we in self.wadj[u]:
                        if v <= top:
                            if s >> v & 1:
                                a += we
                            else:
                                b += we
                    total += min(a, b)
            return total
        for u in range(self.n):
            nb = self.nbr[u]
            if u > top:
                if nb & s and nb & t:
                    total += self.vw[u]
            elif (nb & t) if s >> u & 1 else (nb & s):
                total += self.vw[u]
        return total

    def value(self, s: int) -> float:
        if self.edge_cut:
            return sum(we for u in range(self.n) if s >> u & 1
                       for v, we in self.wadj[u] if not s >> v & 1)
        full = (1 << self.n) - 1
        t = full & ~s
        return sum(self.vw[u] for u in range(self.n)
                   if self.nbr[u] & (t if s >> u & 1 else s))


def _exact(p: BipartitionProblem, cap: int) -> BipartitionSolution:
    if p.n > cap:
        raise SolverCapError(f"exact solver is capped at n={cap}, got n={p.n}; use the heuristic")
    lo, hi = p.size_range()
    inst = _Instance(p)
    n = p.n
    best_val = math.inf
    best_s = 0
    nodes = 0

    # Depth-first over S in lexicographic order of its sorted members, so the
    # first optimum met is the tie-break winner and equal bounds can be cut.
    stack = [(1, 1, 0, 0.0)]
    while stack:
        s, size, top, bnd = stack.pop()
        if bnd >= best_val:
            continue
        nodes += 1
        if lo <= size <= hi:
            val = inst.value(s)
            if val < best_val:
                best_val, best_s = val, s
        if size >= hi:
            continue
        children = []
        for e in range(top + 1, n):
            if size + 1 + (n - 1 - e) < lo:
                break
            child = s | 1 << e
            b = inst.bound(child, e)
            if b < best_val:
                children.append((child, size + 1, e, b))
        stack.extend(reversed(children))
    if best_val is math.inf:
        raise InfeasibleError("no balanced assignment found")
    members = [u + 1 for u in range(n) if best_s >> u & 1]
    return _solution(p, members, True, nodes)


def solve_mip1(p: BipartitionProblem, cap: int = EXACT_CAP) -> BipartitionSolution:
    """Minimum-weight balanced edge cut, solved to optimality."""
    if p.objective is not Objective.EDGE_CUT:
        raise ValueError("solve_mip1 needs the edge-cut objective")
    return _exact(p, cap)


def solve_mip2(p: BipartitionProblem, cap: int = EXACT_CAP) -> BipartitionSolution:
    """Minimum-weight balanced set of exposed vertices, solved to optimality."""
    if p.objective is not Objective.VERTEX_EXPOSURE:
        raise ValueError("solve_mip2 needs the vertex-exposure objective")
    return _exact(p, cap)


def solve_exact(p: BipartitionProblem, cap: int = EXACT_CAP) -> BipartitionSolution:
    return _exact(p, cap)


def brute_force_bipartition(p: BipartitionProblem) -> BipartitionSolution:
    """Enumerate every assignment with vertex 1 in S (vectorised)."""
    n = p.n
    if n > BRUTE_FORCE_CAP:
        raise SolverCapError(f"brute force is capped at n={BRUTE_FORCE_CAP}, got n={n}")
    lo, hi = p.size_range()
    masks = np.arange(1 << (n - 1), dtype=np.int64)
    # column v-1 says whether vertex v is in S; vertex 1 always is
    side = np.ones((masks.size, n), dtype=bool)
    for v in range(2, n + 1):
        side[:, v - 1] = (masks >> (v - 2)) & 1
    sizes = side.sum(axis=1)
    ok = (sizes >= lo) & (sizes <= hi)
    side = side[ok]
    g, w = p.graph, p.weights
    value = np.zeros(side.shape[0])
    if p.objective is Objective.EDGE_CUT:
        for u, v in g.edges:
            value += w.edge(u, v) * (side[:, u - 1] != side[:, v - 1])
    else:
        exposed = np.zeros_like(side)
        for u, v in g.edges:
            cut = side[:, u - 1] != side[:, v - 1]
            exposed[:, u - 1] |= cut
            exposed[:, v - 1] |= cut
        vw = np.array([w.vertex(v) for v in g.vertices])
        value = exposed.astype(float) @ vw
    best = value.min()
    ties = np.flatnonzero(value == best)
    members = min(tuple(int(v) + 1 for v in np.flatnonzero(side[i])) for i in ties)
    return _solution(p, members, True, int(side.shape[0]))


# ---------------------------------------------------------------- heuristic

class _LocalSearch:
    """Swap/move local search keeping per-vertex counts of foreign neighbours."""

    def __init__(self, p: BipartitionProblem):
        g, w = p.graph, p.weights
        self.n = g.n
        self.adj = [[(v - 1, w.edge(u, v)) for v in g.adj[u]] for u in g.vertices]
        self.vw = [w.vertex(v) for v in g.vertices]
        self.edge_cut = p.objective is Objective.EDGE_CUT

    def reset(self, side: List[int]) -> None:
        self.side = side
        self.ext = [0.0] * self.n   # weight to the other side
        self.internal = [0.0] * self.n
        self.foreign = [0] * self.n  # neighbours on the other side
        for u in range(self.n):
            for v, we in self.adj[u]:
                if side[u] != side[v]:
                    self.ext[u] += we
                    self.foreign[u] += 1
                else:
                    self.internal[u] += we

    def value(self) -> float:
        if self.edge_cut:
            return sum(self.ext) / 2
        return sum(self.vw[u] for u in range(self.n) if self.foreign[u])

    def move(self, u: int) -> None:
        side = self.side
        for v, we in self.adj[u]:
            if side[u] == side[v]:
                self.ext[v] += we
                self.internal[v] -= we
                self.foreign[v] += 1
            else:
                self.ext[v] -= we
                self.internal[v] += we
                self.foreign[v] -= 1
        self.ext[u], self.internal[u] = self.internal[u], self.ext[u]
        self.foreign[u] = len(self.adj[u]) - self.foreign[u]
        side[u] ^= 1

    def delta(self, u: int) -> float:
        """Objective change from moving u alone."""
        if self.edge_cut:
            return self.internal[u] - self.ext[u]
        side, foreign, vw = self.side, self.foreign, self.vw
        d = 0.0
        after_u = len(self.adj[u]) - foreign[u]
        d += vw[u] * ((after_u > 0) - (foreign[u] > 0))
        for v, _ in self.adj[u]:
            f = foreign[v] + (1 if side[u] == side[v] else -1)
            d += vw[v] * ((f > 0) - (foreign[v] > 0))
        return d

    def swap_delta(self, u: int, v: int) -> float:
        if self.edge_cut:
            w_uv = sum(we for x, we in self.adj[u] if x == v)
            return self.delta(u) + self.delta(v) + 2 * w_uv
        du = self.delta(u)
        self.move(u)
        dv = self.delta(v)
        self.move(u)
        return du + dv


def heuristic_bipartition(p: BipartitionProblem, restarts: int = 8, seed: int = 0,
                          max_rounds: int = 10_000, candidates: int = 32) -> BipartitionSolution:
    """Seeded multi-restart local search over balanced assignments.

    Each restart starts from a random balanced split, then repeatedly applies
    the best improving single move (when the size range allows) or swap of
    two boundary vertices, until no move improves. Swaps are searched among
    the ``candidates`` best single-move vertices per side.
    """
    lo, hi = p.size_range()
    n = p.n
    rng = np.random.default_rng(seed)
    ls = _LocalSearch(p)
    best: Optional[Tuple[float, Tuple[int, ...]]] = None
    for _ in range(max(1, restarts)):
        size = int(rng.integers(lo, hi + 1))
        side = [1] * n
        for u in rng.permutation(n)[:size]:
            side[int(u)] = 0
        ls.reset(side)
        s_count = size
        for _ in range(max_rounds):
            boundary = [u for u in range(n) if ls.foreign[u]]
            best_move, best_d = None, -1e-12
            single = {}
            for u in boundary:
                d = single[u] = ls.delta(u)
                new = s_count - 1 if side[u] == 0 else s_count + 1
                if lo <= new <= hi and d < best_d:
                    best_move, best_d = (u,), d
            # swaps only among the most promising vertices of each side
            left = sorted((u for u in boundary if side[u] == 0), key=single.get)[:candidates]
            right = sorted((u for u in boundary if side[u] == 1), key=single.get)[:candidates]
            for u in left:
                for v in right:
                    d = ls.swap_delta(u, v)
                    if d < best_d:
                        best_move, best_d = (u, v), d
            if best_move is None:
                break
            for u in best_move:
                s_count += 1 if side[u] == 1 else -1
                ls.move(u)
        members = tuple(u + 1 for u in range(n) if side[u] == 0)
        if 1 not in members:
            members = tuple(u + 1 for u in range(n) if side[u] == 1)
        cand = (ls.value(), members)
        if best is None or cand < best:
            best = cand
    return _solution(p, best[1], False)


# ------------------------------------------------------------ recursion

def bipartition(p: BipartitionProblem, solver: str = "exact", seed: int = 0,
                restarts: int = 8) -> BipartitionSolution:
    if solver == "exact":
        return solve_exact(p)
    if solver == "heuristic":
        return heuristic_bipartition(p, restarts=restarts, seed=seed)
    raise ValueError(f"unknown solver {solver!r}")


def _restrict(w: WeightMap, ids: Sequence[int]) -> WeightMap:
    """Weights of the subgraph induced by ``ids`` (ids[k] = original id of k)."""
    local = {orig: k for k, orig in enumerate(ids) if k > 0}
    edges = {}
    for (u, v), x in w.edge_weights.items():
        if u in local and v in local:
            edges[norm_edge(local[u], local[v])] = x
    verts = {local[v]: x for v, x in w.vertex_weights.items() if v in local}
    return WeightMap(edges, verts)


def recursive_bisect(g: Graph, weights: Optional[WeightMap], q: int,
                     epsilon: Optional[float] = None, solver: str = "exact",
                     objective: Objective = Objective.EDGE_CUT,
                     seed: int = 0, restarts: int = 8) -> PartitionAssignment:
    """Split into 2**q blocks by bisecting every block q times.

    ``epsilon`` applies to each block's own size (None = per-block default).
    Edges already cut by earlier levels do not count at later ones.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    weights = weights or WeightMap.unit(g)
    blocks = [list(g.vertices)]
    for level in range(q):
        nxt = []
        for b, block in enumerate(blocks):
            sub, ids = g.subgraph(block)
            p = BipartitionProblem(sub, _restrict(weights, ids), epsilon, objective)
            try:
                sol = bipartition(p, solver, seed=seed, restarts=restarts)
            except InfeasibleError as exc:
                raise InfeasibleError(
                    f"level {level + 1}: block {b} ({len(block)} vertices) "
                    f"cannot be split: {exc}") from None
            nxt.append(sorted(ids[v] for v in sol.S))
            nxt.append(sorted(ids[v] for v in sol.S_bar))
        blocks = nxt
    return PartitionAssignment.from_blocks(blocks)


def weights_from_ledger(ledger, g: Optional[Graph] = None) -> WeightMap:
    """Edge weight = entries sent over the link; vertex weight = sum of |ME(v)|."""
    edges = {e: float(c[1]) for e, c in ledger.per_link.items()}
    verts = {v: float(x) for v, x in ledger.modified_totals().items()}
    if g is not None:
        for e in g.edges:
            edges.setdefault(e, 0.0)
        for v in g.vertices:
            verts.setdefault(v, 0.0)
    if not any(edges.values()) and not any(verts.values()):
        log.warning("ledger has no traffic; all weights are zero")
    return WeightMap(edges, verts)
