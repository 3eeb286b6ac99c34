"""AS-level graphs: construction, GLP generation, file formats, distances
and partition boundary structure.

Vertex ids run from 1 to n and are used directly as routing-table indexes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

log = logging.getLogger(__name__)

Edge = Tuple[int, int]


class TopologyError(ValueError):
    """Invalid graph operation (unknown edge, bad parameters, ...)."""


class ParseError(TopologyError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class AssignmentError(TopologyError):
    """Partition assignment does not match the graph."""


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


class Graph:
    """Undirected simple graph on vertices 1..n.

    ``adj[v]`` is the sorted tuple of neighbours of ``v``; ``adj[0]`` is
    unused and empty.
    """

    def __init__(self, n: int, edges: Iterable[Edge] = ()):
        if n < 1:
            raise TopologyError(f"vertex count must be >= 1, got {n}")
        self.n = n
        es = set()
        for u, v in edges:
            if u == v:
                raise TopologyError(f"self-loop on vertex {u}")
            if not (1 <= u <= n and 1 <= v <= n):
                raise TopologyError(f"edge ({u}, {v}) outside 1..{n}")
            es.add(norm_edge(u, v))
        self.edges: List[Edge] = sorted(es)
        self._edge_set = frozenset(self.edges)
        nbrs: List[List[int]] = [[] for _ in range(n + 1)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        self.adj: List[Tuple[int, ...]] = [tuple(sorted(x)) for x in nbrs]

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    @property
    def m(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return norm_edge(u, v) in self._edge_set

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def degrees(self) -> np.ndarray:
        return np.array([len(self.adj[v]) for v in self.vertices])

    def is_connected(self) -> bool:
        seen = {1}
        stack = [1]
        while stack:
            u = stack.pop()
            for w in self.adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def subgraph(self, vertices: Iterable[int]) -> Tuple["Graph", List[int]]:
        """Induced subgraph relabelled to 1..k; returns it with the
        list mapping new ids (index) back to original ids."""
        orig = sorted(set(vertices))
        new_id = {v: i + 1 for i, v in enumerate(orig)}
        edges = [(new_id[u], new_id[v]) for u, v in self.edges
                 if u in new_id and v in new_id]
        return Graph(len(orig), edges), [0] + orig

    def edge_list_text(self) -> str:
        lines = [f"# n={self.n} m={self.m}"]
        lines += [f"{u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Graph) and self.n == other.n
                and self.edges == other.edges)

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


@dataclass
class PartitionAssignment:
    part_of: Dict[int, int]
    K: int

    def __post_init__(self):
        parts = set(self.part_of.values())
        bad = [p for p in parts if not 0 <= p < self.K]
        if bad:
            raise AssignmentError(f"partition index out of 0..{self.K - 1}: {bad}")
        if len(parts) != self.K:
            missing = sorted(set(range(self.K)) - parts)
            raise AssignmentError(f"empty partitions: {missing}")

    @classmethod
    def single(cls, g: Graph) -> "PartitionAssignment":
        return cls({v: 0 for v in g.vertices}, 1)

    @classmethod
    def from_blocks(cls, blocks: List[Iterable[int]]) -> "PartitionAssignment":
        part_of = {v: i for i, b in enumerate(blocks) for v in b}
        return cls(part_of, len(blocks))

    def blocks(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.K)]
        for v in sorted(self.part_of):
            out[self.part_of[v]].append(v)
        return out

    def check_covers(self, g: Graph) -> None:
        missing = [v for v in g.vertices if v not in self.part_of]
        if missing:
            raise AssignmentError(f"vertices without partition: {missing[:10]}")
        extra = [v for v in self.part_of if not 1 <= v <= g.n]
        if extra:
            raise AssignmentError(f"unknown vertices in assignment: {extra[:10]}")


@dataclass
class BoundaryReport:
    cut_edges: List[Edge]
    foreign_degree: Dict[int, int]
    # (v, j) -> 1 for exposed pairs only; absent keys read as 0
    exposure: Dict[Tuple[int, int], int]

    def e(self, v: int, j: int) -> int:
        return self.exposure.get((v, j), 0)

    def exposure_count(self, v: int) -> int:
        """Number of foreign partitions ``v`` has a neighbour in."""
        return self.exposed_parts.get(v, 0)

    @property
    def exposed_parts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for (v, _j) in self.exposure:
            counts[v] = counts.get(v, 0) + 1
        return counts


@dataclass
class WeightMap:
    edge_weights: Dict[Edge, float] = field(default_factory=dict)
    vertex_weights: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.edge_weights = {norm_edge(*e): float(w) for e, w in self.edge_weights.items()}
        for w in list(self.edge_weights.values()) + list(self.vertex_weights.values()):
            if not np.isfinite(w) or w < 0:
                raise TopologyError(f"weights must be finite and >= 0, got {w}")

    def edge(self, u: int, v: int) -> float:
        return self.edge_weights.get(norm_edge(u, v), 0.0)

    def vertex(self, v: int) -> float:
        return self.vertex_weights.get(v, 0.0)

    @classmethod
    def unit(cls, g: Graph) -> "WeightMap":
        return cls({e: 1.0 for e in g.edges}, {v: 1.0 for v in g.vertices})


# ---------------------------------------------------------------- generation

def generate_glp(n: int, m: float = 1.13, p: float = 0.4695, beta: float = 0.6447,
                 seed: int = 0) -> Graph:
    """Generalized Linear Preference topology.

    Starting from a triangle, each step either (probability ``p``) adds
    about ``m`` links between existing vertices, or adds a new vertex with
    about ``m`` links. Endpoints are drawn with probability proportional
    to ``degree - beta``. A fractional ``m`` is realised per step as
    ``floor(m)`` plus one extra link with probability ``m - floor(m)``.
    """
    if n < 3:
        raise TopologyError(f"GLP needs n >= 3, got {n}")
    if not 0 <= p < 1:
        raise TopologyError(f"GLP needs 0 <= p < 1, got {p}")
    if not beta < 1:
        raise TopologyError(f"GLP needs beta < 1, got {beta}")
    if m < 1:
        raise TopologyError(f"GLP needs m >= 1, got {m}")

    rng = np.random.default_rng(seed)
    base, frac = int(m), m - int(m)
    deg = np.zeros(n + 1, dtype=float)
    edges = set()

    def add(u, v):
        edges.add(norm_edge(u, v))
        deg[u] += 1
        deg[v] += 1

    seed_size = min(n, max(3, base + 1))
    for u in range(1, seed_size + 1):
        for v in range(u + 1, seed_size + 1):
            add(u, v)
    size = seed_size

    def links():
        return base + (1 if rng.random() < frac else 0)

    def pick(k, exclude=()):
        w = deg[1:size + 1] - beta
        if exclude:
            w = w.copy()
            for x in exclude:
                w[x - 1] = 0.0
        k = min(k, int(np.count_nonzero(w)))
        if k <= 0:
            return []
        return [int(x) + 1 for x in rng.choice(size, size=k, replace=False, p=w / w.sum())]

    while size < n:
        if rng.random() < p:
            for _ in range(links()):
                # a handful of retries for saturated hubs; give up silently after
                for _attempt in range(8):
                    u = pick(1)[0]
                    taken = [u] + [v for v in range(1, size + 1) if norm_edge(u, v) in edges]
                    if len(taken) >= size:
                        continue
                    v = pick(1, exclude=taken)[0]
                    add(u, v)
                    break
        else:
            targets = pick(max(1, links()))
            size += 1
            for t in targets:
                add(size, t)

    g = Graph(n, edges)
    if not g.is_connected():  # pragma: no cover - construction keeps it connected
        raise TopologyError("GLP produced a disconnected graph")
    return g


# ------------------------------------------------------------------ file I/O

def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(lineno, f"expected integer, got {tok!r}") from None


def _id(tok: str, lineno: int) -> int:
    v = _int(tok, lineno)
    if v < 1:
        raise ParseError(lineno, f"vertex id must be >= 1, got {v}")
    return v


def load_edge_list(text: str, n: Optional[int] = None) -> Graph:
    """Parse ``u v`` lines (1-based ids, ``#`` comments). Duplicates collapse."""
    edges = []
    top = 0
    for lineno, toks in _lines(text):
        if len(toks) != 2:
            raise ParseError(lineno, f"expected 'u v', got {' '.join(toks)!r}")
        u, v = _id(toks[0], lineno), _id(toks[1], lineno)
        if u == v:
            raise ParseError(lineno, f"self-loop on vertex {u}")
        edges.append((u, v))
        top = max(top, u, v)
    return Graph(n or max(top, 1), edges)


def load_partition(text: str) -> PartitionAssignment:
    part_of = {}
    for lineno, toks in _lines(text):
        if len(toks) != 2:
            raise ParseError(lineno, "expected 'vertex_id partition_index'")
        v, p = _id(toks[0], lineno), _int(toks[1], lineno)
        if p < 0:
            raise ParseError(lineno, f"negative partition index {p}")
        if v in part_of:
            raise ParseError(lineno, f"vertex {v} assigned twice")
        part_of[v] = p
    return PartitionAssignment(part_of, max(part_of.values(), default=-1) + 1)


def partition_text(pa: PartitionAssignment) -> str:
    return "".join(f"{v} {pa.part_of[v]}\n" for v in sorted(pa.part_of))


def load_weights(text: str) -> WeightMap:
    """Mixed weight file: ``u v w`` lines are edge weights, ``v w`` lines
    vertex weights."""
    ew, vw = {}, {}
    for lineno, toks in _lines(text):
        try:
            w = float(toks[-1])
        except ValueError:
            raise ParseError(lineno, f"bad weight {toks[-1]!r}") from None
        if len(toks) == 3:
            ew[norm_edge(_id(toks[0], lineno), _id(toks[1], lineno))] = w
        elif len(toks) == 2:
            vw[_id(toks[0], lineno)] = w
        else:
            raise ParseError(lineno, "expected 'u v w' or 'v w'")
    return WeightMap(ew, vw)


def weights_text(w: WeightMap) -> str:
    lines = [f"{u} {v} {x:g}" for (u, v), x in sorted(w.edge_weights.items())]
    lines += [f"{v} {x:g}" for v, x in sorted(w.vertex_weights.items())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- distances

def shortest_path_matrix(g: Graph) -> np.ndarray:
    """Hop distances indexed by vertex id: ``d[u, v]``. Row and column 0 are
    padding. Unreachable pairs are ``inf`` and logged."""
    rows = [u - 1 for u, v in g.edges] + [v - 1 for u, v in g.edges]
    cols = [v - 1 for u, v in g.edges] + [u - 1 for u, v in g.edges]
    a = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(g.n, g.n))
    d = shortest_path(a, method="D", directed=False, unweighted=True)
    out = np.full((g.n + 1, g.n + 1), np.inf)
    out[1:, 1:] = d
    unreachable = int(np.isinf(d).sum())
    if unreachable:
        log.warning("shortest_path_matrix: %d unreachable ordered pairs", unreachable)
    return out


def boundary(g: Graph, pa: PartitionAssignment) -> BoundaryReport:
    pa.check_covers(g)
    part = pa.part_of
    cut = [(u, v) for u, v in g.edges if part[u] != part[v]]
    fdeg = {v: 0 for v in g.vertices}
    exposure = {}
    for u, v in cut:
        fdeg[u] += 1
        fdeg[v] += 1
        exposure[(u, part[v])] = 1
        exposure[(v, part[u])] = 1
    return BoundaryReport(cut, fdeg, exposure)


def random_partition(g: Graph, K: int, seed: int = 0) -> PartitionAssignment:
    """Uniformly random assignment with every block non-empty."""
    if not 1 <= K <= g.n:
        raise AssignmentError(f"cannot split {g.n} vertices into {K} parts")
    rng = np.random.default_rng(seed)
    order = rng.permutation(g.n) + 1
    labels = np.concatenate([np.arange(K), rng.integers(0, K, g.n - K)])
    return PartitionAssignment({int(v): int(p) for v, p in zip(order, labels)}, K)

