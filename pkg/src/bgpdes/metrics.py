"""Update accounting, distribution-overhead formulas and routing metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .topology import BoundaryReport, Edge, Graph, PartitionAssignment, boundary

log = logging.getLogger(__name__)

DEFAULT_LATENCY_MS = 0.26


@dataclass
class MetricsLedger:
    """Counters for one run (or one logical-process shard of it).

    ``per_link[edge] = [messages, entries, size_integers]``; ``emissions``
    is the trace of modification batches as ``(router, |ME|)``.
    """

    per_link: Dict[Edge, List[int]] = field(default_factory=dict)
    per_router_modified: Dict[int, List[int]] = field(default_factory=dict)
    emissions: List[Tuple[int, int]] = field(default_factory=list)
    cross_partition: List[int] = field(default_factory=lambda: [0, 0, 0])
    ghost_sync: List[int] = field(default_factory=lambda: [0, 0])
    nulls: int = 0
    dropped_events: int = 0

    def record_update(self, src: int, tgt: int, entries: int, size: int) -> None:
        key = (src, tgt) if src < tgt else (tgt, src)
        c = self.per_link.get(key)
        if c is None:
            self.per_link[key] = [1, entries, size]
        else:
            c[0] += 1
            c[1] += entries
            c[2] += size

    def record_cross(self, entries: int, size: int) -> None:
        c = self.cross_partition
        c[0] += 1
        c[1] += entries
        c[2] += size

    def record_sync(self, entries: int) -> None:
        self.ghost_sync[0] += 1
        self.ghost_sync[1] += entries

    def record_emission(self, v: int, me: int) -> None:
        self.emissions.append((v, me))
        self.per_router_modified.setdefault(v, []).append(me)

    @property
    def totals(self) -> Dict[str, int]:
        if not self.per_link:
            return {"messages": 0, "entries": 0, "size_integers": 0}
        a = np.array(list(self.per_link.values()), dtype=np.int64).sum(axis=0)
        return {"messages": int(a[0]), "entries": int(a[1]), "size_integers": int(a[2])}

    def modified_totals(self) -> Dict[int, int]:
        """Per-router sum of |ME(v)| over all batches."""
        return {v: sum(b) for v, b in self.per_router_modified.items()}

    @property
    def esize(self) -> float:
        t = self.totals
        return t["size_integers"] / t["entries"] if t["entries"] else 0.0

    def merge(self, other: "MetricsLedger") -> None:
        for e, c in other.per_link.items():
            mine = self.per_link.setdefault(e, [0, 0, 0])
            for i in range(3):
                mine[i] += c[i]
        for v, batches in other.per_router_modified.items():
            self.per_router_modified.setdefault(v, []).extend(batches)
        self.emissions.extend(other.emissions)
        for i in range(3):
            self.cross_partition[i] += other.cross_partition[i]
        for i in range(2):
            self.ghost_sync[i] += other.ghost_sync[i]
        self.nulls += other.nulls
        self.dropped_events += other.dropped_events

    def canonical(self) -> dict:
        """Order-independent snapshot for equality checks across runs."""
        return {
            "per_link": sorted((e, tuple(c)) for e, c in self.per_link.items()),
            "modified": sorted((v, sorted(b)) for v, b in self.per_router_modified.items()),
            "emissions": sorted(self.emissions),
            "cross": tuple(self.cross_partition),
            "ghost_sync": tuple(self.ghost_sync),
            "dropped": self.dropped_events,
        }

    def summary(self) -> dict:
        t = self.totals
        return {**t, "cross_messages": self.cross_partition[0],
                "cross_entries": self.cross_partition[1],
                "cross_size_integers": self.cross_partition[2],
                "ghost_sync_messages": self.ghost_sync[0],
                "ghost_sync_entries": self.ghost_sync[1],
                "nulls": self.nulls, "dropped_events": self.dropped_events,
                "esize_avg": self.esize}


# ------------------------------------------------------- overhead formulas

def _me_by_router(emission_trace: Iterable[Tuple[int, int]]) -> Dict[int, int]:
    acc: Dict[int, int] = {}
    for v, me in emission_trace:
        acc[v] = acc.get(v, 0) + me
    return acc


def solA_external_comm(emission_trace: Iterable[Tuple[int, int]], bnd: BoundaryReport,
                       esize: float = 1.0) -> float:
    """Entries crossing partitions when updates carry full entries:
    each batch at v goes to each of v's foreign neighbours."""
    me = _me_by_router(emission_trace)
    return esize * sum(bnd.foreign_degree.get(v, 0) * c for v, c in me.items())


def solB_internal_comm(emission_trace: Iterable[Tuple[int, int]], bnd: BoundaryReport,
                       esize: float = 1.0) -> float:
    """Entries needed to keep ghost copies coherent: each batch at v goes
    once to every foreign partition v is exposed to."""
    me = _me_by_router(emission_trace)
    exposed = bnd.exposed_parts
    return esize * sum(exposed.get(v, 0) * c for v, c in me.items())


def solB_memory_overhead(g: Graph, pa: PartitionAssignment, esize: float = 1.0) -> float:
    """Ghost routing-table storage, in integers."""
    bnd = boundary(g, pa)
    return esize * g.n * sum(bnd.exposed_parts.values())


def solA_memory_overhead(g: Graph, pa: PartitionAssignment, esize: float = 1.0) -> float:
    return 0.0


@dataclass
class OverheadEstimate:
    entries: float
    per_entry_latency: float  # seconds
    total_seconds: float


def overhead_time(entries: float, per_entry_latency_ms: float = DEFAULT_LATENCY_MS) -> OverheadEstimate:
    if per_entry_latency_ms < 0:
        raise ValueError(f"latency must be >= 0, got {per_entry_latency_ms}")
    if entries < 0:
        raise ValueError(f"entry count must be >= 0, got {entries}")
    lat = per_entry_latency_ms / 1000.0
    return OverheadEstimate(entries, lat, entries * lat)


# ---------------------------------------------------------- routing metrics

@dataclass
class StretchReport:
    multiplicative_max: float
    multiplicative_mean: float
    additive_max: float
    additive_mean: float
    pairs: int
    unreachable: int


def stretch(dist: np.ndarray, ribs: Sequence[Optional[Sequence]]) -> StretchReport:
    """Compare installed path lengths with hop distances ``dist[u, v]``.

    Self pairs are skipped; pairs without a route, or with no finite
    distance, are counted as unreachable.
    """
    ratios, diffs = [], []
    unreachable = 0
    for u in range(1, len(ribs)):
        rib = ribs[u]
        for v in range(1, len(rib)):
            if u == v:
                continue
            path = rib[v]
            d = dist[u, v]
            if path is None or not np.isfinite(d):
                unreachable += 1
                continue
            ratios.append(len(path) / d)
            diffs.append(len(path) - d)
    if not ratios:
        return StretchReport(1.0, 1.0, 0.0, 0.0, 0, unreachable)
    r, a = np.array(ratios), np.array(diffs)
    return StretchReport(float(r.max()), float(r.mean()), float(a.max()), float(a.mean()),
                         len(ratios), unreachable)


def table_stats(ribs: Sequence[Optional[Sequence]]) -> dict:
    per_router = {}
    size = 0
    for u in range(1, len(ribs)):
        held = [p for p in ribs[u] if p is not None]
        per_router[u] = len(held)
        size += sum(len(p) for p in held)
    return {"entries_total": sum(per_router.values()), "entries_per_router": per_router,
            "size_integers_total": size}


@dataclass
class SqrtFit:
    slope: float
    intercept: float
    r_squared: float

    def predict_entries(self, n: float) -> float:
        return (self.slope * n + self.intercept) ** 2


def sqrt_scaling_fit(series: Sequence[Tuple[float, float]]) -> SqrtFit:
    """Least-squares line through ``(n, sqrt(entries))``."""
    if len(series) < 3:
        raise ValueError(f"need at least 3 points, got {len(series)}")
    n = np.array([s[0] for s in series], dtype=float)
    y = np.sqrt(np.array([s[1] for s in series], dtype=float))
    if np.ptp(y) == 0:
        return SqrtFit(0.0, float(y[0]), 1.0)
    res = stats.linregress(n, y)
    return SqrtFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))
