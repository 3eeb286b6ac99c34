"""Abstract BGP model: two-state sessions, one indexed Loc-RIB per router,
shortest-AS-path selection, MRAI rate limiting and bit-vector filtering.

A route is stored as its AS-path tuple (next hop first, destination last);
the router's route to itself is the empty tuple. Reachability and
per-peer knowledge are Python ints used as bit-vectors (bit ``d`` set iff a
route to ``d`` is held).
"""

from __future__ import annotations

from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

from .engine import (DEFAULT_EVENT_LIMIT, RANK_EMIT, RANK_NORMAL, Event, EventKind,
                     SimulationReport, Simulator)
from .topology import Graph, TopologyError, norm_edge

IDLE = 0
ESTABLISHED = 1

# NamedTuple construction without the generated __new__ wrapper (hot path)
_new_tuple = tuple.__new__
_DELIVERY = EventKind.UPDATE_DELIVERY

Path = Tuple[int, ...]


class UnreachableError(LookupError):
    pass


class RouteEntry(NamedTuple):
    destination: int
    path: Path


class UpdateMessage(NamedTuple):
    """One update from ``source`` to ``target``.

    ``announcements`` holds ``(destination, path)`` pairs with the sender's
    own path; ``size_integers`` counts each announced path as installed by
    the receiver (sender prepended) and one integer per withdrawal.
    """

    source: int
    target: int
    announcements: Tuple[Tuple[int, Path], ...] = ()
    withdrawals: Tuple[int, ...] = ()
    epoch: int = 1
    size_integers: int = 0

    @property
    def entry_count(self) -> int:
        return len(self.announcements) + len(self.withdrawals)

    @classmethod
    def build(cls, source: int, target: int, announcements=(), withdrawals=(),
              epoch: int = 1) -> "UpdateMessage":
        ann = tuple((d, tuple(p)) for d, p in announcements)
        wd = tuple(withdrawals)
        size = sum(len(p) + 1 for _, p in ann) + len(wd)
        return cls(source, target, ann, wd, epoch, size)


def better(candidate: Path, current: Path) -> bool:
    """Strict preference: shorter path, then lower next-hop id."""
    if len(candidate) != len(current):
        return len(candidate) < len(current)
    return bool(candidate) and candidate[0] < current[0]


def decision(current: Optional[Sequence[int]], candidate: Sequence[int],
             self_id: int) -> Optional[Sequence[int]]:
    """Return the route to keep for one destination.

    The candidate wins iff it is loop-free for ``self_id`` and beats the
    current route (shorter, or equally long with a lower next hop).
    """
    if self_id in candidate:
        return current
    if current is None or better(tuple(candidate), tuple(current)):
        return candidate
    return current


def useful_entries(local_bits: int, peer_bits: int, modified: Iterable[int]) -> Set[int]:
    """Destinations worth sending: held locally and either unknown to the
    peer or modified since the last exchange."""
    mod = 0
    for d in modified:
        mod |= 1 << d
    return bits_to_set(local_bits & (~peer_bits | mod))


def bits_to_set(bits: int) -> Set[int]:
    out = set()
    while bits:
        low = bits & -bits
        out.add(low.bit_length() - 1)
        bits ^= low
    return out


def convergence_lower_bound(N: int, mrai: int) -> int:
    """Lower bound on convergence time of a full mesh of N ASes."""
    if N < 3:
        raise ValueError(f"convergence bound needs N >= 3, got {N}")
    return (N - 3) * mrai


def _mix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


class DelayModel:
    """Per-message delivery delay in ticks.

    Uniform delays are a counter-based hash of ``(seed, source, target,
    seq)`` so a message gets the same delay however the routers are spread
    over logical processes.
    """

    def __init__(self, low: int = 1, high: Optional[int] = None, seed: int = 0):
        high = low if high is None else high
        if low < 1 or high < low:
            raise ValueError(f"delay range must satisfy 1 <= low <= high, got [{low}, {high}]")
        self.low, self.high, self.seed = low, high, seed

    @classmethod
    def fixed(cls, ticks: int = 1) -> "DelayModel":
        return cls(ticks, ticks)

    @property
    def is_random(self) -> bool:
        return self.high > self.low

    @property
    def min_delay(self) -> int:
        return self.low

    def __call__(self, source: int, target: int, seq: int) -> int:
        if self.high == self.low:
            return self.low
        h = _mix64(_mix64(_mix64(self.seed ^ source) ^ target) ^ seq)
        return self.low + h % (self.high - self.low + 1)

    def __repr__(self) -> str:
        return f"DelayModel({self.low}, {self.high}, seed={self.seed})"


class Fabric:
    """What a router needs from whoever runs it."""

    def post(self, e: Event) -> None:
        raise NotImplementedError

    def emitted(self, router: "Router", modified: Sequence[int], t: int) -> None:
        """Called once per modification batch, before the batch is sent."""

    def dropped(self, router: "Router", msg: "UpdateMessage") -> None:
        """An update arrived over a session that is not established."""


class Router:
    def __init__(self, rid: int, n: int, neighbors: Iterable[int],
                 mrai: int = 0, delay: Optional[DelayModel] = None,
                 fabric: Optional[Fabric] = None):
        self.id = rid
        self.n = n
        self.neighbors = frozenset(neighbors)
        self.mrai = mrai
        self.delay = delay or DelayModel.fixed(1)
        self.fabric = fabric
        self.rib: List[Optional[Path]] = [None] * (n + 1)
        self.rib[rid] = ()
        self.reach_bits = 1 << rid
        self.sessions: Dict[int, int] = {p: IDLE for p in self.neighbors}
        self.epoch: Dict[int, int] = {p: 0 for p in self.neighbors}
        self.peer_bits: Dict[int, int] = {p: 0 for p in self.neighbors}
        self.mrai_next: Dict[Tuple[int, int], int] = {}
        self.pending: Dict[int, Set[int]] = {}
        self._flush_at: Dict[int, Set[int]] = {}
        self._last_arrival: Dict[int, int] = {}
        self.seq = 0
        self.last_reply: Set[int] = set()
        self.to_emit: Set[int] = set()
        self._peers: List[int] = []

    def __repr__(self) -> str:
        return f"Router({self.id})"

    # ------------------------------------------------------------ state
    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def established_peers(self) -> List[int]:
        return self._peers

    def _set_session(self, peer: int, state: int) -> None:
        self.sessions[peer] = state
        self._peers = sorted(p for p, s in self.sessions.items() if s == ESTABLISHED)

    def _install(self, d: int, path: Path) -> None:
        if self.rib[d] is None:
            self.reach_bits |= 1 << d
        self.rib[d] = path

    def _remove(self, d: int) -> None:
        self.rib[d] = None
        self.reach_bits &= ~(1 << d)

    def forwarding_lookup(self, dest: int) -> int:
        if dest == self.id:
            return self.id
        path = self.rib[dest]
        if path is None:
            raise UnreachableError(f"router {self.id} has no route to {dest}")
        return path[0]

    def check_invariants(self) -> None:
        bits = 0
        for d, path in enumerate(self.rib):
            if path is None:
                continue
            bits |= 1 << d
            if d == self.id:
                assert path == (), f"router {self.id}: self route {path}"
                continue
            assert path and path[-1] == d, f"router {self.id}: bad path {path} for {d}"
            assert self.id not in path, f"router {self.id}: loop {path}"
            assert len(set(path)) == len(path), f"router {self.id}: repeated hop {path}"
        assert bits == self.reach_bits, f"router {self.id}: reach bits out of sync"

    # ------------------------------------------------------- event handlers
    def establish(self, peer: int, t: int) -> None:
        """Bring the session up and send the peer our table."""
        if peer not in self.neighbors:
            raise TopologyError(f"no link between {self.id} and {peer}")
        if self.sessions[peer] == ESTABLISHED:
            return
        self._open(peer)
        full = useful_entries(self.reach_bits, self.peer_bits[peer], ())
        self._send(peer, sorted(full), t)

    def _open(self, peer: int) -> None:
        self._set_session(peer, ESTABLISHED)
        self.epoch[peer] += 1
        self.peer_bits[peer] = 0

    def open_silently(self, peer: int) -> None:
        """Mark the session established without exchanging any table."""
        if peer not in self.neighbors:
            raise TopologyError(f"no link between {self.id} and {peer}")
        if self.sessions[peer] != ESTABLISHED:
            self._open(peer)

    def originate(self, t: int) -> None:
        self.mark_modified((self.id,), t)

    def mark_modified(self, modified: Iterable[int], t: int) -> None:
        """Queue destinations for the end-of-tick emission batch."""
        if not self.to_emit:
            self.fabric.post(Event(t, RANK_EMIT, self.id, self.next_seq(),
                                   EventKind.EMIT, self.id))
        self.to_emit.update(modified)

    def emit_pending(self, t: int) -> None:
        batch = sorted(self.to_emit)
        self.to_emit.clear()
        self.emit_updates(batch, t)

    def link_down(self, peer: int, t: int) -> None:
        if peer not in self.neighbors:
            raise TopologyError(f"no link between {self.id} and {peer}")
        if self.sessions[peer] == IDLE:
            return
        self._set_session(peer, IDLE)
        self.peer_bits[peer] = 0
        self.pending.pop(peer, None)
        self._flush_at.pop(peer, None)
        for key in [k for k in self.mrai_next if k[0] == peer]:
            del self.mrai_next[key]
        lost = [d for d, path in enumerate(self.rib) if path and path[0] == peer]
        for d in lost:
            self._remove(d)
        if lost:
            self.mark_modified(lost, t)

    def receive(self, e: Event) -> None:
        self.receive_update(e.payload, e.timestamp)

    def receive_update(self, msg: UpdateMessage, t: int) -> None:
        src = msg.source
        if self.sessions.get(src) != ESTABLISHED or self.epoch[src] != msg.epoch:
            if self.fabric is not None:
                self.fabric.dropped(self, msg)
            return
        modified = self.process_update(msg)
        reply = self.last_reply
        if modified:
            self.mark_modified(modified, t)
        if reply:
            self._send(src, sorted(reply), t)

    def process_update(self, msg: UpdateMessage) -> Set[int]:
        """Apply one update to the Loc-RIB; returns the modified destinations.

        Destinations for which this router could offer the sender a
        preferable route are left in ``last_reply``.
        """
        src = msg.source
        rib = self.rib
        me = self.id
        modified: Set[int] = set()
        reply: Set[int] = set()
        pbits = self.peer_bits[src]
        for d in msg.withdrawals:
            pbits &= ~(1 << d)
            cur = rib[d]
            if cur is None:
                continue
            if cur and cur[0] == src:
                self._remove(d)
                modified.add(d)
            elif src not in cur:
                reply.add(d)
        for d, path in msg.announcements:
            pbits |= 1 << d
            cand = (src,) + path
            cur = rib[d]
            if me in cand:
                if cur and cur[0] == src:
                    self._remove(d)
                    modified.add(d)
                    cur = None
            elif cur is None:
                rib[d] = cur = cand
                self.reach_bits |= 1 << d
                modified.add(d)
            elif (cur and cur[0] == src) or len(cand) < len(cur) or (
                    len(cand) == len(cur) and src < cur[0]):
                # same-source replacement, or strictly better (see better())
                if cand != cur:
                    rib[d] = cur = cand
                    modified.add(d)
            # no Adj-RIB-In on the sender's side: re-offer anything it should prefer,
            # i.e. when (me,) + cur beats the sender's path
            if cur is not None and src not in cur and not (path and path[0] == me):
                k = len(cur) + 1
                if k < len(path) or (k == len(path) and me < path[0]):
                    reply.add(d)
        self.peer_bits[src] = pbits
        self.last_reply = reply
        return modified

    def emit_updates(self, modified: Sequence[int], t: int) -> None:
        """Send a modification batch to every established peer."""
        if not modified:
            return
        if self.fabric is not None:
            self.fabric.emitted(self, modified, t)
        if self.mrai > 0:
            for peer in self._peers:
                self._send(peer, modified, t)
            return
        built = self._entries(modified)
        for peer in self._peers:
            self._post_update(peer, built, t)

    def flush(self, peer: int, t: int) -> None:
        times = self._flush_at.get(peer)
        if times is not None:
            times.discard(t)
        pend = self.pending.get(peer)
        if not pend or self.sessions.get(peer) != ESTABLISHED:
            return
        due = sorted(d for d in pend if self.mrai_next.get((peer, d), 0) <= t)
        pend.difference_update(due)
        self._send(peer, due, t)

    # ------------------------------------------------------------- sending
    def _send(self, peer: int, dests: Sequence[int], t: int) -> None:
        if self.mrai > 0:
            now = []
            for d in dests:
                due = self.mrai_next.get((peer, d), 0)
                if t >= due:
                    now.append(d)
                    self.mrai_next[(peer, d)] = t + self.mrai
                else:
                    self.pending.setdefault(peer, set()).add(d)
                    times = self._flush_at.setdefault(peer, set())
                    if due not in times:
                        times.add(due)
                        self.fabric.post(Event(due, RANK_NORMAL, self.id, self.next_seq(),
                                               EventKind.MRAI_FLUSH, self.id, peer))
            dests = now
        if not dests:
            return
        self._post_update(peer, self._entries(dests), t)

    def _entries(self, dests: Sequence[int]):
        rib = self.rib
        ann = []
        wd = []
        size = 0
        for d in dests:
            path = rib[d]
            if path is None:
                wd.append(d)
            else:
                ann.append((d, path))
                size += len(path)
        return tuple(ann), tuple(wd), size + len(ann) + len(wd)

    def _post_update(self, peer: int, built, t: int) -> None:
        ann, wd, size = built
        self.seq += 1
        seq = self.seq
        delay = self.delay
        if delay.high == delay.low:
            # a router's clock never goes back, so constant delays keep FIFO order
            ts = t + delay.low
        else:
            ts = t + delay(self.id, peer, seq)
            last = self._last_arrival.get(peer, 0)
            if last > ts:
                ts = last
            self._last_arrival[peer] = ts
        msg = _new_tuple(UpdateMessage, (self.id, peer, ann, wd, self.epoch[peer], size))
        self.fabric.post(_new_tuple(Event, (ts, RANK_NORMAL, self.id, seq,
                                            _DELIVERY, peer, msg)))


def handle(router: Router, e: Event) -> None:
    kind = e.kind
    if kind == EventKind.UPDATE_DELIVERY:
        router.receive_update(e.payload, e.timestamp)
    elif kind == EventKind.SESSION_ESTABLISH or kind == EventKind.LINK_REPAIR:
        router.establish(e.payload, e.timestamp)
    elif kind == EventKind.LINK_FAILURE:
        router.link_down(e.payload, e.timestamp)
    elif kind == EventKind.ORIGINATE:
        router.originate(e.timestamp)
    elif kind == EventKind.EMIT:
        router.emit_pending(e.timestamp)
    elif kind == EventKind.MRAI_FLUSH:
        router.flush(e.payload, e.timestamp)
    else:
        raise ValueError(f"router cannot handle {kind!r}")


class ScenarioDriver:
    """Scenario-level scheduling shared by sequential and distributed runs.

    Subclasses provide ``graph``, ``routers`` (indexable by id) and
    ``inject(event)``. World events carry origin 0 and a driver-owned
    sequence number so both execution modes see identical event keys.
    """

    graph: Graph
    routers: Sequence[Router]
    _world_seq: int = 0

    def inject(self, e: Event) -> None:
        raise NotImplementedError

    def _world(self, kind: EventKind, target: int, t: int, payload=None) -> None:
        self._world_seq += 1
        self.inject(Event(t, RANK_NORMAL, 0, self._world_seq, kind, target, payload))

    def establish_all_silently(self) -> None:
        for u, v in self.graph.edges:
            self.routers[u].open_silently(v)
            self.routers[v].open_silently(u)

    def originate_all(self, t: int = 0) -> None:
        for v in self.graph.vertices:
            self._world(EventKind.ORIGINATE, v, t)

    def _check_edge(self, edge) -> Tuple[int, int]:
        u, v = norm_edge(*edge)
        if not self.graph.has_edge(u, v):
            raise TopologyError(f"unknown edge ({u}, {v})")
        return u, v

    def schedule_session(self, edge, t: int) -> None:
        u, v = self._check_edge(edge)
        self._world(EventKind.SESSION_ESTABLISH, u, t, v)
        self._world(EventKind.SESSION_ESTABLISH, v, t, u)

    def schedule_link_failure(self, edge, t: int) -> None:
        u, v = self._check_edge(edge)
        self._world(EventKind.LINK_FAILURE, u, t, v)
        self._world(EventKind.LINK_FAILURE, v, t, u)

    def schedule_link_repair(self, edge, t: int) -> None:
        u, v = self._check_edge(edge)
        self._world(EventKind.LINK_REPAIR, u, t, v)
        self._world(EventKind.LINK_REPAIR, v, t, u)

    def ribs(self) -> List[Optional[List[Optional[Path]]]]:
        return [None] + [list(self.routers[v].rib) for v in self.graph.vertices]


def make_routers(g: Graph, mrai: int, delay: DelayModel) -> List[Optional[Router]]:
    return [None] + [Router(v, g.n, g.adj[v], mrai, delay) for v in g.vertices]


class Network(ScenarioDriver, Fabric):
    """Sequential execution of the BGP model over a graph."""

    def __init__(self, g: Graph, mrai: int = 0, delay: Optional[DelayModel] = None,
                 limit: int = DEFAULT_EVENT_LIMIT, ledger=None):
        from .metrics import MetricsLedger

        if mrai < 0:
            raise ValueError(f"MRAI must be >= 0, got {mrai}")
        self.graph = g
        self.delay = delay or DelayModel.fixed(1)
        self.routers = make_routers(g, mrai, self.delay)
        for r in self.routers[1:]:
            r.fabric = self
        self.sim = Simulator(self._dispatch, limit)
        self.ledger = ledger if ledger is not None else MetricsLedger()

    @property
    def now(self) -> int:
        return self.sim.now

    def inject(self, e: Event) -> None:
        self.sim.schedule(e)

    def post(self, e: Event) -> None:
        if e.kind == EventKind.UPDATE_DELIVERY:
            msg = e.payload
            self.ledger.record_update(msg.source, msg.target, msg.entry_count, msg.size_integers)
        self.sim.schedule(e)

    def emitted(self, router: Router, modified: Sequence[int], t: int) -> None:
        self.ledger.record_emission(router.id, len(modified))

    def dropped(self, router: Router, msg: UpdateMessage) -> None:
        self.ledger.dropped_events += 1

    def _dispatch(self, e: Event) -> None:
        handle(self.routers[e.target], e)

    def run(self, limit: Optional[int] = None) -> SimulationReport:
        return self.sim.run_until_quiescence(limit)
