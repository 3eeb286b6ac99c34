"""Conservative parallel execution of the BGP model over logical processes.

Each logical process (LP) owns the routers of one partition block and
keeps one list for locally generated events plus one list per
influential LP. It only processes the event whose key is minimal over
all lists; an empty input list stands for "anything at or after its
clock may still arrive", so the LP blocks on it. Null events raise input
clocks and prevent deadlock, either eagerly or on demand.

Cut edges are handled in one of two ways:

* Solution A: updates crossing LPs carry their entries.
* Solution B: the end-points of every cut edge are ghosted on the other
  side; owners push each modification batch to their ghosts and crossing
  updates only carry destination ids, resolved against the local ghost.

LPs run in barrier-synchronised rounds. Within a round every LP steps
independently (optionally on a thread pool); messages are exchanged at
the barrier, so results never depend on the worker count.
"""

from __future__ import annotations

import bisect
import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

from .bgp import (DelayModel, Fabric, Router, ScenarioDriver, UpdateMessage,
                  handle, make_routers)
from .engine import (DEFAULT_EVENT_LIMIT, RANK_SYNC, CausalityError, Event,
                     EventKind, EventList, NonConvergenceError, SimulationReport, gc_paused)
from .metrics import MetricsLedger
from .topology import Graph, PartitionAssignment, boundary

log = logging.getLogger(__name__)

INF = float("inf")


class Solution(str, Enum):
    A = "A"
    B = "B"


class NullPolicy(str, Enum):
    EAGER = "eager"
    ON_DEMAND = "on-demand"


class ProtocolViolation(RuntimeError):
    """A cross event undercut a null-message promise."""


class DeadlockError(RuntimeError):
    """The progress watchdog saw no progress for too many rounds."""


class Blocked(NamedTuple):
    list_index: int  # 0 = local list, i >= 1 = i-th input list


class IdUpdate(NamedTuple):
    """Solution-B crossing update: identifiers only."""

    source: int
    target: int
    announced: Tuple[int, ...]
    withdrawn: Tuple[int, ...]
    epoch: int
    version: Tuple[int, int, int, int]
    size_integers: int = 0  # of the resolved update, for the per-link ledger

    @property
    def entry_count(self) -> int:
        return 0


_new_tuple = tuple.__new__
_DELIVERY = EventKind.UPDATE_DELIVERY
_SYNC = EventKind.GHOST_SYNC


class GhostSync(NamedTuple):
    router: int
    version: Tuple[int, int, int, int]
    entries: Tuple[Tuple[int, Optional[tuple]], ...]


class NullEvent(NamedTuple):
    from_lp: int
    to_lp: int
    t_null: int


class Ghost:
    """Read-only replica of a boundary router's Loc-RIB, versioned by the
    key of the owner-side event that produced each change."""

    _ORIGIN = (-1, -1, -1, -1)

    def __init__(self, router: Router):
        self.router_id = router.id
        self.keys: Dict[int, List[tuple]] = {}
        self.paths: Dict[int, List[Optional[tuple]]] = {}
        for d, path in enumerate(router.rib):
            if path is not None:
                self.keys[d] = [self._ORIGIN]
                self.paths[d] = [path]

    def apply(self, sync: GhostSync) -> None:
        for d, path in sync.entries:
            self.keys.setdefault(d, []).append(sync.version)
            self.paths.setdefault(d, []).append(path)

    def lookup(self, d: int, version) -> Optional[tuple]:
        keys = self.keys.get(d)
        if not keys:
            return None
        i = bisect.bisect_right(keys, version) - 1
        return self.paths[d][i] if i >= 0 else None


@dataclass
class InputChannel:
    source_lp: int
    events: EventList = field(default_factory=EventList)
    clock: int = 0

    def clock_key(self):
        """Key below which this list is complete.

        ``clock`` is the sender's latest promise. Delays vary per message, so
        a queued head is only safe when it lies strictly before the promise;
        otherwise something at or after ``clock`` may still arrive ahead of it.
        """
        head = self.events.peek()
        if head is not None and head.timestamp < self.clock:
            return head.key
        return (self.clock, -1, -1, -1)

    def ready(self) -> bool:
        head = self.events.peek()
        return head is not None and head.timestamp < self.clock


class LogicalProcess(Fabric):
    def __init__(self, lp_id: int, owned: Sequence[int], routers: Sequence[Router],
                 owner_of: Dict[int, int], solution: Solution, lookahead: int,
                 null_policy: NullPolicy = NullPolicy.ON_DEMAND):
        self.lp_id = lp_id
        self.owned = sorted(owned)
        self.routers = routers
        self.owner_of = owner_of
        self.solution = Solution(solution)
        self.null_policy = NullPolicy(null_policy)
        self.lookahead = lookahead
        self.local = EventList()
        self.inputs: Dict[int, InputChannel] = {}
        self.influenced: List[int] = []
        self.cross_edges: Set[Tuple[int, int]] = set()
        # Solution B: replicas hosted here, and for owned routers the LPs hosting theirs
        self.ghosts: Dict[int, Ghost] = {}
        self.ghost_hosts: Dict[int, List[int]] = {}
        self.ledger = MetricsLedger()
        self.report = SimulationReport()
        self.outbox: Dict[int, List[Event]] = {}
        self.null_out: Dict[int, Tuple[int, bool]] = {}
        self.promised: Dict[int, int] = {}
        self.requests_out: Set[int] = set()
        self.outstanding: Set[int] = set()
        self.nulls_received = 0
        self.null_requests = 0
        # events (processed or received nulls) the eager policy has answered
        self.eager_charged = 0
        self.last_ts = -1
        self._current: Optional[Event] = None
        self._chans: List[InputChannel] = []
        self._counts = [0] * len(EventKind)
        self._sync_seq = 0
        for v in self.owned:
            routers[v].fabric = self

    def __repr__(self) -> str:
        return f"LP{self.lp_id}({len(self.owned)} routers, d={len(self.inputs)})"

    def add_input(self, source_lp: int) -> InputChannel:
        ch = self.inputs.get(source_lp)
        if ch is None:
            ch = self.inputs[source_lp] = InputChannel(source_lp)
            self._chans = [self.inputs[j] for j in sorted(self.inputs)]
        return ch

    @property
    def lists(self) -> List[EventList]:
        return [self.local] + [self.inputs[j].events for j in sorted(self.inputs)]

    def list_clocks(self) -> List[float]:
        head = self.local.peek()
        clocks = [head.timestamp if head is not None else INF]
        for j in sorted(self.inputs):
            clocks.append(self.inputs[j].clock_key()[0])
        return clocks

    def idle(self) -> bool:
        return not self.local and all(not ch.events for ch in self.inputs.values())

    # ------------------------------------------------------------ selection
    def lp_select_next(self):
        """Pop the minimal-key event, or return :class:`Blocked` naming the
        list that holds the minimal clock but has nothing safe to give."""
        best_key = None
        best = 0
        head = self.local.peek()
        if head is not None:
            best_key = head.key
        for idx, j in enumerate(sorted(self.inputs), 1):
            key = self.inputs[j].clock_key()
            if best_key is None or key < best_key:
                best_key, best = key, idx
        if best_key is None:
            return Blocked(0)
        if best == 0:
            return self.local.pop()
        ch = self.inputs[sorted(self.inputs)[best - 1]]
        if not ch.ready():
            return Blocked(best)
        return ch.events.pop()

    def safe_bound(self) -> float:
        """Lower bound on the timestamp of anything this LP may still send."""
        local = self.local._heap
        low = local[0][0] if local else INF
        for ch in self._chans:
            # same as ch.clock_key()[0]
            h = ch.events._heap
            c = h[0][0] if h and h[0][0] < ch.clock else ch.clock
            if c < low:
                low = c
        return low + self.lookahead

    # ----------------------------------------------------------- processing
    @property
    def current_key(self):
        e = self._current
        return (e[0], e[1], e[2], e[3]) if e is not None else (-1, -1, -1, -1)

    def _flush_counts(self) -> None:
        rep = self.report
        for k, c in enumerate(self._counts):
            if c:
                rep.by_kind[EventKind(k)] += c
                rep.events += c
                self._counts[k] = 0
        rep.clock = max(rep.clock, self.last_ts)

    def _resolve(self, ref: IdUpdate) -> UpdateMessage:
        ghost = self.ghosts[ref.source]
        version = ref.version
        keys, paths = ghost.keys, ghost.paths
        ann = []
        for d in ref.announced:
            ks = keys.get(d)
            i = bisect.bisect_right(ks, version) - 1 if ks else -1
            path = paths[d][i] if i >= 0 else None
            if path is None:
                raise ProtocolViolation(
                    f"ghost of {ref.source} on LP{self.lp_id} lacks route {d} at {ref.version}")
            ann.append((d, path))
        return _new_tuple(UpdateMessage, (ref.source, ref.target, tuple(ann), ref.withdrawn,
                                          ref.epoch, ref.size_integers))

    def step(self, limit: Optional[int] = None) -> Tuple[int, object]:
        """Process events until blocked; returns (processed, blocked-state).

        Same choices as repeated :meth:`lp_select_next`, but the input-side
        minimum is only recomputed after an input list is popped.
        """
        eager = self.null_policy is NullPolicy.EAGER
        # received nulls count as processed events for the eager policy
        pending_eager = self.nulls_received if eager else 0
        self.nulls_received = 0
        local = self.local._heap
        chans = self._chans
        pop = heapq.heappop
        routers, ghosts, counts = self.routers, self.ghosts, self._counts
        resolve = self._resolve
        last_ts = self.last_ts
        limit = INF if limit is None else limit
        processed = 0
        nxt = None
        # channel clocks and contents only change at the barrier, so the
        # input-side minimum is recomputed only after a channel is popped
        fresh = True
        while processed < limit:
            if fresh:
                best = 0
                best_key = None
                for idx, ch in enumerate(chans, 1):
                    h = ch.events._heap
                    key = h[0] if h and h[0][0] < ch.clock else (ch.clock, -1, -1, -1)
                    if best_key is None or key < best_key:
                        best_key, best = key, idx
                fresh = False
            if local and (best_key is None or local[0] < best_key):
                e = pop(local)
            elif best_key is None:
                nxt = Blocked(0)
                break
            else:
                # a sentinel key (rank -1) means the head is not yet safe
                if best_key[1] < 0:
                    nxt = Blocked(best)
                    break
                e = pop(chans[best - 1].events._heap)
                fresh = True
            ts = e[0]
            if ts < last_ts:
                raise CausalityError(f"LP{self.lp_id}: event at t={ts} after t={last_ts}")
            self.last_ts = last_ts = ts
            self._current = e
            kind = e[4]
            counts[kind] += 1
            processed += 1
            if kind == _DELIVERY:
                msg = e[6]
                if type(msg) is IdUpdate:
                    msg = resolve(msg)
                routers[e[5]].receive_update(msg, ts)
            elif kind == _SYNC:
                ghosts[e[6].router].apply(e[6])
            else:
                handle(routers[e[5]], e)
        self._flush_counts()
        if eager:
            pending_eager += processed
        if eager and pending_eager and self.influenced:
            # one null per processed event per influenced LP; the transport
            # only needs to carry the last (largest) of them
            bound = self.safe_bound()
            self.eager_charged += pending_eager
            for j in self.influenced:
                self.send_null(j, bound, count=pending_eager)
        if self.outbox:
            # every batch of cross events carries the sender's current bound
            bound = self.safe_bound()
            for j in self.outbox:
                self.send_null(j, bound, count=0)
        if (not eager and isinstance(nxt, Blocked) and nxt.list_index > 0):
            j = sorted(self.inputs)[nxt.list_index - 1]
            if j not in self.outstanding:
                self.outstanding.add(j)
                self.requests_out.add(j)
                self.null_requests += 1
                # piggy-back our own promise so cycles of waiting LPs advance
                if j in self.influenced:
                    self.send_null(j, self.safe_bound())
        return processed, nxt

    # -------------------------------------------------------------- nulls
    def send_null(self, to_lp: int, t_null: float, count: int = 1) -> None:
        if t_null == INF:
            t_null = max(self.promised.get(to_lp, 0), self.last_ts + self.lookahead)
        t_null = int(t_null)
        prev = self.promised.get(to_lp, 0)
        if t_null < prev:
            raise ProtocolViolation(
                f"LP{self.lp_id} -> LP{to_lp}: null {t_null} below earlier promise {prev}")
        self.promised[to_lp] = t_null
        _, counted = self.null_out.get(to_lp, (0, False))
        self.null_out[to_lp] = (t_null, counted or count > 0)
        self.ledger.nulls += count

    def receive_null(self, from_lp: int, t_null: int, counted: bool = True) -> bool:
        ch = self.inputs[from_lp]
        if counted:
            self.outstanding.discard(from_lp)
            self.nulls_received += 1
        if t_null > ch.clock:
            ch.clock = t_null
            return True
        return False

    # ------------------------------------------------------ Fabric (routers)
    def post(self, e: Event) -> None:
        if e[4] != _DELIVERY:
            heapq.heappush(self.local._heap, e)
            return
        msg: UpdateMessage = e[6]
        src, tgt, size = msg[0], msg[1], msg[5]
        entries = len(msg[2]) + len(msg[3])
        # same bookkeeping as MetricsLedger.record_update, inlined
        per_link = self.ledger.per_link
        link = (src, tgt) if src < tgt else (tgt, src)
        c = per_link.get(link)
        if c is None:
            per_link[link] = [1, entries, size]
        else:
            c[0] += 1
            c[1] += entries
            c[2] += size
        dest_lp = self.owner_of[tgt]
        if dest_lp == self.lp_id:
            heapq.heappush(self.local._heap, e)
            return
        if self.solution is Solution.A:
            self.ledger.record_cross(entries, size)
            self.send_cross_event(dest_lp, e)
            return
        pending = self.routers[src].to_emit
        if pending:
            stale = [d for d, _ in msg.announcements if d in pending]
            stale += [d for d in msg.withdrawals if d in pending]
            if stale:
                # entries changed earlier in this tick are not yet on the ghost
                self.sync_ghost(src, sorted(stale), only=(dest_lp,))
        ref = _new_tuple(IdUpdate, (src, tgt, tuple([d for d, _ in msg.announcements]),
                                    msg.withdrawals, msg.epoch, self.current_key, size))
        self.ledger.record_cross(0, 0)
        self.send_cross_event(dest_lp, _new_tuple(Event, (*e[:6], ref)))

    def emitted(self, router: Router, modified: Sequence[int], t: int) -> None:
        self.ledger.record_emission(router.id, len(modified))
        if self.solution is Solution.B:
            self.sync_ghost(router.id, modified)

    def dropped(self, router: Router, msg: UpdateMessage) -> None:
        self.ledger.dropped_events += 1

    def send_cross_event(self, to_lp: int, e: Event) -> None:
        promised = self.promised.get(to_lp, 0)
        if e.timestamp < promised:
            raise ProtocolViolation(
                f"LP{self.lp_id} -> LP{to_lp}: event at t={e.timestamp} "
                f"below promise {promised}")
        if e.timestamp < self.last_ts + self.lookahead:
            raise ProtocolViolation(
                f"LP{self.lp_id} -> LP{to_lp}: event at t={e.timestamp} violates lookahead")
        self.outbox.setdefault(to_lp, []).append(e)

    def sync_ghost(self, router_id: int, modified: Sequence[int],
                   only: Optional[Sequence[int]] = None) -> None:
        hosts = self.ghost_hosts.get(router_id, ())
        if only is not None:
            hosts = [h for h in hosts if h in only]
        if not hosts:
            return
        rib = self.routers[router_id].rib
        entries = tuple((d, rib[d]) for d in modified)
        sync = GhostSync(router_id, self.current_key, entries)
        t = self.last_ts + self.lookahead
        for j in hosts:
            self._sync_seq += 1
            self.ledger.record_sync(len(entries))
            self.send_cross_event(j, Event(t, RANK_SYNC, router_id, self._sync_seq,
                                           EventKind.GHOST_SYNC, 0, sync))


def build_lps(g: Graph, pa: PartitionAssignment, solution: Solution = Solution.A,
              routers: Optional[Sequence[Router]] = None, lookahead: int = 1,
              null_policy: NullPolicy = NullPolicy.ON_DEMAND) -> List[LogicalProcess]:
    """One LP per partition block; cut edges define who influences whom."""
    pa.check_covers(g)
    if routers is None:
        routers = make_routers(g, 0, DelayModel.fixed(lookahead))
    part = pa.part_of
    blocks = pa.blocks()
    lps = [LogicalProcess(i, blocks[i], routers, part, solution, lookahead, null_policy)
           for i in range(pa.K)]
    bnd = boundary(g, pa)
    for u, v in bnd.cut_edges:
        pu, pv = part[u], part[v]
        for a, b in ((pu, pv), (pv, pu)):
            lps[a].cross_edges.add((u, v))
            if a not in lps[b].inputs:
                lps[b].add_input(a)
                lps[a].influenced.append(b)
    for lp in lps:
        lp.influenced.sort()
    if Solution(solution) is Solution.B:
        for (v, j) in sorted(bnd.exposure):
            lps[j].ghosts[v] = Ghost(routers[v])
            lps[part[v]].ghost_hosts.setdefault(v, []).append(j)
    return lps


class DistributedSimulation(ScenarioDriver):
    """Runs a partitioned BGP simulation to quiescence.

    Cross-LP and intra-LP deliveries use the same delay model, so the event
    keys, and therefore every router's history, match the sequential run.
    """

    def __init__(self, g: Graph, pa: PartitionAssignment, solution: Solution = Solution.A,
                 mrai: int = 0, delay: Optional[DelayModel] = None,
                 null_policy: NullPolicy = NullPolicy.ON_DEMAND, workers: int = 1,
                 limit: int = DEFAULT_EVENT_LIMIT, patience: int = 8):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.graph = g
        self.pa = pa
        self.delay = delay or DelayModel.fixed(1)
        self.routers = make_routers(g, mrai, self.delay)
        self.lookahead = max(1, self.delay.min_delay)
        self.lps = build_lps(g, pa, solution, self.routers, self.lookahead, null_policy)
        self.workers = workers
        self.limit = limit
        self.patience = patience
        self.rounds = 0

    @property
    def now(self) -> int:
        return max(lp.report.clock for lp in self.lps)

    def inject(self, e: Event) -> None:
        lp = self.lps[self.pa.part_of[e.target]]
        if e.timestamp < lp.last_ts:
            raise CausalityError(f"event at t={e.timestamp} injected after t={lp.last_ts}")
        lp.local.push(e)

    def _start_phase(self) -> None:
        heads = [lp.local.peek().timestamp for lp in self.lps if lp.local]
        if not heads:
            return
        floor = min(heads)
        # global barrier: every channel is empty, so promises can be restated
        for lp in self.lps:
            lp.promised = {j: floor for j in lp.influenced}
            lp.outstanding.clear()
            lp.nulls_received = 0
            for ch in lp.inputs.values():
                ch.clock = floor
        for lp in self.lps:
            if lp.null_policy is NullPolicy.EAGER:
                # priming only; not a per-event null
                for j in lp.influenced:
                    lp.send_null(j, lp.safe_bound(), count=0)
        self._exchange()

    def _exchange(self) -> bool:
        raised = False
        for lp in self.lps:
            if not lp.outbox:
                continue
            for j, events in sorted(lp.outbox.items()):
                ch = self.lps[j].inputs[lp.lp_id]
                for e in events:
                    if e.timestamp < ch.clock:
                        raise ProtocolViolation(
                            f"LP{lp.lp_id} -> LP{j}: t={e.timestamp} below clock {ch.clock}")
                    ch.events.push(e)
            lp.outbox.clear()
        raised = self._deliver_nulls()
        # requests are answered at the barrier, from the receiver's state after delivery
        for lp in self.lps:
            for j in sorted(lp.requests_out):
                peer = self.lps[j]
                peer.send_null(lp.lp_id, peer.safe_bound())
            lp.requests_out.clear()
        return self._deliver_nulls() or raised

    def _deliver_nulls(self) -> bool:
        raised = False
        for lp in self.lps:
            if not lp.null_out:
                continue
            for j, (t_null, counted) in sorted(lp.null_out.items()):
                raised |= self.lps[j].receive_null(lp.lp_id, t_null, counted)
            lp.null_out.clear()
        return raised

    def run(self, limit: Optional[int] = None) -> SimulationReport:
        limit = self.limit if limit is None else limit
        self._start_phase()
        pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        stalled = 0
        try:
            with gc_paused():
                while not all(lp.idle() for lp in self.lps):
                    if pool is not None:
                        results = list(pool.map(lambda lp: lp.step(), self.lps))
                    else:
                        results = [lp.step() for lp in self.lps]
                    self.rounds += 1
                    processed = sum(r[0] for r in results)
                    raised = self._exchange()
                    if processed or raised:
                        stalled = 0
                    else:
                        stalled += 1
                        if stalled > self.patience:
                            raise DeadlockError(
                                f"no progress for {stalled} rounds; clocks="
                                f"{[lp.list_clocks() for lp in self.lps]}")
                    if sum(lp.report.events for lp in self.lps) > limit:
                        raise NonConvergenceError(limit)
        finally:
            if pool is not None:
                pool.shutdown()
        return self.report()

    def report(self) -> SimulationReport:
        rep = SimulationReport()
        for lp in self.lps:
            rep.merge(lp.report)
        return rep

    @property
    def ledger(self) -> MetricsLedger:
        out = MetricsLedger()
        for lp in self.lps:
            out.merge(lp.ledger)
        return out


def run_distributed(g: Graph, pa: PartitionAssignment, solution: Solution = Solution.A,
                    scenario: int = 1, seed: int = 0, workers: int = 1, **kw):
    """Convenience wrapper: build, run one scenario, return
    ``(report, ledger, simulation)``."""
    from .experiments import drive_scenario

    sim = DistributedSimulation(g, pa, solution, workers=workers, **kw)
    report = drive_scenario(sim, scenario)
    return report, sim.ledger, sim
