"""Sequential discrete-event core: events, event list and clock.

Time is integer milliseconds ("ticks"). Events are totally ordered by
``(timestamp, rank, origin, seq)``; ``origin`` is the router that created
the event (0 for scenario-driven events) and ``seq`` a per-origin counter,
so the order does not depend on how the simulated system is partitioned.
"""

from __future__ import annotations

import gc
import heapq
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Iterator, List, NamedTuple, Optional, Tuple

DEFAULT_EVENT_LIMIT = 10 ** 9

# rank sub-key: coherence syncs sort ahead of everything at equal timestamps
RANK_SYNC = 0
RANK_NORMAL = 1
# end-of-tick emission of a router's accumulated modifications
RANK_EMIT = 2


class EventKind(IntEnum):
    SESSION_ESTABLISH = 0
    UPDATE_DELIVERY = 1
    LINK_FAILURE = 2
    LINK_REPAIR = 3
    NULL_EVENT = 4
    ORIGINATE = 5
    MRAI_FLUSH = 6
    GHOST_SYNC = 7
    EMIT = 8


class Event(NamedTuple):
    timestamp: int
    rank: int
    origin: int
    seq: int
    kind: EventKind
    target: int
    payload: Any = None

    @property
    def key(self) -> Tuple[int, int, int, int]:
        return (self.timestamp, self.rank, self.origin, self.seq)


class CausalityError(RuntimeError):
    """An event was scheduled before the current simulation time."""


class NonConvergenceError(RuntimeError):
    def __init__(self, limit: int):
        super().__init__(f"event limit of {limit} processed events exceeded")
        self.limit = limit


class EventList:
    """Binary heap of events keyed by their total-order key."""

    def __init__(self):
        self._heap: List[Event] = []

    def push(self, e: Event) -> None:
        heapq.heappush(self._heap, e)

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass
class SimulationReport:
    events: int = 0
    by_kind: Counter = field(default_factory=Counter)
    clock: int = 0

    def merge(self, other: "SimulationReport") -> None:
        self.events += other.events
        self.by_kind.update(other.by_kind)
        self.clock = max(self.clock, other.clock)

    def as_dict(self) -> dict:
        return {"events": self.events, "clock": self.clock,
                "by_kind": {EventKind(k).name: c for k, c in sorted(self.by_kind.items())}}


@contextmanager
def gc_paused() -> Iterator[None]:
    """Suspend the cyclic collector around a hot loop.

    Events and messages are short-lived acyclic tuples that reference
    counting frees; scanning for cycles among them only costs time.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


class Simulator:
    """Single event list plus global clock.

    ``handler(event)`` is called for every popped event; it may schedule
    further events through :meth:`schedule`.
    """

    def __init__(self, handler: Callable[[Event], None],
                 limit: int = DEFAULT_EVENT_LIMIT):
        self.handler = handler
        self.limit = limit
        self.now = 0
        self.events = EventList()
        self.report = SimulationReport()
        self._world_seq = 0
        self.trace: Optional[List[Tuple[int, int, int, int]]] = None

    def next_world_seq(self) -> int:
        self._world_seq += 1
        return self._world_seq

    def schedule(self, e: Event) -> None:
        if e.timestamp < self.now:
            raise CausalityError(
                f"event at t={e.timestamp} scheduled when now={self.now}: {e.kind.name}")
        self.events.push(e)

    def step(self) -> Event:
        e = self.events.pop()
        self.now = e.timestamp
        rep = self.report
        rep.events += 1
        rep.by_kind[e.kind] += 1
        rep.clock = e.timestamp
        if self.trace is not None:
            self.trace.append(e.key)
        self.handler(e)
        return e

    def run_until_quiescence(self, limit: Optional[int] = None) -> SimulationReport:
        limit = self.limit if limit is None else limit
        if self.trace is not None:
            while self.events:
                if self.report.events >= limit:
                    raise NonConvergenceError(limit)
                self.step()
            return self.report
        # hot loop: same effect as repeated step() without per-event bookkeeping calls
        heap = self.events._heap
        pop = heapq.heappop
        handler = self.handler
        counts = [0] * len(EventKind)
        done = self.report.events
        try:
            with gc_paused():
                while heap:
                    if done >= limit:
                        raise NonConvergenceError(limit)
                    e = pop(heap)
                    self.now = e[0]
                    counts[e[4]] += 1
                    done += 1
                    handler(e)
        finally:
            rep = self.report
            rep.events = done
            rep.clock = self.now
            for k, c in enumerate(counts):
                if c:
                    rep.by_kind[EventKind(k)] += c
        return self.report
