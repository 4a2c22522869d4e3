"""Deterministic discrete-event core.

A single :class:`Simulator` owns a virtual clock in integer microseconds,
a priority queue of events and a set of named pseudo-random streams.  All
stochastic decisions in a run (radio losses, trickle jitter, MAC backoff,
mobility headings, topology placement) draw from these streams, so a run
is fully reproduced by its seed.

The clock is integer-valued on purpose: float clocks accumulate
platform-dependent rounding and break replay determinism.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000

# Event kinds used in traces. Handlers are free-form callables; the kind
# only labels the event for tracing and debugging.
FRAME_ARRIVAL = "FrameArrival"
TIMER_EXPIRY = "TimerExpiry"
APP_SEND = "AppSend"
MOBILITY_TICK = "MobilityTick"
SIM_END = "SimEnd"


class SchedulingError(Exception):
    """Raised when an event is scheduled in the past (configuration bug)."""


@dataclass(slots=True)
class Event:
    """A scheduled simulator event; also serves as its cancellation handle."""

    fire_us: int
    seq: int
    kind: str
    node: int
    detail: str
    fn: Optional[Callable[[], None]]
    cancelled: bool = field(default=False)

    def cancel(self) -> None:
        self.cancelled = True


class RngStreams:
    """Named, splittable pseudo-random streams.

    Each stream is an independent PCG64 generator whose seed is derived
    from (run seed, stream label) via SHA-256, so draws on one subsystem's
    stream never perturb another's, and the same (seed, label) pair gives
    the same sequence on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        gen = self._streams.get(label)
        if gen is None:
            digest = hashlib.sha256(label.encode("utf-8")).digest()
            words = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=words)
            gen = np.random.Generator(np.random.PCG64(ss))
            self._streams[label] = gen
        return gen


class Simulator:
    """Single-threaded event loop over a virtual integer-microsecond clock.

    Events dispatch in nondecreasing ``fire_us`` order; ties dispatch in
    insertion order (monotone sequence counter), never by event kind, so
    behavior is independent of queue internals.
    """

    def __init__(self, seed: int = 0, trace: Optional[Callable[[Event], None]] = None):
        self.now_us = 0
        self.rng = RngStreams(seed)
        self.dispatched = 0
        self.trace = trace
        self.on_dispatch: Optional[Callable[[Event], None]] = None  # test/instrumentation hook
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0

    def schedule(
        self,
        fire_us: int,
        fn: Optional[Callable[[], None]],
        kind: str = TIMER_EXPIRY,
        node: int = -1,
        detail: str = "",
    ) -> Event:
        """Enqueue an event at absolute time ``fire_us``; returns its handle."""
        fire_us = int(fire_us)
        if fire_us < self.now_us:
            raise SchedulingError(
                f"event {kind!r} scheduled at {fire_us} us, before current clock {self.now_us} us"
            )
        ev = Event(fire_us, self._seq, kind, node, detail, fn)
        self._seq += 1
        heapq.heappush(self._heap, (fire_us, ev.seq, ev))
        return ev

    def schedule_in(self, delay_us: int, fn, kind: str = TIMER_EXPIRY, node: int = -1, detail: str = "") -> Event:
        return self.schedule(self.now_us + int(delay_us), fn, kind, node, detail)

    def run_until(self, end_us: int) -> int:
        """Dispatch every event with fire_us <= end_us; clock ends at end_us."""
        end_us = int(end_us)
        count = 0
        heap = self._heap
        while heap and heap[0][0] <= end_us:
            fire_us, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now_us = fire_us
            if self.trace is not None:
                self.trace(ev)
            if ev.fn is not None:
                ev.fn()
            count += 1
            if self.on_dispatch is not None:
                self.on_dispatch(ev)
        self.now_us = max(self.now_us, end_us)
        self.dispatched += count
        return count


def format_trace_line(ev: Event) -> str:
    """One tab-separated trace line: time_us, kind, node, detail."""
    return f"{ev.fire_us}\t{ev.kind}\t{ev.node}\t{ev.detail}"
