"""Unit-disk radio medium with distance loss, plus the per-node link layer.

Propagation model:

* a frame is receivable only within ``tx_range`` of the sender;
* reception succeeds with ``success_tx * (1 - (d^2/tx_range^2) * (1 - success_rx))``;
* any other transmission audible at the receiver (within ``int_range`` of
  its sender) that overlaps the frame in time corrupts it, and a node
  cannot receive while it is itself transmitting.

Corruption is purely geometric and temporal, so it is symmetric: when two
receivable frames overlap at a node, each interferes with the other and
the node loses both.

The link layer does CSMA-style unicast: a random backoff in [0, 8 ms]
before every attempt, a link acknowledgment, and up to 3 retransmissions.
Broadcast frames go on the air once, immediately, unacknowledged.
Acknowledgments are modeled as an instantaneous reverse-direction loss
draw; they do not occupy the medium.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import FRAME_ARRIVAL, TIMER_EXPIRY, US_PER_S, Simulator
from .messages import PAYLOAD_BYTES

Position = tuple[float, float]


@dataclass(slots=True)
class MediumParams:
    tx_range_m: float = 50.0
    int_range_m: float = 100.0
    success_tx: float = 1.0
    success_rx: float = 1.0
    bitrate_bps: int = 250_000
    overhead_bytes: int = 23  # link-layer framing beyond the payload

    def validate(self) -> None:
        if not (0.0 < self.tx_range_m <= self.int_range_m):
            raise ValueError("need 0 < tx_range <= int_range")
        for p in (self.success_tx, self.success_rx):
            if not (0.0 <= p <= 1.0):
                raise ValueError("success probabilities must lie in [0, 1]")


def distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def reachable(a: Position, b: Position, params: MediumParams) -> bool:
    """True iff b can receive a's transmissions (boundary inclusive)."""
    return distance(a, b) <= params.tx_range_m


def reception_probability(d: float, params: MediumParams) -> float:
    """Distance-loss success probability at separation ``d`` meters."""
    if d > params.tx_range_m:
        return 0.0
    ratio = (d * d) / (params.tx_range_m * params.tx_range_m)
    return params.success_tx * (1.0 - ratio * (1.0 - params.success_rx))


def airtime_us(payload_bytes: int, params: MediumParams) -> int:
    bits = (params.overhead_bytes + payload_bytes) * 8
    return int(round(bits * US_PER_S / params.bitrate_bps))


@dataclass(slots=True)
class Frame:
    kind: str
    payload: object
    src: int
    dst: Optional[int]  # None = broadcast
    link_seq: int
    size_bytes: int


@dataclass(slots=True)
class _Arrival:
    receiver: int
    frame: Frame
    start_us: int
    end_us: int
    corrupted: bool


@dataclass(slots=True)
class Transmission:
    sender: int
    start_us: int
    end_us: int
    arrivals: list = field(default_factory=list)
    intervals: list = field(default_factory=list)  # mutable [start, end] per audible node
    aborted: bool = False


class Medium:
    """Shared radio medium; owns positions, propagation and the tx log."""

    def __init__(self, sim: Simulator, params: MediumParams, positions: list[Position]):
        params.validate()
        self.sim = sim
        self.params = params
        self.positions = list(positions)
        self.mobile: set[int] = set()
        self.nodes: dict[int, object] = {}  # id -> object with on_physical_frame()
        self.tx_log: list[tuple[int, int, str]] = []  # (time_us, sender, kind)
        self.tx_counts: dict[str, int] = {}
        self.collisions = 0
        self.on_transmit: Optional[Callable[[int, str, int], None]] = None  # (node, kind, airtime_us)
        self._rng = sim.rng.stream("radio")
        self._audible: dict[int, list[list[int]]] = {i: [] for i in range(len(positions))}
        self._pending: dict[int, list[_Arrival]] = {i: [] for i in range(len(positions))}
        self._tx_busy_until: dict[int, int] = {i: 0 for i in range(len(positions))}
        self._static_nbrs: dict[int, list[tuple[int, float]]] = {}

    def attach(self, node_id: int, node: object) -> None:
        self.nodes[node_id] = node

    def move(self, node_id: int, x: float, y: float) -> None:
        self.positions[node_id] = (x, y)

    # -- neighborhood ------------------------------------------------------

    def _receivers_within_int(self, sender: int) -> list[tuple[int, float]]:
        pos = self.positions
        int_r = self.params.int_range_m
        sp = pos[sender]
        if sender in self.mobile:
            return [
                (nid, d)
                for nid in range(len(pos))
                if nid != sender and (d := distance(sp, pos[nid])) <= int_r
            ]
        static = self._static_nbrs.get(sender)
        if static is None:
            static = [
                (nid, d)
                for nid in range(len(pos))
                if nid != sender and nid not in self.mobile and (d := distance(sp, pos[nid])) <= int_r
            ]
            self._static_nbrs[sender] = static
        if not self.mobile:
            return static
        out = list(static)
        for nid in sorted(self.mobile):
            if nid != sender and (d := distance(sp, pos[nid])) <= int_r:
                out.append((nid, d))
        out.sort()
        return out

    # -- transmission ------------------------------------------------------

    def transmit(self, sender: int, frame: Frame) -> Transmission:
        """Put one frame on the air; returns a handle usable for aborting."""
        now = self.sim.now_us
        dur = airtime_us(frame.size_bytes, self.params)
        end = now + dur
        tx = Transmission(sender, now, end)
        self.tx_log.append((now, sender, frame.kind))
        self.tx_counts[frame.kind] = self.tx_counts.get(frame.kind, 0) + 1
        if self.on_transmit is not None:
            self.on_transmit(sender, frame.kind, dur)

        # the sender cannot hear anything while transmitting
        for arr in self._pending[sender]:
            if arr.start_us < end and now < arr.end_us:
                arr.corrupted = True
                self.collisions += 1

        tx_r = self.params.tx_range_m
        for nid, d in self._receivers_within_int(sender):
            pending = self._pending[nid]
            if pending:
                live = [a for a in pending if a.end_us > now]
                for arr in live:
                    if arr.start_us < end:
                        if not arr.corrupted:
                            self.collisions += 1
                        arr.corrupted = True
                self._pending[nid] = live
                pending = live
            audible = self._audible[nid]
            if audible:
                audible = [iv for iv in audible if iv[1] > now]
                self._audible[nid] = audible
            if d <= tx_r:
                p = reception_probability(d, self.params)
                ok = p >= 1.0 or (p > 0.0 and self._rng.random() < p)
                if ok:
                    interfered = any(iv[0] < end for iv in audible)
                    busy = self._tx_busy_until[nid] > now
                    if interfered or busy:
                        self.collisions += 1
                    arr = _Arrival(nid, frame, now, end, interfered or busy)
                    pending.append(arr)
                    tx.arrivals.append(arr)
                    self.sim.schedule(
                        end,
                        lambda a=arr: self._deliver(a),
                        FRAME_ARRIVAL,
                        node=nid,
                        detail=f"{frame.kind} from {sender}",
                    )
            interval = [now, end]
            audible.append(interval)
            tx.intervals.append(interval)
        self._tx_busy_until[sender] = end
        return tx

    def abort(self, tx: Transmission) -> None:
        """Cut a transmission short (radio retuned mid-frame); its frames die."""
        now = self.sim.now_us
        tx.aborted = True
        tx.end_us = min(tx.end_us, now)
        for arr in tx.arrivals:
            arr.corrupted = True
        for iv in tx.intervals:
            iv[1] = min(iv[1], now)
        if self._tx_busy_until[tx.sender] > now:
            self._tx_busy_until[tx.sender] = now

    def _deliver(self, arr: _Arrival) -> None:
        if arr.corrupted:
            return
        node = self.nodes.get(arr.receiver)
        if node is not None:
            node.on_physical_frame(arr.frame)

    def delivered_to(self, tx: Transmission, dst: int) -> bool:
        for arr in tx.arrivals:
            if arr.receiver == dst:
                return not arr.corrupted
        return False

    def ack_heard(self, src: int, dst: int) -> bool:
        """Reverse-direction loss draw for a link acknowledgment dst -> src."""
        d = distance(self.positions[src], self.positions[dst])
        p = reception_probability(d, self.params)
        if p >= 1.0:
            return True
        if p <= 0.0:
            return False
        return bool(self._rng.random() < p)

    def control_transmissions(self) -> int:
        """Recount of DIO+DIS+DAO transmissions straight from the tx log."""
        from .messages import CONTROL_KINDS

        return sum(1 for _, _, kind in self.tx_log if kind in CONTROL_KINDS)


MAX_TX_ATTEMPTS = 4  # 1 initial + up to 3 retransmissions
BACKOFF_MAX_US = 8_000
LINK_ACK_US = 512
TX_QUEUE_CAP = 64


class NodeRadio:
    """Per-node transmit queue with CSMA unicast and fire-and-forget broadcast."""

    def __init__(self, sim: Simulator, medium: Medium, node_id: int):
        self.sim = sim
        self.medium = medium
        self.node_id = node_id
        self.rng = sim.rng.stream(f"mac-{node_id}")
        self.queue: deque = deque()
        self.busy = False
        self.link_seq = 0
        self.current_tx: Optional[Transmission] = None
        self.preempt_until = 0
        # callbacks wired by the owning node
        self.on_unicast_result: Callable[[Frame, int, bool], None] = lambda f, n, ok: None
        self.on_overflow: Callable[[Frame], None] = lambda f: None

    def send(self, kind: str, payload: object, dst: Optional[int]) -> None:
        if len(self.queue) >= TX_QUEUE_CAP:
            self.on_overflow(Frame(kind, payload, self.node_id, dst, -1, PAYLOAD_BYTES[kind]))
            return
        self.link_seq += 1
        frame = Frame(kind, payload, self.node_id, dst, self.link_seq, PAYLOAD_BYTES[kind])
        self.queue.append([frame, 0])
        self._kick()

    def send_preempting(self, kind: str, payload: object) -> None:
        """Broadcast at this exact instant, killing any frame already on the air.

        Only the flooding attacker uses this; it keeps the advertised
        cadence exact regardless of what its radio was doing.  The queue
        machinery stays untouched: an aborted frame simply fails, and
        pending queue transmissions are held back until the preempting
        frame has left the air.
        """
        if self.current_tx is not None and self.current_tx.end_us > self.sim.now_us:
            self.medium.abort(self.current_tx)
        self.link_seq += 1
        frame = Frame(kind, payload, self.node_id, None, self.link_seq, PAYLOAD_BYTES[kind])
        tx = self.medium.transmit(self.node_id, frame)
        self.preempt_until = max(self.preempt_until, tx.end_us)

    def _kick(self) -> None:
        if self.busy or not self.queue:
            return
        self.busy = True
        entry = self.queue[0]
        frame = entry[0]
        if frame.dst is None:
            self._start_tx(entry)
        else:
            backoff = int(self.rng.integers(0, BACKOFF_MAX_US + 1))
            self.sim.schedule_in(
                backoff, lambda: self._start_tx(entry), TIMER_EXPIRY, self.node_id, "csma-backoff"
            )

    def _start_tx(self, entry) -> None:
        if self.sim.now_us < self.preempt_until:
            self.sim.schedule(
                self.preempt_until,
                lambda: self._start_tx(entry),
                TIMER_EXPIRY,
                self.node_id,
                "tx-deferred",
            )
            return
        frame = entry[0]
        entry[1] += 1
        tx = self.medium.transmit(self.node_id, frame)
        self.current_tx = tx
        done_at = tx.end_us + (LINK_ACK_US if frame.dst is not None else 0)
        self.sim.schedule(
            done_at, lambda: self._tx_done(entry, tx), TIMER_EXPIRY, self.node_id, "tx-done"
        )

    def _tx_done(self, entry, tx: Transmission) -> None:
        frame, attempts = entry
        self.current_tx = None
        if frame.dst is None:
            self.queue.popleft()
            self.busy = False
            self._kick()
            return
        delivered = not tx.aborted and self.medium.delivered_to(tx, frame.dst)
        acked = delivered and self.medium.ack_heard(self.node_id, frame.dst)
        if acked or attempts >= MAX_TX_ATTEMPTS:
            self.queue.popleft()
            self.busy = False
            self.on_unicast_result(frame, attempts, acked)
            self._kick()
        else:
            backoff = int(self.rng.integers(0, BACKOFF_MAX_US + 1))
            self.sim.schedule_in(
                backoff, lambda: self._start_tx(entry), TIMER_EXPIRY, self.node_id, "csma-backoff"
            )
