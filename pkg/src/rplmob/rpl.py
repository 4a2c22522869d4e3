"""Per-node RPL state machine.

Covers DODAG joining, rank maintenance through a pluggable objective
function, trickle-governed DIO emission, DIS solicitation, storing-mode
DAO routing with DAO-ACK retries, hop-by-hop upward data forwarding, and
honest migration when a newer DODAG version is heard.

Conventions:

* ranks live in a 16-bit space; 65535 means "not in the DODAG";
* the root's rank equals MinHopRankIncrease (256);
* DODAG versions compare with 8-bit serial-number arithmetic and start
  at 240;
* a node that loses every candidate parent performs a local repair:
  infinite rank, poisoning DIOs, and a fresh lowest-rank baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .engine import TIMER_EXPIRY, US_PER_MS, US_PER_S, Simulator
from .messages import DAO, DAO_ACK, DATA, DIO, DIS, Dao, DaoAck, DataPacket, Dio, Dis
from .objectives import (
    INFINITE_RANK,
    MAX_LINK_ETX,
    MIN_HOP_RANK_INCREASE,
    EnergyState,
    LinkStats,
    ObjectiveFunction,
    ParentCandidate,
    select_parent,
    update_etx_from_transmission,
)
from .radio import Medium, NodeRadio

ROOT_RANK = MIN_HOP_RANK_INCREASE
INITIAL_VERSION = 240
_SERIAL_MOD = 256


def serial_newer(a: int, b: int) -> bool:
    """True iff version a is newer than b under 8-bit serial arithmetic."""
    return a != b and ((a - b) % _SERIAL_MOD) < _SERIAL_MOD // 2


def serial_increment(v: int) -> int:
    return (v + 1) % _SERIAL_MOD


def serial_max(a: int, b: int) -> int:
    return a if serial_newer(a, b) or a == b else b


@dataclass(slots=True)
class TrickleParams:
    i_min_ms: int = 4096
    doublings: int = 8
    redundancy_k: int = 10


class TrickleTimer:
    """RFC-6206 trickle: double while consistent, reset on inconsistency."""

    def __init__(self, sim: Simulator, params: TrickleParams, node_id: int, emit: Callable[[], None]):
        self.sim = sim
        self.node_id = node_id
        self.emit = emit
        self.i_min_us = params.i_min_ms * US_PER_MS
        self.i_max_us = self.i_min_us << params.doublings
        self.k = params.redundancy_k
        self.interval_us = 0
        self.counter = 0
        self.running = False
        self._rng = sim.rng.stream(f"trickle-{node_id}")
        self._fire_ev = None
        self._end_ev = None

    def start(self) -> None:
        if self.running:
            return
        self.running = True
        self.interval_us = self.i_min_us
        self._begin_interval()

    def reset(self) -> None:
        if not self.running:
            self.start()
            return
        if self.interval_us > self.i_min_us:
            self._cancel()
            self.interval_us = self.i_min_us
            self._begin_interval()
        # already at the minimum interval: let the current one play out

    def hear_consistent(self) -> None:
        if self.running:
            self.counter += 1

    def _cancel(self) -> None:
        if self._fire_ev is not None:
            self._fire_ev.cancel()
        if self._end_ev is not None:
            self._end_ev.cancel()

    def _begin_interval(self) -> None:
        if not self.i_min_us <= self.interval_us <= self.i_max_us:
            raise AssertionError("trickle interval left its bounds")
        self.counter = 0
        half = self.interval_us // 2
        t = half + int(self._rng.integers(0, half))
        self._fire_ev = self.sim.schedule_in(t, self._fire, TIMER_EXPIRY, self.node_id, "trickle-fire")
        self._end_ev = self.sim.schedule_in(
            self.interval_us, self._end, TIMER_EXPIRY, self.node_id, "trickle-interval"
        )

    def _fire(self) -> None:
        if self.counter < self.k:
            self.emit()

    def _end(self) -> None:
        self.interval_us = min(self.interval_us * 2, self.i_max_us)
        self._begin_interval()


@dataclass(slots=True)
class StackParams:
    dis_initial_s: float = 5.0
    dis_interval_s: float = 60.0
    neighbor_expiry_s: float = 600.0
    housekeeping_period_s: float = 60.0
    dao_retry_s: float = 2.0
    dao_max_retx: int = 3
    ttl: int = 64
    # rank drift below this is advertised silently, without a trickle reset
    significant_rank_change: int = 64
    # within one version, a node may not sink more than this below its best rank
    max_rank_increase: int = 1792
    cpu_rx_us: int = 500
    cpu_origin_us: int = 1000


@dataclass(slots=True)
class NeighborEntry:
    advertised_rank: int
    advertised_cost: Optional[float]
    version: int
    last_heard_us: int
    link: LinkStats


class Node:
    """One RPL node (root, honest sensor, or attacker-flavored sensor)."""

    def __init__(
        self,
        sim: Simulator,
        medium: Medium,
        node_id: int,
        is_root: bool,
        of: ObjectiveFunction,
        trickle_params: TrickleParams,
        stack: StackParams,
        packet_ledger,
        energy_probe: Callable[[], float],
        p_max_mw: float = 1.0,
        cpu_charge: Optional[Callable[[int, int], None]] = None,
    ):
        self.sim = sim
        self.medium = medium
        self.id = node_id
        self.is_root = is_root
        self.of = of
        self.stack = stack
        self.packets = packet_ledger
        self.energy_probe = energy_probe
        self.p_max_mw = p_max_mw
        self.cpu_charge = cpu_charge
        self.radio = NodeRadio(sim, medium, node_id)
        self.radio.on_unicast_result = self._on_unicast_result
        self.radio.on_overflow = self._on_overflow
        medium.attach(node_id, self)

        self.version: Optional[int] = None
        self.rank = INFINITE_RANK
        self.preferred_parent: Optional[int] = None
        self.advertised_cost: Optional[float] = None
        self.neighbors: dict[int, NeighborEntry] = {}
        self.downward_routes: dict[int, int] = {}
        self.min_rank = INFINITE_RANK
        self.ever_joined = False
        self.trickle = TrickleTimer(sim, trickle_params, node_id, self._emit_dio)

        self.dao_seq = 0
        self._pending_daos: dict[int, dict] = {}
        self._last_link_seq: dict[int, int] = {}
        self._dao_rng = sim.rng.stream(f"dao-{node_id}")

        # attack hooks; None on honest nodes, so honest paths never branch
        self.attack_kind: Optional[str] = None
        self.version_history: list[int] = []
        self.selection_log: list[tuple[int, list[tuple[int, float]], int]] = []
        self._highest_version_seen: Optional[int] = None

    # -- lifecycle ----------------------------------------------------------

    def boot(self) -> None:
        if self.is_root:
            self.version = INITIAL_VERSION
            self.rank = ROOT_RANK
            self.min_rank = ROOT_RANK
            self.advertised_cost = 0.0 if self.of.name != "of0" else None
            self.ever_joined = True
            self.trickle.start()
        else:
            self.sim.schedule_in(
                int(self.stack.dis_initial_s * US_PER_S), self._dis_cycle, TIMER_EXPIRY, self.id, "dis-cycle"
            )
        self.sim.schedule_in(
            int(self.stack.housekeeping_period_s * US_PER_S),
            self._housekeeping,
            TIMER_EXPIRY,
            self.id,
            "housekeeping",
        )

    @property
    def joined(self) -> bool:
        return self.rank < INFINITE_RANK

    # -- reception ----------------------------------------------------------

    def on_physical_frame(self, frame) -> None:
        entry = self.neighbors.get(frame.src)
        if entry is not None:
            entry.last_heard_us = self.sim.now_us
        if frame.dst is not None:
            if frame.dst != self.id:
                return  # overheard unicast: freshness only
            if self._last_link_seq.get(frame.src) == frame.link_seq:
                return  # link-layer duplicate (retransmission after a lost ack)
            self._last_link_seq[frame.src] = frame.link_seq
        if self.cpu_charge is not None:
            self.cpu_charge(self.id, self.stack.cpu_rx_us)
        kind = frame.kind
        if kind == DIO:
            self.handle_dio(frame.payload)
        elif kind == DIS:
            self.handle_dis(frame.payload)
        elif kind == DAO:
            self.handle_dao(frame.payload)
        elif kind == DAO_ACK:
            self.handle_dao_ack(frame.payload)
        elif kind == DATA:
            self._on_data(frame.payload)

    # -- DIO / version handling ----------------------------------------------

    def handle_dio(self, dio: Dio) -> None:
        now = self.sim.now_us
        src = dio.sender
        if self.attack_kind == "version":
            self._highest_version_seen = (
                dio.version
                if self._highest_version_seen is None
                else serial_max(self._highest_version_seen, dio.version)
            )
        entry = self.neighbors.get(src)
        if entry is None:
            entry = NeighborEntry(dio.rank, dio.path_cost, dio.version, now, LinkStats())
            self.neighbors[src] = entry
        entry.last_heard_us = now

        if dio.rank >= INFINITE_RANK:
            # poison: the sender left the DODAG
            entry.advertised_rank = INFINITE_RANK
            entry.advertised_cost = None
            entry.version = dio.version
            if self.preferred_parent == src:
                self._reselect_and_apply()
            return

        if self.is_root:
            if serial_newer(dio.version, self.version):
                # someone (an attacker, normally) outran our version: re-anchor
                self.version = dio.version
                self.trickle.reset()
            elif dio.version == self.version:
                self.trickle.hear_consistent()
            entry.advertised_rank = dio.rank
            entry.advertised_cost = dio.path_cost
            entry.version = dio.version
            return

        if self.version is None:
            self.version = dio.version

        if serial_newer(dio.version, self.version):
            entry.advertised_rank = dio.rank
            entry.advertised_cost = dio.path_cost
            entry.version = dio.version
            if self.attack_kind is not None:
                # insiders track the new version without tearing their state down
                self.version = dio.version
                self._reselect_and_apply()
                return
            # honest share of a global repair: drop parents, rejoin in the new version
            self.version = dio.version
            self.preferred_parent = None
            self.rank = INFINITE_RANK
            self.advertised_cost = None
            self.min_rank = INFINITE_RANK
            self._cancel_pending_daos()
            self._reselect_and_apply()
            self.trickle.reset()
            return

        if serial_newer(self.version, dio.version):
            # stale DODAG iteration: remember, but never join through it
            entry.advertised_rank = dio.rank
            entry.advertised_cost = dio.path_cost
            entry.version = dio.version
            return

        entry.advertised_rank = dio.rank
        entry.advertised_cost = dio.path_cost
        entry.version = dio.version
        changed = self._reselect_and_apply()
        if not changed:
            self.trickle.hear_consistent()

    # -- parent selection -----------------------------------------------------

    def _self_energy(self) -> Optional[EnergyState]:
        if self.of.name == "mrhof-energy":
            return EnergyState(self.p_max_mw, self.energy_probe())
        return None

    def _candidates(self, self_energy) -> list[ParentCandidate]:
        rank_cap = INFINITE_RANK
        if self.min_rank < INFINITE_RANK:
            rank_cap = min(INFINITE_RANK, self.min_rank + self.stack.max_rank_increase)
        usability = self.of.uses_link_usability
        out = []
        for nid in sorted(self.neighbors):
            e = self.neighbors[nid]
            if e.advertised_rank >= INFINITE_RANK:
                continue
            if e.version != self.version and self.attack_kind is None:
                continue
            if usability and e.link.etx_estimate() > MAX_LINK_ETX:
                continue
            cand = ParentCandidate(nid, e.advertised_rank, e.advertised_cost, e.link)
            prospective = self.of.rank_through(cand, self_energy)
            if prospective >= INFINITE_RANK or prospective > rank_cap:
                continue
            out.append(cand)
        return out

    def _reselect_and_apply(self) -> bool:
        """Re-run parent selection; True if the result was an inconsistency."""
        self_energy = self._self_energy()
        cands = self._candidates(self_energy)
        current = next((c for c in cands if c.neighbor == self.preferred_parent), None)
        if self.attack_kind == "worst-parent" and cands:
            from .attacks import worst_parent_select  # local import: no cycle at module load

            choice = worst_parent_select(cands, self.of, self_energy)
            self.selection_log.append(
                (
                    self.sim.now_us,
                    [(c.neighbor, self.of.path_cost(c, self_energy)) for c in cands],
                    choice.neighbor,
                )
            )
        else:
            choice = select_parent(self.of, cands, current, self_energy=self_energy)

        if choice is None:
            if self.preferred_parent is None and not self.joined:
                return False
            # no usable parent: local repair (poison, fresh rank baseline)
            self.preferred_parent = None
            self.rank = INFINITE_RANK
            self.advertised_cost = None
            self.min_rank = INFINITE_RANK
            self._cancel_pending_daos()
            if self.ever_joined:
                self.trickle.reset()
            return True

        new_parent = choice.neighbor
        new_rank = self.of.rank_through(choice, self_energy)
        new_cost = self.of.advertised_cost_through(choice, self_energy)
        parent_changed = new_parent != self.preferred_parent
        was_orphan = not self.joined
        rank_moved = (
            INFINITE_RANK if was_orphan else abs(new_rank - self.rank)
        ) >= self.stack.significant_rank_change

        self.preferred_parent = new_parent
        self.rank = new_rank
        self.advertised_cost = new_cost
        self.min_rank = min(self.min_rank, new_rank)

        if parent_changed:
            self.ever_joined = True
            self._send_dao_burst()
        if parent_changed or rank_moved:
            self.trickle.reset()
            return True
        return False

    # -- DIS ------------------------------------------------------------------

    def handle_dis(self, dis: Dis) -> None:
        if not self.joined:
            return  # nothing to advertise yet
        if dis.unicast_to == self.id:
            self._emit_dio(unicast_to=dis.sender)
        else:
            self.trickle.reset()

    def _dis_cycle(self) -> None:
        if not self.joined:
            self.radio.send(DIS, Dis(self.id, None), dst=None)
        self.sim.schedule_in(
            int(self.stack.dis_interval_s * US_PER_S), self._dis_cycle, TIMER_EXPIRY, self.id, "dis-cycle"
        )

    # -- DIO emission -----------------------------------------------------------

    def _emit_dio(self, unicast_to: Optional[int] = None) -> None:
        if not self.ever_joined:
            return
        dio = Dio(self.id, self.version, self.rank, path_cost=self.advertised_cost)
        self.radio.send(DIO, dio, dst=unicast_to)

    # -- DAO / downward routes ----------------------------------------------------

    def _send_dao_burst(self) -> None:
        self._send_dao(self.id)
        for target in sorted(self.downward_routes):
            self._send_dao(target)

    def _send_dao(self, target: int) -> None:
        if self.preferred_parent is None:
            return  # deferred: the burst on (re)join covers it
        old = self._pending_daos.get(target)
        if old is not None and old["timer"] is not None:
            old["timer"].cancel()
        self.dao_seq += 1
        entry = {"seq": self.dao_seq, "tx": 0, "timer": None}
        self._pending_daos[target] = entry
        # small latency so the children of one advertiser do not all fire at once
        latency = int(self._dao_rng.integers(2 * US_PER_S, 4 * US_PER_S))
        entry["timer"] = self.sim.schedule_in(
            latency, lambda: self._dao_transmit(target), TIMER_EXPIRY, self.id, "dao-latency"
        )

    def _dao_transmit(self, target: int) -> None:
        entry = self._pending_daos.get(target)
        if entry is None or self.preferred_parent is None:
            return
        entry["tx"] += 1
        self.radio.send(DAO, Dao(self.id, target, entry["seq"]), dst=self.preferred_parent)
        entry["timer"] = self.sim.schedule_in(
            int(self.stack.dao_retry_s * US_PER_S),
            lambda: self._dao_retry(target),
            TIMER_EXPIRY,
            self.id,
            "dao-retry",
        )

    def _dao_retry(self, target: int) -> None:
        entry = self._pending_daos.get(target)
        if entry is None:
            return
        if entry["tx"] > self.stack.dao_max_retx:
            del self._pending_daos[target]  # give up; next parent change retries
            return
        self._dao_transmit(target)

    def _cancel_pending_daos(self) -> None:
        for entry in self._pending_daos.values():
            if entry["timer"] is not None:
                entry["timer"].cancel()
        self._pending_daos.clear()

    def handle_dao(self, dao: Dao) -> None:
        if dao.target == self.id:
            return
        changed = self.downward_routes.get(dao.target) != dao.sender
        self.downward_routes[dao.target] = dao.sender
        self.radio.send(DAO_ACK, DaoAck(self.id, dao.seq), dst=dao.sender)
        if changed and not self.is_root:
            self._send_dao(dao.target)  # storing mode: announce the target upward

    def handle_dao_ack(self, ack: DaoAck) -> None:
        for target, entry in list(self._pending_daos.items()):
            if entry["seq"] == ack.acked_seq:
                if entry["timer"] is not None:
                    entry["timer"].cancel()
                del self._pending_daos[target]
                return

    # -- repair -----------------------------------------------------------------

    def global_repair(self) -> None:
        if not self.is_root:
            raise AssertionError("global repair may only be invoked at the root")
        self.version = serial_increment(self.version)
        self.trickle.reset()

    # -- data plane ----------------------------------------------------------------

    def originate_data(self, packet_id: int) -> None:
        self.packets.packet_sent(packet_id, self.id, self.sim.now_us)
        if self.cpu_charge is not None:
            self.cpu_charge(self.id, self.stack.cpu_origin_us)
        self._forward(DataPacket(packet_id, self.id, self.stack.ttl))

    def _on_data(self, pkt: DataPacket) -> None:
        if self.is_root:
            self.packets.packet_delivered(pkt.packet_id, self.sim.now_us, pkt.hops)
        else:
            self._forward(pkt)

    def _forward(self, pkt: DataPacket) -> None:
        if self.preferred_parent is None or not self.joined:
            self.packets.packet_dropped(pkt.packet_id, "no_parent")
            return
        if pkt.ttl <= 0:
            self.packets.packet_dropped(pkt.packet_id, "ttl")
            return
        pkt.ttl -= 1
        pkt.hops += 1
        self.radio.send(DATA, pkt, dst=self.preferred_parent)

    # -- link feedback ----------------------------------------------------------------

    def _on_unicast_result(self, frame, attempts: int, acked: bool) -> None:
        dst = frame.dst
        entry = self.neighbors.get(dst)
        if entry is not None:
            entry.link = update_etx_from_transmission(entry.link, attempts, acked)
            if acked:
                entry.last_heard_us = self.sim.now_us
        if frame.kind == DATA and not acked:
            self.packets.packet_dropped(frame.payload.packet_id, "link")
        if (
            dst == self.preferred_parent
            and self.of.uses_link_usability
            and (not acked or attempts > 1)
        ):
            # the measured cost of the preferred link moved; let MRHOF react
            self._reselect_and_apply()

    def _on_overflow(self, frame) -> None:
        if frame.kind == DATA:
            self.packets.packet_dropped(frame.payload.packet_id, "queue")

    # -- housekeeping ----------------------------------------------------------------

    def _housekeeping(self) -> None:
        cutoff = self.sim.now_us - int(self.stack.neighbor_expiry_s * US_PER_S)
        stale = [nid for nid, e in self.neighbors.items() if e.last_heard_us < cutoff]
        for nid in stale:
            del self.neighbors[nid]
            self._last_link_seq.pop(nid, None)
        if not self.is_root and self.preferred_parent is not None and self.preferred_parent not in self.neighbors:
            self._reselect_and_apply()
        self.sim.schedule_in(
            int(self.stack.housekeeping_period_s * US_PER_S),
            self._housekeeping,
            TIMER_EXPIRY,
            self.id,
            "housekeeping",
        )
