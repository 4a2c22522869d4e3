"""Per-node power accounting and run-level PDR / PC / OVR / LT metrics.

Power model: each node's elapsed time is partitioned into cpu, low-power,
transmit and receive states.  The radio has no duty cycling, so every
instant that is not transmit or cpu is charged to receive (idle listening
included).  This inflates absolute power uniformly across scenarios;
comparisons between scenarios remain meaningful, absolute values are not
comparable to duty-cycled deployments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .engine import US_PER_S
from .messages import CONTROL_KINDS


@dataclass(slots=True)
class PowerParams:
    """Current draw per state (mA) and supply voltage; Sky-mote-like defaults."""

    i_cpu_ma: float = 1.8
    i_lpm_ma: float = 0.0545
    i_tx_ma: float = 17.7
    i_rx_ma: float = 20.0
    voltage_v: float = 3.0

    def validate(self) -> None:
        if min(self.i_cpu_ma, self.i_lpm_ma, self.i_tx_ma, self.i_rx_ma, self.voltage_v) <= 0:
            raise ValueError("power parameters must be positive")


class RadioTimeLedger:
    """Cumulative per-node state durations in microseconds."""

    def __init__(self, node_ids):
        self.tx_us = {n: 0 for n in node_ids}
        self.cpu_us = {n: 0 for n in node_ids}
        self.lpm_us = {n: 0 for n in node_ids}
        self.rx_us = {n: 0 for n in node_ids}
        self._finalized = False

    def add_tx(self, node: int, dur_us: int) -> None:
        self.tx_us[node] += dur_us

    def add_cpu(self, node: int, dur_us: int) -> None:
        self.cpu_us[node] += dur_us

    def finalize(self, elapsed_us: int) -> None:
        """Charge all remaining time to idle listening (always-on radio)."""
        for n in self.tx_us:
            self.rx_us[n] = elapsed_us - self.tx_us[n] - self.cpu_us[n] - self.lpm_us[n]
        self._finalized = True

    def node_power_mw(self, node: int, params: PowerParams, elapsed_us: int) -> float:
        if elapsed_us <= 0:
            return 0.0
        tx = self.tx_us[node]
        cpu = self.cpu_us[node]
        lpm = self.lpm_us[node]
        rx = self.rx_us[node] if self._finalized else elapsed_us - tx - cpu - lpm
        mj = (
            cpu * params.i_cpu_ma
            + lpm * params.i_lpm_ma
            + tx * params.i_tx_ma
            + rx * params.i_rx_ma
        ) * params.voltage_v / US_PER_S
        return mj / (elapsed_us / US_PER_S)


def average_power(
    ledger: RadioTimeLedger, params: PowerParams, elapsed_s: float
) -> tuple[dict[int, float], float]:
    """Per-node average power in mW and the fleet mean.

    P = (t_cpu*I_cpu + t_lpm*I_lpm + t_tx*I_tx + t_rx*I_rx) * V / elapsed.
    """
    if elapsed_s <= 0:
        raise ValueError("elapsed time must be positive")
    elapsed_us = elapsed_s * US_PER_S
    per_node = {}
    for n in ledger.tx_us:
        mj = (
            ledger.cpu_us[n] * params.i_cpu_ma
            + ledger.lpm_us[n] * params.i_lpm_ma
            + ledger.tx_us[n] * params.i_tx_ma
            + ledger.rx_us[n] * params.i_rx_ma
        ) * params.voltage_v / US_PER_S
        per_node[n] = mj / elapsed_s
    fleet = sum(per_node.values()) / len(per_node) if per_node else 0.0
    return per_node, fleet


@dataclass(slots=True)
class PacketRecord:
    source: int
    send_us: int
    recv_us: Optional[int] = None
    hops: int = 0
    drop_reason: Optional[str] = None


class PacketLedger:
    """Data-packet fates plus per-node transmitted control-message counters."""

    def __init__(self, node_ids):
        self.packets: dict[int, PacketRecord] = {}
        self.control_tx = {n: {"dio": 0, "dis": 0, "dao": 0, "dao_ack": 0} for n in node_ids}

    def packet_sent(self, pid: int, source: int, now_us: int) -> None:
        self.packets[pid] = PacketRecord(source, now_us)

    def packet_delivered(self, pid: int, now_us: int, hops: int) -> None:
        rec = self.packets[pid]
        if rec.recv_us is None and rec.drop_reason is None:
            rec.recv_us = now_us
            rec.hops = hops

    def packet_dropped(self, pid: int, reason: str) -> None:
        rec = self.packets[pid]
        if rec.recv_us is None and rec.drop_reason is None:
            rec.drop_reason = reason

    def count_control_tx(self, node: int, kind: str) -> None:
        self.control_tx[node][kind] += 1

    def close(self) -> None:
        """Mark packets still in flight at the end of the run as dropped."""
        for rec in self.packets.values():
            if rec.recv_us is None and rec.drop_reason is None:
                rec.drop_reason = "unresolved_at_end"

    @property
    def sent(self) -> int:
        return len(self.packets)

    @property
    def delivered(self) -> int:
        return sum(1 for r in self.packets.values() if r.recv_us is not None)

    @property
    def dropped(self) -> int:
        return sum(1 for r in self.packets.values() if r.drop_reason is not None)


def pdr(ledger: PacketLedger) -> Optional[float]:
    """Delivered / sent; None when nothing was sent."""
    if ledger.sent == 0:
        return None
    return ledger.delivered / ledger.sent


def overhead(ledger: PacketLedger) -> int:
    """Total transmitted DIO + DIS + DAO (DAO-ACK excluded by definition)."""
    return sum(
        counts[kind] for counts in ledger.control_tx.values() for kind in ("dio", "dis", "dao")
    )


def latency(ledger: PacketLedger) -> Optional[float]:
    """Mean end-to-end delay in seconds over delivered packets; None if none."""
    delays = [
        (r.recv_us - r.send_us) / US_PER_S for r in ledger.packets.values() if r.recv_us is not None
    ]
    if not delays:
        return None
    return sum(delays) / len(delays)


@dataclass(slots=True)
class MetricsRecord:
    pdr: Optional[float]
    pc_mw: float
    ovr_total: int
    ovr_per_node_s: float
    lt_s: Optional[float]
    sent: int
    delivered: int
    dropped: int
    per_node_pc_mw: dict = field(default_factory=dict)
    drop_reasons: dict = field(default_factory=dict)


def build_metrics(
    packets: PacketLedger,
    times: RadioTimeLedger,
    power: PowerParams,
    duration_s: float,
    node_count: int,
) -> MetricsRecord:
    per_node, fleet = average_power(times, power, duration_s)
    ovr = overhead(packets)
    reasons: dict[str, int] = {}
    for rec in packets.packets.values():
        if rec.drop_reason is not None:
            reasons[rec.drop_reason] = reasons.get(rec.drop_reason, 0) + 1
    return MetricsRecord(
        pdr=pdr(packets),
        pc_mw=fleet,
        ovr_total=ovr,
        ovr_per_node_s=ovr / node_count / duration_s,
        lt_s=latency(packets),
        sent=packets.sent,
        delivered=packets.delivered,
        dropped=packets.dropped,
        per_node_pc_mw=per_node,
        drop_reasons=reasons,
    )


class ConservationError(AssertionError):
    pass


def check_conservation(record: MetricsRecord, medium_control_recount: int) -> None:
    """Post-run audit: packet fates partition, and OVR matches the medium log."""
    if record.sent != record.delivered + record.dropped:
        raise ConservationError(
            f"packet conservation violated: sent={record.sent} "
            f"delivered={record.delivered} dropped={record.dropped}"
        )
    if record.ovr_total != medium_control_recount:
        raise ConservationError(
            f"overhead mismatch: counted {record.ovr_total}, medium log {medium_control_recount}"
        )
