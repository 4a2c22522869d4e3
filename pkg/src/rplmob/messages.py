"""Control and data message payloads carried by link-layer frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

DIO = "dio"
DIS = "dis"
DAO = "dao"
DAO_ACK = "dao_ack"
DATA = "data"

CONTROL_KINDS = (DIO, DIS, DAO)  # the kinds that count toward overhead

# Payload sizes in bytes (IPv6/ICMPv6 or UDP payload, before the fixed
# link-layer framing overhead the medium adds).
PAYLOAD_BYTES = {
    DIO: 76,
    DIS: 6,
    DAO: 20,
    DAO_ACK: 4,
    DATA: 64,
}


@dataclass(slots=True)
class Dio:
    sender: int
    version: int
    rank: int
    instance_id: int = 0
    path_cost: Optional[float] = None  # metric container; present for MRHOF


@dataclass(slots=True)
class Dis:
    sender: int
    unicast_to: Optional[int] = None  # None = multicast


@dataclass(slots=True)
class Dao:
    sender: int
    target: int
    seq: int


@dataclass(slots=True)
class DaoAck:
    sender: int
    acked_seq: int


@dataclass(slots=True)
class DataPacket:
    packet_id: int
    source: int
    ttl: int
    hops: int = 0
