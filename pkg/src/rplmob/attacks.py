"""Insider attacker behaviors grafted onto :class:`rplmob.rpl.Node`.

Three behaviors, each strictly additive over the honest stack (an
attacker still joins, forwards data and answers DAOs):

* version-number: once a minute, advertise a DODAG version one above the
  highest version heard so far, triggering network-wide repairs;
* DIS flooding: multicast a DIS every 500 ms, pinning neighbors' trickle
  timers at their minimum interval;
* worst parent: always pick the costliest candidate parent instead of
  the cheapest, dragging the attacker's whole sub-DODAG onto bad paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .engine import TIMER_EXPIRY, US_PER_MS, US_PER_S
from .messages import DIS, Dis
from .objectives import EnergyState, ObjectiveFunction, ParentCandidate
from .rpl import Node, serial_increment, serial_max

VERSION_ATTACK = "version"
DIS_FLOOD = "dis-flood"
WORST_PARENT = "worst-parent"
ATTACK_KINDS = (VERSION_ATTACK, DIS_FLOOD, WORST_PARENT)


@dataclass(slots=True)
class AttackKind:
    name: str
    period_s: float  # cadence for the periodic attacks; unused for worst-parent

    def validate(self) -> None:
        if self.name not in ATTACK_KINDS:
            raise ValueError(f"unknown attack {self.name!r}")
        if self.period_s <= 0:
            raise ValueError("attack period must be positive")


def default_attack(name: str) -> AttackKind:
    periods = {VERSION_ATTACK: 60.0, DIS_FLOOD: 0.5, WORST_PARENT: 0.0}
    if name not in periods:
        raise ValueError(f"unknown attack {name!r}")
    return AttackKind(name, periods[name] or 1.0)


@dataclass(slots=True)
class AttackerAssignment:
    node: int
    kind: AttackKind
    mobile: bool = False


def worst_parent_select(
    candidates: Sequence[ParentCandidate],
    of: ObjectiveFunction,
    self_energy: Optional[EnergyState] = None,
) -> ParentCandidate:
    """Argmax of path cost; ties break to the highest node id.

    Exactly the mirror image of honest selection, which makes it
    testable as a dual oracle against ``select_parent``.
    """
    if not candidates:
        raise ValueError("worst-parent selection needs a nonempty candidate list")
    return max(candidates, key=lambda c: (of.path_cost(c, self_energy), c.neighbor))


def version_attack_tick(node: Node) -> None:
    """Advertise a version one past everything heard so far, then re-arm."""
    base = node._highest_version_seen
    if base is None:
        base = node.version if node.version is not None else 240
    falsified = serial_increment(serial_max(base, node.version if node.version is not None else base))
    node.version = falsified
    node._highest_version_seen = falsified
    node.version_history.append(falsified)
    node.trickle.reset()  # the falsified version goes out with the next DIO


def dis_flood_tick(node: Node) -> None:
    """One multicast DIS, right now, regardless of anything else on the air."""
    node.radio.send_preempting(DIS, Dis(node.id, None))


def install_attack(sim, node: Node, kind: AttackKind, start_us: int, end_us: int) -> None:
    """Flag the node as an attacker and schedule its periodic behavior."""
    kind.validate()
    node.attack_kind = kind.name
    if kind.name == WORST_PARENT:
        return  # selection override only; Node consults attack_kind itself
    period_us = int(round(kind.period_s * US_PER_S))
    tick = version_attack_tick if kind.name == VERSION_ATTACK else dis_flood_tick
    label = "attack-version" if kind.name == VERSION_ATTACK else "attack-dis"

    def fire() -> None:
        tick(node)
        nxt = sim.now_us + period_us
        if nxt <= end_us:
            sim.schedule(nxt, fire, TIMER_EXPIRY, node.id, label)

    first = start_us + period_us
    if first <= end_us:
        sim.schedule(first, fire, TIMER_EXPIRY, node.id, label)
