"""Rank computation and parent selection: OF0, MRHOF-ETX, MRHOF-ENERGY.

OF0 ranks grow by a fixed per-hop increase ``(Rf*Sp + Sr) * MinHopRankIncrease``.
MRHOF minimizes an additive path cost carried in the DIO metric container
(link ETX for MRHOF-ETX, normalized node power for MRHOF-ENERGY) and only
abandons the current parent when a candidate beats it by more than a
hysteresis threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

INFINITE_RANK = 65535  # 16-bit rank space sentinel
MIN_HOP_RANK_INCREASE = 256

# One cost unit (ETX hop, normalized power unit) expressed in rank units.
RANK_UNITS_PER_COST = 128.0
DEFAULT_HYSTERESIS_RANK = 192  # = 1.5 cost units

# Online ETX estimator.
ETX_ALPHA = 0.1
ETX_FAILURE_PENALTY = 8.0
ETX_INITIAL_GUESS = 2.0  # optimistic-but-cautious cost for untried links

# Candidates whose measured link ETX exceeds this are unusable for MRHOF
# parent selection (OF0 ignores link quality entirely).
MAX_LINK_ETX = 4.0

ENERGY_METRIC_CAP = 1e9  # energy_metric value when no power has been drawn yet


@dataclass(slots=True)
class Of0Params:
    rank_factor: int = 1      # Rf
    step_of_rank: int = 3     # Sp
    rank_stretch: int = 0     # Sr
    min_hop_rank_increase: int = MIN_HOP_RANK_INCREASE

    def validate(self) -> None:
        if self.rank_factor < 1 or self.step_of_rank < 1 or self.rank_stretch < 0:
            raise ValueError("need Rf >= 1, Sp >= 1, Sr >= 0")
        if self.min_hop_rank_increase <= 0:
            raise ValueError("MinHopRankIncrease must be positive")


def of0_rank_increase(p: Of0Params) -> int:
    """Per-hop rank increase: (Rf * Sp + Sr) * MinHopRankIncrease."""
    return (p.rank_factor * p.step_of_rank + p.rank_stretch) * p.min_hop_rank_increase


def of0_rank(parent_rank: int, p: Of0Params) -> int:
    """Rank through a parent advertising ``parent_rank``; saturates to infinity."""
    rank = parent_rank + of0_rank_increase(p)
    return rank if rank < INFINITE_RANK else INFINITE_RANK


@dataclass(slots=True)
class LinkStats:
    """Directional link quality; ``etx_ewma`` is None until the first sample."""

    df: float = 1.0
    dr: float = 1.0
    etx_ewma: Optional[float] = None

    def etx_estimate(self) -> float:
        return self.etx_ewma if self.etx_ewma is not None else ETX_INITIAL_GUESS


def etx(df: float, dr: float) -> float:
    """Expected transmission count 1/(df*dr); unusable links cost infinity."""
    if df <= 0.0 or dr <= 0.0:
        return math.inf
    return 1.0 / (df * dr)


def update_etx_from_transmission(link: LinkStats, tx_attempts: int, acked: bool) -> LinkStats:
    """Fold one unicast outcome into the EWMA ETX estimate.

    The sample is the number of attempts a success took, or a fixed
    penalty when every attempt failed.  A fresh link adopts its first
    successful sample directly; a failure on a fresh link folds the
    penalty into the initial guess instead, so one unlucky burst cannot
    permanently blacklist a never-used link.
    """
    if tx_attempts < 1:
        raise ValueError("tx_attempts must be >= 1")
    sample = float(tx_attempts) if acked else ETX_FAILURE_PENALTY
    if link.etx_ewma is None:
        new = sample if acked else ETX_ALPHA * sample + (1.0 - ETX_ALPHA) * ETX_INITIAL_GUESS
    else:
        new = ETX_ALPHA * sample + (1.0 - ETX_ALPHA) * link.etx_ewma
    return replace(link, etx_ewma=new)


@dataclass(slots=True)
class EnergyState:
    p_max_mw: float = 1.0  # targeted maximum power
    p_now_mw: float = 0.0  # measured average power so far


def energy_metric(e: EnergyState) -> float:
    """Residual-energy headroom p_max / p_now (larger is better), capped."""
    if e.p_max_mw <= 0.0:
        raise ValueError("p_max must be positive")
    if e.p_now_mw <= 0.0:
        return ENERGY_METRIC_CAP
    return min(e.p_max_mw / e.p_now_mw, ENERGY_METRIC_CAP)


@dataclass(slots=True)
class ParentCandidate:
    neighbor: int
    advertised_rank: int
    advertised_path_cost: Optional[float]
    link: LinkStats


class ObjectiveFunction:
    """Cost/rank policy; stateless, all inputs passed per call."""

    name = "base"
    uses_link_usability = False

    def __init__(self, hysteresis_rank: float = DEFAULT_HYSTERESIS_RANK):
        self.hysteresis_rank = hysteresis_rank

    @property
    def hysteresis_cost(self) -> float:
        return self.hysteresis_rank / RANK_UNITS_PER_COST

    def path_cost(self, cand: ParentCandidate, self_energy: Optional[EnergyState]) -> float:
        raise NotImplementedError

    def rank_through(self, cand: ParentCandidate, self_energy: Optional[EnergyState]) -> int:
        raise NotImplementedError

    def advertised_cost_through(
        self, cand: ParentCandidate, self_energy: Optional[EnergyState]
    ) -> Optional[float]:
        """Path cost this node would put in its own DIO metric container."""
        return None


class OF0(ObjectiveFunction):
    name = "of0"

    def __init__(self, params: Of0Params | None = None, hysteresis_rank: float = 0.0):
        # OF0 selects a strict argmin; hysteresis does not apply.
        super().__init__(hysteresis_rank=0.0)
        self.params = params or Of0Params()
        self.params.validate()

    def path_cost(self, cand, self_energy=None) -> float:
        return float(cand.advertised_rank)

    def rank_through(self, cand, self_energy=None) -> int:
        return of0_rank(cand.advertised_rank, self.params)


def _mrhof_rank(parent_rank: int, cost_increment: float) -> int:
    step = max(MIN_HOP_RANK_INCREASE, int(round(cost_increment * RANK_UNITS_PER_COST)))
    rank = parent_rank + step
    return rank if rank < INFINITE_RANK else INFINITE_RANK


class MrhofEtx(ObjectiveFunction):
    name = "mrhof-etx"
    uses_link_usability = True

    def path_cost(self, cand, self_energy=None) -> float:
        parent_cost = cand.advertised_path_cost or 0.0
        return parent_cost + cand.link.etx_estimate()

    def rank_through(self, cand, self_energy=None) -> int:
        return _mrhof_rank(cand.advertised_rank, cand.link.etx_estimate())

    def advertised_cost_through(self, cand, self_energy=None) -> float:
        return self.path_cost(cand, self_energy)


class MrhofEnergy(ObjectiveFunction):
    name = "mrhof-energy"
    uses_link_usability = True

    def _node_cost(self, self_energy: Optional[EnergyState]) -> float:
        if self_energy is None:
            return 0.0
        return 1.0 / energy_metric(self_energy)

    def path_cost(self, cand, self_energy) -> float:
        parent_cost = cand.advertised_path_cost or 0.0
        return parent_cost + self._node_cost(self_energy)

    def rank_through(self, cand, self_energy) -> int:
        # selection runs on the power cost; rank only encodes depth, since
        # normalized power per hop is far coarser than the rank space
        rank = cand.advertised_rank + MIN_HOP_RANK_INCREASE
        return rank if rank < INFINITE_RANK else INFINITE_RANK

    def advertised_cost_through(self, cand, self_energy) -> float:
        return self.path_cost(cand, self_energy)


def path_cost(
    of: ObjectiveFunction, cand: ParentCandidate, self_energy: Optional[EnergyState] = None
) -> float:
    return of.path_cost(cand, self_energy)


def select_parent(
    of: ObjectiveFunction,
    candidates: Sequence[ParentCandidate],
    current: Optional[ParentCandidate] = None,
    hysteresis: Optional[float] = None,
    self_energy: Optional[EnergyState] = None,
) -> Optional[ParentCandidate]:
    """Pick the preferred parent.

    OF0 takes the strict cost argmin (ties to the lowest node id).  MRHOF
    keeps the current parent unless the best candidate undercuts it by
    more than the hysteresis threshold (in cost units).
    """
    if not candidates:
        return None
    best = min(candidates, key=lambda c: (of.path_cost(c, self_energy), c.neighbor))
    if isinstance(of, OF0):
        return best
    h = of.hysteresis_cost if hysteresis is None else hysteresis
    if current is not None:
        cur = next((c for c in candidates if c.neighbor == current.neighbor), None)
        if cur is not None:
            if of.path_cost(best, self_energy) < of.path_cost(cur, self_energy) - h:
                return best
            return cur
    return best


def make_objective(
    name: str,
    of0_params: Of0Params | None = None,
    hysteresis_rank: float = DEFAULT_HYSTERESIS_RANK,
) -> ObjectiveFunction:
    if name == "of0":
        return OF0(params=of0_params)
    if name == "mrhof-etx":
        return MrhofEtx(hysteresis_rank=hysteresis_rank)
    if name == "mrhof-energy":
        return MrhofEnergy(hysteresis_rank=hysteresis_rank)
    raise ValueError(f"unknown objective function {name!r}")
