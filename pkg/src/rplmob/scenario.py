"""Experiment configuration, topology generation, run execution and reporting.

A :class:`ScenarioConfig` fully determines a run: replaying the same
config (seed included) reproduces the event trace and the result row
byte for byte.  ``run_matrix`` executes the full experiment grid
(3 objective functions x 3 attacks x 3 attacker densities x static/mobile,
plus one attack-free baseline per OF) over a list of seeds, and
``delta_report`` condenses paired static/mobile arms into a
degradation table.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field, replace
from typing import Optional

from .attacks import ATTACK_KINDS, default_attack, install_attack
from .engine import (
    APP_SEND,
    MOBILITY_TICK,
    SIM_END,
    TIMER_EXPIRY,
    US_PER_S,
    RngStreams,
    Simulator,
    format_trace_line,
)
from .messages import CONTROL_KINDS
from .metrics import (
    MetricsRecord,
    PacketLedger,
    PowerParams,
    RadioTimeLedger,
    build_metrics,
    check_conservation,
)
from .mobility import MobilityState, parse_trace_file, position_at, random_walk_step
from .objectives import Of0Params, make_objective
from .radio import Medium, MediumParams, distance
from .rpl import Node, StackParams, TrickleParams

OF_NAMES = ("of0", "mrhof-etx", "mrhof-energy")
ATTACK_CHOICES = ("none",) + ATTACK_KINDS
DENSITY_TO_COUNT = {0: 0, 2: 1, 6: 3, 10: 5}
MAX_ATTACKERS = max(DENSITY_TO_COUNT.values())

CSV_HEADER = "seed,of,attack,density_pct,mobile,pdr,pc_mw,ovr_total,ovr_per_node_s,lt_s,sent,delivered,dropped"


class ConfigError(Exception):
    """Invalid scenario configuration (CLI exit code 2)."""


@dataclass
class ScenarioConfig:
    seed: int = 1
    of: str = "of0"
    attack: str = "none"
    density_pct: int = 0
    attackers_mobile: bool = False
    node_count: int = 51
    area_m: float = 200.0
    duration_s: float = 3600.0
    traffic_period_s: float = 60.0
    p_max_mw: float = 1.0
    medium: MediumParams = field(default_factory=MediumParams)
    power: PowerParams = field(default_factory=PowerParams)
    trickle: TrickleParams = field(default_factory=TrickleParams)
    stack: StackParams = field(default_factory=StackParams)
    of0_params: Of0Params = field(default_factory=Of0Params)
    hysteresis_rank: float = 192.0
    walk_speed_mps: float = 1.389
    walk_step_period_s: float = 1.0
    walk_direction_epoch_s: float = 10.0
    positions: Optional[list[tuple[float, float]]] = None  # explicit topology
    mobility_trace: Optional[str] = None  # movement-trace file for mobile nodes
    topology_max_redraws: int = 10_000

    @property
    def attacker_count(self) -> int:
        if self.attack == "none":
            return 0
        return DENSITY_TO_COUNT[self.density_pct]

    def validate(self) -> None:
        if self.of not in OF_NAMES:
            raise ConfigError(f"unknown objective function {self.of!r}")
        if self.attack not in ATTACK_CHOICES:
            raise ConfigError(f"unknown attack {self.attack!r}")
        if self.density_pct not in DENSITY_TO_COUNT:
            raise ConfigError(f"density must be one of {sorted(DENSITY_TO_COUNT)} percent")
        if self.attack == "none" and self.density_pct != 0:
            raise ConfigError("a nonzero attacker density needs an attack kind")
        if self.attack != "none" and self.density_pct == 0:
            raise ConfigError("an attack kind needs a nonzero attacker density")
        if self.node_count < 2:
            raise ConfigError("need at least a root and one sensor")
        if self.attacker_count >= self.node_count:
            raise ConfigError("attacker count must stay below the node count")
        if self.duration_s <= 0 or self.traffic_period_s <= 0:
            raise ConfigError("durations must be positive")
        if self.positions is not None and len(self.positions) != self.node_count:
            raise ConfigError("explicit positions must cover every node")
        try:
            self.medium.validate()
            self.power.validate()
            self.of0_params.validate()
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def fingerprint(self) -> str:
        arm = "mobile" if self.attackers_mobile else "static"
        base = f"s{self.seed}-{self.of}-{self.attack}-d{self.density_pct}-{arm}"
        canon = repr(
            (
                self.seed, self.of, self.attack, self.density_pct, self.attackers_mobile,
                self.node_count, self.area_m, self.duration_s, self.traffic_period_s,
                self.p_max_mw, self.medium, self.power, self.trickle, self.stack,
                self.of0_params, self.hysteresis_rank, self.walk_speed_mps,
                self.walk_step_period_s, self.walk_direction_epoch_s, self.positions,
                self.mobility_trace,
            )
        )
        digest = hashlib.sha1(canon.encode("utf-8")).hexdigest()[:10]
        return f"{base}-{digest}"


def generate_topology(seed: int, cfg: ScenarioConfig) -> list[tuple[float, float]]:
    """Root at the area center, sensors uniform at random, redrawn until the
    transmission-range graph connects every node to the root."""
    rng = RngStreams(seed).stream("topology")
    side = cfg.area_m
    root = (side / 2.0, side / 2.0)
    n_sensors = cfg.node_count - 1
    for _ in range(cfg.topology_max_redraws):
        xs = rng.uniform(0.0, side, size=n_sensors)
        ys = rng.uniform(0.0, side, size=n_sensors)
        positions = [root] + [(float(x), float(y)) for x, y in zip(xs, ys)]
        if _connected_to_root(positions, cfg.medium.tx_range_m):
            return positions
    raise ConfigError(
        f"no connected topology found for seed {seed} in {cfg.topology_max_redraws} redraws"
    )


def _connected_to_root(positions, tx_range: float) -> bool:
    n = len(positions)
    seen = {0}
    frontier = [0]
    while frontier:
        cur = frontier.pop()
        for other in range(n):
            if other not in seen and distance(positions[cur], positions[other]) <= tx_range:
                seen.add(other)
                frontier.append(other)
    return len(seen) == n


def select_attackers(seed: int, cfg: ScenarioConfig) -> list[int]:
    """Seeded draw of attacker ids, shared by the static and mobile arms.

    The draw is for the maximum density and prefixes are used for lower
    densities, so adding attackers never swaps out existing ones.
    """
    count = cfg.attacker_count
    if count == 0:
        return []
    rng = RngStreams(seed).stream("attackers")
    pool = rng.permutation(range(1, cfg.node_count))[:MAX_ATTACKERS]
    return [int(n) for n in pool[:count]]


@dataclass
class RunResult:
    config: ScenarioConfig
    fingerprint: str
    metrics: MetricsRecord
    medium_tx_counts: dict
    collisions: int
    attacker_ids: list[int]
    dis_tx_by_attacker: dict
    version_history: dict
    worst_parent_log: dict
    final_ranks: dict
    dispatched_events: int

    def csv_row(self) -> str:
        m = self.metrics
        cfg = self.config
        fields = [
            str(cfg.seed),
            cfg.of,
            cfg.attack,
            str(cfg.density_pct),
            "true" if cfg.attackers_mobile else "false",
            "" if m.pdr is None else repr(m.pdr),
            repr(m.pc_mw),
            str(m.ovr_total),
            repr(m.ovr_per_node_s),
            "" if m.lt_s is None else repr(m.lt_s),
            str(m.sent),
            str(m.delivered),
            str(m.dropped),
        ]
        return ",".join(fields)


def run_scenario(cfg: ScenarioConfig, trace_path: Optional[str] = None) -> RunResult:
    """Execute one scenario end to end; conservation is audited before returning."""
    cfg.validate()
    duration_us = int(cfg.duration_s * US_PER_S)

    trace_fh = open(trace_path, "w") if trace_path else None
    writer = None
    if trace_fh is not None:
        writer = lambda ev: trace_fh.write(format_trace_line(ev) + "\n")
    try:
        sim = Simulator(cfg.seed, trace=writer)
        positions = cfg.positions or generate_topology(cfg.seed, cfg)
        medium = Medium(sim, cfg.medium, positions)
        node_ids = list(range(cfg.node_count))

        times = RadioTimeLedger(node_ids)
        packets = PacketLedger(node_ids)

        def on_transmit(node: int, kind: str, dur_us: int) -> None:
            times.add_tx(node, dur_us)
            if kind in packets.control_tx[node]:
                packets.count_control_tx(node, kind)

        medium.on_transmit = on_transmit

        attacker_ids = select_attackers(cfg.seed, cfg)
        nodes: list[Node] = []
        for nid in node_ids:
            of = make_objective(cfg.of, of0_params=replace(cfg.of0_params), hysteresis_rank=cfg.hysteresis_rank)
            node = Node(
                sim,
                medium,
                nid,
                is_root=(nid == 0),
                of=of,
                trickle_params=cfg.trickle,
                stack=cfg.stack,
                packet_ledger=packets,
                energy_probe=(lambda n=nid: times.node_power_mw(n, cfg.power, sim.now_us)),
                p_max_mw=cfg.p_max_mw,
                cpu_charge=times.add_cpu,
            )
            nodes.append(node)

        # boot with a small per-node jitter so timers do not phase-lock;
        # drawn from the traffic stream so both arms of a pair share it
        traffic_rng = sim.rng.stream("traffic")
        boot_us = [int(traffic_rng.integers(0, US_PER_S)) for _ in node_ids]
        for node, at in zip(nodes, boot_us):
            sim.schedule(at, node.boot, TIMER_EXPIRY, node.id, "boot")

        # application traffic: every sensor sends one packet per period
        next_pid = 0
        for node in nodes[1:]:
            offset = int(traffic_rng.integers(0, int(cfg.traffic_period_s * US_PER_S)))
            t = offset
            while t < duration_us:
                pid = next_pid
                next_pid += 1
                sim.schedule(
                    t,
                    (lambda n=node, p=pid: n.originate_data(p)),
                    APP_SEND,
                    node.id,
                    f"pkt {pid}",
                )
                t += int(cfg.traffic_period_s * US_PER_S)

        for aid in attacker_ids:
            install_attack(sim, nodes[aid], default_attack(cfg.attack), boot_us[aid], duration_us)

        _schedule_mobility(sim, cfg, medium, attacker_ids, duration_us)

        sim.schedule(duration_us, None, SIM_END, -1, "end of run")
        sim.run_until(duration_us)

        packets.close()
        times.finalize(duration_us)
        metrics = build_metrics(packets, times, cfg.power, cfg.duration_s, cfg.node_count)
        check_conservation(metrics, medium.control_transmissions())

        dis_by_attacker = {
            aid: sum(1 for _, s, k in medium.tx_log if s == aid and k == "dis")
            for aid in attacker_ids
        }
        return RunResult(
            config=cfg,
            fingerprint=cfg.fingerprint(),
            metrics=metrics,
            medium_tx_counts=dict(medium.tx_counts),
            collisions=medium.collisions,
            attacker_ids=attacker_ids,
            dis_tx_by_attacker=dis_by_attacker,
            version_history={aid: list(nodes[aid].version_history) for aid in attacker_ids},
            worst_parent_log={aid: list(nodes[aid].selection_log) for aid in attacker_ids},
            final_ranks={n.id: n.rank for n in nodes},
            dispatched_events=sim.dispatched,
        )
    finally:
        if trace_fh is not None:
            trace_fh.close()


def _schedule_mobility(sim, cfg: ScenarioConfig, medium: Medium, attacker_ids, duration_us) -> None:
    walkers: dict[int, MobilityState] = {}
    traces = None
    if cfg.mobility_trace:
        traces = parse_trace_file(cfg.mobility_trace)
        movers = sorted(nid for nid in traces if nid < cfg.node_count)
    elif cfg.attackers_mobile and attacker_ids:
        movers = sorted(attacker_ids)
        for nid in movers:
            x, y = medium.positions[nid]
            rng = sim.rng.stream(f"mobility-{nid}")
            walkers[nid] = MobilityState(
                nid,
                x,
                y,
                heading=float(rng.uniform(0.0, 6.283185307179586)),
                speed_mps=cfg.walk_speed_mps,
                step_period_s=cfg.walk_step_period_s,
                area_side_m=cfg.area_m,
                direction_epoch_s=cfg.walk_direction_epoch_s,
            )
    else:
        return
    if not movers:
        return
    medium.mobile.update(movers)
    step_us = int(cfg.walk_step_period_s * US_PER_S)

    def tick() -> None:
        t_s = sim.now_us / US_PER_S
        for nid in movers:
            if traces is not None:
                x, y = position_at(traces[nid], t_s)
            else:
                st = walkers[nid]
                random_walk_step(st, cfg.walk_step_period_s, sim.rng.stream(f"mobility-{nid}"))
                x, y = st.x, st.y
            medium.move(nid, x, y)
        nxt = sim.now_us + step_us
        if nxt <= duration_us:
            sim.schedule(nxt, tick, MOBILITY_TICK, -1, f"{len(movers)} movers")

    sim.schedule(step_us, tick, MOBILITY_TICK, -1, f"{len(movers)} movers")


# -- experiment matrix ---------------------------------------------------------


def matrix_cells(ofs=OF_NAMES, attacks=ATTACK_KINDS, densities=(2, 6, 10)):
    """Every (of, attack, density, mobile) cell plus one baseline per OF."""
    cells = []
    for of in ofs:
        cells.append((of, "none", 0, False))
        for attack in attacks:
            for density in densities:
                for mobile in (False, True):
                    cells.append((of, attack, density, mobile))
    return cells


def run_matrix(base: ScenarioConfig, seeds, cells=None, workers: int = 1) -> list[RunResult]:
    """Run the experiment grid; results come back sorted by fingerprint."""
    if not seeds:
        raise ConfigError("need at least one seed")
    cells = matrix_cells() if cells is None else cells
    configs = [
        replace(base, seed=seed, of=of, attack=attack, density_pct=density, attackers_mobile=mobile)
        for seed in seeds
        for (of, attack, density, mobile) in cells
    ]
    for cfg in configs:
        cfg.validate()
    if workers > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(workers) as pool:
            results = pool.map(run_scenario, configs)
    else:
        results = [run_scenario(cfg) for cfg in configs]
    return sorted(results, key=lambda r: r.fingerprint)


# -- CSV ------------------------------------------------------------------------


def write_csv(results, fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for res in results:
        fh.write(res.csv_row() + "\n")


def results_csv(results) -> str:
    buf = io.StringIO()
    write_csv(results, buf)
    return buf.getvalue()


@dataclass(slots=True)
class CsvRow:
    seed: int
    of: str
    attack: str
    density_pct: int
    mobile: bool
    pdr: Optional[float]
    pc_mw: float
    ovr_total: int
    ovr_per_node_s: float
    lt_s: Optional[float]
    sent: int
    delivered: int
    dropped: int


def parse_csv(fh) -> list[CsvRow]:
    reader = csv.reader(fh)
    header = next(reader)
    if ",".join(header) != CSV_HEADER:
        raise ConfigError("unexpected CSV header")
    rows = []
    for rec in reader:
        if not rec:
            continue
        rows.append(
            CsvRow(
                seed=int(rec[0]),
                of=rec[1],
                attack=rec[2],
                density_pct=int(rec[3]),
                mobile={"true": True, "false": False}[rec[4]],
                pdr=None if rec[5] == "" else float(rec[5]),
                pc_mw=float(rec[6]),
                ovr_total=int(rec[7]),
                ovr_per_node_s=float(rec[8]),
                lt_s=None if rec[9] == "" else float(rec[9]),
                sent=int(rec[10]),
                delivered=int(rec[11]),
                dropped=int(rec[12]),
            )
        )
    return rows


# -- mobile-vs-static degradation table -----------------------------------------


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def delta_report(results) -> dict:
    """Per (attack, of): how much worse the mobile arm is than the static arm.

    Positive always means "mobile is worse": the PDR delta is static
    minus mobile (percentage points), while latency, power and overhead
    deltas are mobile minus static.  Overhead is compared in
    packets/node/s since the original table's overhead unit is not
    reproducible.  Cells missing an arm come back as None.
    """
    table: dict[tuple[str, str], dict] = {}
    for attack in ATTACK_KINDS:
        for of in OF_NAMES:
            arms = {True: [], False: []}
            for res in results:
                cfg = res.config
                if cfg.attack == attack and cfg.of == of and cfg.density_pct > 0:
                    arms[cfg.attackers_mobile].append(res.metrics)
            cell: dict[str, Optional[float]] = dict.fromkeys(
                ("d_pdr_pct", "d_lt_s", "d_pc_mw", "d_ovr_per_node_s"), None
            )
            if arms[True] and arms[False]:
                s_pdr = _mean([m.pdr for m in arms[False]])
                m_pdr = _mean([m.pdr for m in arms[True]])
                s_lt = _mean([m.lt_s for m in arms[False]])
                m_lt = _mean([m.lt_s for m in arms[True]])
                if s_pdr is not None and m_pdr is not None:
                    cell["d_pdr_pct"] = (s_pdr - m_pdr) * 100.0
                if s_lt is not None and m_lt is not None:
                    cell["d_lt_s"] = m_lt - s_lt
                cell["d_pc_mw"] = _mean([m.pc_mw for m in arms[True]]) - _mean(
                    [m.pc_mw for m in arms[False]]
                )
                cell["d_ovr_per_node_s"] = _mean([m.ovr_per_node_s for m in arms[True]]) - _mean(
                    [m.ovr_per_node_s for m in arms[False]]
                )
            table[(attack, of)] = cell
    return table


def format_delta_table(table: dict) -> str:
    lines = [
        "attack        of            dPDR(pct)   dLT(s)     dPC(mW)    dOVR(pkt/node/s)",
    ]
    for (attack, of), cell in sorted(table.items()):
        def fmt(v):
            return "   absent" if v is None else f"{v:9.3f}"

        lines.append(
            f"{attack:<13} {of:<13} {fmt(cell['d_pdr_pct'])}  {fmt(cell['d_lt_s'])}  "
            f"{fmt(cell['d_pc_mw'])}  {fmt(cell['d_ovr_per_node_s'])}"
        )
    return "\n".join(lines)
