"""rplmob: a deterministic simulator of RPL networks under insider attacks.

Builds unit-disk-graph sensor networks running RPL with OF0, MRHOF-ETX or
MRHOF-ENERGY, injects version-number / DIS-flooding / worst-parent
attackers (static or random-walk mobile), and reports packet delivery
ratio, power consumption, control overhead and latency.
"""

from .attacks import (
    ATTACK_KINDS,
    AttackerAssignment,
    AttackKind,
    dis_flood_tick,
    version_attack_tick,
    worst_parent_select,
)
from .engine import Event, RngStreams, SchedulingError, Simulator
from .metrics import (
    MetricsRecord,
    PacketLedger,
    PowerParams,
    RadioTimeLedger,
    average_power,
    latency,
    overhead,
    pdr,
)
from .mobility import MobilityState, TraceWaypoint, parse_trace_file, position_at, random_walk_step
from .objectives import (
    INFINITE_RANK,
    EnergyState,
    LinkStats,
    Of0Params,
    ParentCandidate,
    energy_metric,
    etx,
    make_objective,
    of0_rank,
    of0_rank_increase,
    path_cost,
    select_parent,
    update_etx_from_transmission,
)
from .radio import Medium, MediumParams, airtime_us, reachable, reception_probability
from .rpl import Node, StackParams, TrickleParams, TrickleTimer, serial_increment, serial_newer
from .scenario import (
    ConfigError,
    RunResult,
    ScenarioConfig,
    delta_report,
    generate_topology,
    matrix_cells,
    parse_csv,
    results_csv,
    run_matrix,
    run_scenario,
    select_attackers,
    write_csv,
)

__version__ = "0.1.0"
