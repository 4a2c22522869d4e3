"""Random-walk movement and movement-trace playback.

The walk holds a constant speed, redraws its heading every direction
epoch, and reflects off the deployment-area boundary.  Traces use the
classic one-node-per-line layout of whitespace-separated ``t x y``
triples and are linearly interpolated (clamped outside their span).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(slots=True)
class MobilityState:
    node: int
    x: float
    y: float
    heading: float = 0.0
    speed_mps: float = 1.389  # 5 km/h
    step_period_s: float = 1.0
    area_side_m: float = 200.0
    direction_epoch_s: float = 10.0
    epoch_elapsed_s: float = field(default=0.0)
    distance_m: float = field(default=0.0)


def random_walk_step(state: MobilityState, dt_s: float, rng: np.random.Generator) -> MobilityState:
    """Advance one step; heading redraws each epoch, walls reflect."""
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    if state.epoch_elapsed_s >= state.direction_epoch_s:
        state.heading = float(rng.uniform(0.0, TWO_PI))
        state.epoch_elapsed_s = 0.0
    cx = math.cos(state.heading)
    cy = math.sin(state.heading)
    nx = state.x + cx * state.speed_mps * dt_s
    ny = state.y + cy * state.speed_mps * dt_s
    side = state.area_side_m
    # reflect off the walls (steps are far smaller than the area, one
    # bounce per axis suffices)
    if nx < 0.0:
        nx, cx = -nx, -cx
    elif nx > side:
        nx, cx = 2.0 * side - nx, -cx
    if ny < 0.0:
        ny, cy = -ny, -cy
    elif ny > side:
        ny, cy = 2.0 * side - ny, -cy
    state.x, state.y = nx, ny
    state.heading = math.atan2(cy, cx) % TWO_PI
    state.epoch_elapsed_s += dt_s
    state.distance_m += state.speed_mps * dt_s
    return state


@dataclass(slots=True)
class TraceWaypoint:
    node: int
    t_s: float
    x: float
    y: float


def position_at(trace: list[TraceWaypoint], t_s: float) -> tuple[float, float]:
    """Linear interpolation along one node's waypoints, clamped at the ends."""
    if not trace:
        raise ValueError("empty trace")
    times = [w.t_s for w in trace]
    if t_s <= times[0]:
        return trace[0].x, trace[0].y
    if t_s >= times[-1]:
        return trace[-1].x, trace[-1].y
    i = bisect_right(times, t_s)
    a, b = trace[i - 1], trace[i]
    frac = (t_s - a.t_s) / (b.t_s - a.t_s)
    return a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)


def parse_trace_file(path) -> dict[int, list[TraceWaypoint]]:
    """Read a movement trace: line i holds node i's ``t x y`` triples."""
    traces: dict[int, list[TraceWaypoint]] = {}
    with open(path) as fh:
        for node, line in enumerate(fh):
            fields = line.split()
            if not fields:
                continue
            if len(fields) % 3 != 0:
                raise ValueError(f"trace line {node}: expected repeating 't x y' triples")
            points = [
                TraceWaypoint(node, float(fields[i]), float(fields[i + 1]), float(fields[i + 2]))
                for i in range(0, len(fields), 3)
            ]
            for a, b in zip(points, points[1:]):
                if b.t_s <= a.t_s:
                    raise ValueError(f"trace line {node}: waypoint times must strictly increase")
            traces[node] = points
    return traces


def write_trace_file(path, traces: dict[int, list[TraceWaypoint]]) -> None:
    """Inverse of :func:`parse_trace_file`; nodes without a trace get blank lines."""
    top = max(traces) if traces else -1
    with open(path, "w") as fh:
        for node in range(top + 1):
            parts = []
            for w in traces.get(node, []):
                parts.extend((repr(w.t_s), repr(w.x), repr(w.y)))
            fh.write(" ".join(parts) + "\n")
