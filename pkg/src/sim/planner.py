"""Topological route planner and command-schedule generation."""

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from src.sim import geometry
from src.sim.data_models import Command, LanePosition, SimConfig
from src.sim.exceptions import InvalidEpisodeSpecError, UnreachableGoalError
from src.sim.town_map import Lane, TownMap

# Turns sharper than this (degrees) are TurnLeft/TurnRight decisions.
STRAIGHT_TOLERANCE_DEG = 30.0


@dataclass
class Crossing:
    """One traversed intersection along a route."""

    node: int
    from_lane: int
    to_lane: int
    command: Command
    start_station: float  # route distance where the connector begins
    end_station: float


@dataclass
class Route:
    """Waypoints along lane centerlines with a per-waypoint command."""

    waypoints: np.ndarray  # (n, 2)
    stations: np.ndarray  # (n,) cumulative distance
    commands: list[Command]
    lanes: list[int]
    optimal_length: float
    crossings: list[Crossing] = field(default_factory=list)

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    @property
    def turn_count(self) -> int:
        return sum(1 for c in self.crossings if c.command.is_turn)

    @property
    def intersections_crossed(self) -> int:
        return len(self.crossings)


def classify_turn(from_heading: float, to_heading: float) -> Command:
    """Straight / TurnLeft / TurnRight from the heading change across a node."""
    change = geometry.normalize_angle(to_heading - from_heading)
    if abs(change) < math.radians(STRAIGHT_TOLERANCE_DEG):
        return Command.STRAIGHT
    return Command.TURN_LEFT if change > 0 else Command.TURN_RIGHT


def connector(incoming: Lane, outgoing: Lane) -> np.ndarray:
    """Curve through the intersection from the end of one lane to the start of the next."""
    p0 = incoming.centerline[-1]
    p2 = outgoing.centerline[0]
    d_in = np.array([math.cos(incoming.end_heading), math.sin(incoming.end_heading)])
    d_out = np.array([math.cos(outgoing.start_heading), math.sin(outgoing.start_heading)])
    control = geometry.line_intersection(p0, d_in, p2, d_out)
    if control is None:
        return np.array([p0, p2])
    return geometry.quadratic_bezier(p0, control, p2)


def connector_length(town: TownMap, incoming: int, outgoing: int) -> float:
    return geometry.polyline_length(connector(town.lane(incoming), town.lane(outgoing)))


def _lane_sequence(town: TownMap, start: LanePosition, goal: LanePosition) -> list[int]:
    """Dijkstra over lanes; cost is centerline length plus connector length."""
    start_lane = town.lane(start.lane)
    goal_lane = town.lane(goal.lane)
    for pos, lane in ((start, start_lane), (goal, goal_lane)):
        if pos.s > lane.length + 1e-9:
            raise InvalidEpisodeSpecError(f"s={pos.s:.2f} beyond lane {lane.id} length {lane.length:.2f}")
    if start.lane == goal.lane and goal.s > start.s:
        return [start.lane]

    # dist[l] = route length from start to the beginning of lane l
    dist: dict[int, float] = {}
    parent: dict[int, int] = {}
    heap: list[tuple[float, int, int]] = []
    remaining = start_lane.length - start.s
    for nxt in town.successors(start.lane):
        heapq.heappush(heap, (remaining + connector_length(town, start.lane, nxt), nxt, -1))
    while heap:
        cost, lane_id, prev = heapq.heappop(heap)
        if lane_id in dist:
            continue
        dist[lane_id] = cost
        parent[lane_id] = prev
        if lane_id == goal.lane:
            break
        lane_len = town.lane(lane_id).length
        for nxt in town.successors(lane_id):
            if nxt not in dist:
                heapq.heappush(heap, (cost + lane_len + connector_length(town, lane_id, nxt), nxt, lane_id))
    if goal.lane not in dist:
        raise UnreachableGoalError(f"{town.name}: lane {goal.lane} unreachable from lane {start.lane}")

    sequence = [goal.lane]
    while parent[sequence[-1]] != -1:
        sequence.append(parent[sequence[-1]])
    sequence.append(start.lane)
    sequence.reverse()
    return sequence


def plan_route(town: TownMap, start: LanePosition, goal: LanePosition, cfg: SimConfig) -> Route:
    """Shortest route by centerline length with the command schedule attached."""
    sequence = _lane_sequence(town, start, goal)

    pieces: list[np.ndarray] = []
    crossings: list[Crossing] = []
    travelled = 0.0
    for index, lane_id in enumerate(sequence):
        lane = town.lane(lane_id)
        s0 = start.s if index == 0 else 0.0
        s1 = goal.s if index == len(sequence) - 1 else lane.length
        piece = geometry.slice_polyline(lane.centerline, s0, s1)
        pieces.append(piece)
        travelled += s1 - s0
        if index + 1 < len(sequence):
            nxt = town.lane(sequence[index + 1])
            curve = connector(lane, nxt)
            curve_len = geometry.polyline_length(curve)
            crossings.append(
                Crossing(
                    node=lane.end_node,
                    from_lane=lane.id,
                    to_lane=nxt.id,
                    command=classify_turn(lane.end_heading, nxt.start_heading),
                    start_station=travelled,
                    end_station=travelled + curve_len,
                )
            )
            pieces.append(curve)
            travelled += curve_len

    path = np.vstack(pieces)
    keep = np.concatenate([[True], np.linalg.norm(np.diff(path, axis=0), axis=1) > 1e-9])
    path = path[keep]
    waypoints = geometry.resample_polyline(path, cfg.waypoint_spacing)
    stations = geometry.polyline_stations(waypoints)
    # Resampling shortens curved pieces slightly; keep crossing stations on the resampled scale.
    scale = stations[-1] / travelled if travelled > 0 else 1.0
    for crossing in crossings:
        crossing.start_station *= scale
        crossing.end_station *= scale

    commands = [_command_at(st, crossings, cfg.approach_window) for st in stations]
    return Route(
        waypoints=waypoints,
        stations=stations,
        commands=commands,
        lanes=sequence,
        optimal_length=travelled,
        crossings=crossings,
    )


def _command_at(station: float, crossings: list[Crossing], window: float) -> Command:
    for crossing in crossings:
        if crossing.end_station < station:
            continue
        if crossing.start_station - window <= station:
            return crossing.command
        break
    return Command.FOLLOW


def route_length(town: TownMap, start: LanePosition, goal: LanePosition) -> float:
    """Exact shortest-route length without resampling."""
    sequence = _lane_sequence(town, start, goal)
    if len(sequence) == 1:
        return goal.s - start.s
    total = town.lane(sequence[0]).length - start.s + goal.s
    for a, b in zip(sequence, sequence[1:]):
        total += connector_length(town, a, b)
    for lane_id in sequence[1:-1]:
        total += town.lane(lane_id).length
    return total
