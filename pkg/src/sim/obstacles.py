"""Scripted dynamic obstacles: lane-following vehicles and sidewalk pedestrians."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.sim import geometry
from src.sim.data_models import ObstacleScript, VehicleState
from src.sim.planner import connector
from src.sim.town_map import TownMap
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

PEDESTRIAN_RADIUS = 0.4
# A scripted vehicle holds position while the ego is inside this box ahead of it.
VEHICLE_YIELD_DISTANCE = 8.0
VEHICLE_YIELD_HALF_WIDTH = 2.5
PEDESTRIAN_YIELD_DISTANCE = 1.5
# Keep spawns clear of the ego start.
SPAWN_CLEARANCE = 15.0
VEHICLE_PATH_LENGTH = 400.0


@dataclass
class PathAgent:
    """An agent moving at constant speed along a fixed polyline."""

    path: np.ndarray
    speed: float
    s: float = 0.0
    halted: bool = False
    stations: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.stations = geometry.polyline_stations(self.path)

    @property
    def finished(self) -> bool:
        return self.s >= self.stations[-1]

    def pose(self) -> tuple[np.ndarray, float]:
        return geometry.interpolate_polyline(self.path, self.s)

    def advance(self, dt: float) -> None:
        if not self.halted:
            self.s = min(float(self.stations[-1]), self.s + self.speed * dt)


@dataclass
class ScriptedVehicle(PathAgent):
    half_length: float = 2.0
    half_width: float = 0.9

    def polygon(self) -> np.ndarray:
        center, heading = self.pose()
        return geometry.rectangle(center[0], center[1], heading, self.half_length, self.half_width)


@dataclass
class Pedestrian(PathAgent):
    radius: float = PEDESTRIAN_RADIUS
    crosses: bool = False


class ObstacleField:
    """All dynamic agents of one episode."""

    def __init__(self, vehicles: Optional[list[ScriptedVehicle]] = None, pedestrians: Optional[list[Pedestrian]] = None):
        self.vehicles = vehicles or []
        self.pedestrians = pedestrians or []

    def __len__(self) -> int:
        return len(self.active_vehicles) + len(self.active_pedestrians)

    # Agents leave the world once they reach the end of their path.
    @property
    def active_vehicles(self) -> list[ScriptedVehicle]:
        return [v for v in self.vehicles if not v.finished]

    @property
    def active_pedestrians(self) -> list[Pedestrian]:
        return [p for p in self.pedestrians if not p.finished]

    @classmethod
    def empty(cls) -> "ObstacleField":
        return cls()

    @classmethod
    def spawn(
        cls,
        town: TownMap,
        script: ObstacleScript,
        route_lanes: list[int],
        ego_position: np.ndarray,
        rng: np.random.Generator,
    ) -> "ObstacleField":
        """Place agents deterministically for ``rng``.

        Half of the vehicles start on lanes of the ego route, the rest
        anywhere in town. Pedestrians walk the sidewalks of route lanes.
        """
        vehicles: list[ScriptedVehicle] = []
        lane_ids = sorted(town.lanes)
        attempts = 0
        while len(vehicles) < script.vehicles and attempts < 50 * max(1, script.vehicles):
            attempts += 1
            pool = route_lanes if len(vehicles) % 2 == 0 else lane_ids
            lane = town.lane(int(pool[rng.integers(len(pool))]))
            s = float(rng.uniform(0.0, lane.length))
            point, _ = lane.pose_at(s)
            if np.linalg.norm(point - ego_position) < SPAWN_CLEARANCE:
                continue
            path = _lane_chain(town, lane.id, s, rng, VEHICLE_PATH_LENGTH)
            vehicles.append(ScriptedVehicle(path=path, speed=script.vehicle_speed))

        pedestrians: list[Pedestrian] = []
        attempts = 0
        while len(pedestrians) < script.pedestrians and attempts < 50 * max(1, script.pedestrians):
            attempts += 1
            lane = town.lane(int(route_lanes[rng.integers(len(route_lanes))]))
            if lane.sidewalk_width <= 0:
                continue
            crosses = bool(rng.random() < script.crossing_probability)
            path = _pedestrian_path(town, lane.id, rng, crosses)
            if np.linalg.norm(path[0] - ego_position) < SPAWN_CLEARANCE:
                continue
            pedestrians.append(Pedestrian(path=path, speed=script.pedestrian_speed, crosses=crosses))

        if len(vehicles) < script.vehicles or len(pedestrians) < script.pedestrians:
            logger.warning(
                f"Spawned {len(vehicles)}/{script.vehicles} vehicles and "
                f"{len(pedestrians)}/{script.pedestrians} pedestrians on {town.name}"
            )
        return cls(vehicles, pedestrians)

    def advance(self, dt: float, ego: VehicleState) -> None:
        """Move every agent one step; agents yield to a nearby ego."""
        ego_position = ego.position
        for vehicle in self.vehicles:
            center, heading = vehicle.pose()
            local = geometry.to_local(ego_position, center, heading)[0]
            ahead = 0.0 < local[0] <= VEHICLE_YIELD_DISTANCE + vehicle.half_length
            vehicle.halted = bool(ahead and abs(local[1]) < VEHICLE_YIELD_HALF_WIDTH)
            vehicle.advance(dt)
        for pedestrian in self.pedestrians:
            center, _ = pedestrian.pose()
            gap = float(np.linalg.norm(center - ego_position)) - max(ego.half_length, ego.half_width)
            pedestrian.halted = gap < PEDESTRIAN_YIELD_DISTANCE
            pedestrian.advance(dt)

    def vehicle_polygons(self) -> list[np.ndarray]:
        return [vehicle.polygon() for vehicle in self.active_vehicles]

    def pedestrian_centers(self) -> np.ndarray:
        active = self.active_pedestrians
        if not active:
            return np.zeros((0, 2))
        return np.array([p.pose()[0] for p in active])

    def blockers(self) -> list[tuple[np.ndarray, float]]:
        """(center, radius) of every agent still in the world, for blocking checks."""
        found = [(vehicle.pose()[0], vehicle.half_width) for vehicle in self.active_vehicles]
        found.extend((p.pose()[0], p.radius) for p in self.active_pedestrians)
        return found

    def snapshot(self) -> dict:
        return {
            "vehicles": [[round(float(v), 4) for v in vehicle.pose()[0]] for vehicle in self.vehicles],
            "pedestrians": [[round(float(v), 4) for v in p.pose()[0]] for p in self.pedestrians],
        }


def _lane_chain(town: TownMap, lane_id: int, s: float, rng: np.random.Generator, length: float) -> np.ndarray:
    """Random walk through the lane graph starting ``s`` meters along a lane."""
    lane = town.lane(lane_id)
    pieces = [geometry.slice_polyline(lane.centerline, s, lane.length)]
    total = lane.length - s
    while total < length:
        successors = town.successors(lane.id)
        if not successors:
            break
        nxt = town.lane(int(successors[rng.integers(len(successors))]))
        pieces.append(connector(lane, nxt))
        pieces.append(nxt.centerline)
        total += geometry.polyline_length(pieces[-2]) + nxt.length
        lane = nxt
    return _dedupe(np.vstack(pieces))


def _pedestrian_path(town: TownMap, lane_id: int, rng: np.random.Generator, crosses: bool) -> np.ndarray:
    """Walk along the right-hand sidewalk; crossing walkers cut across both lanes."""
    lane = town.lane(lane_id)
    offset = 0.5 * lane.width + 0.5 * lane.sidewalk_width
    sidewalk = geometry.offset_polyline(lane.centerline, offset)
    forward = bool(rng.random() < 0.5)
    if not forward:
        sidewalk = sidewalk[::-1].copy()
    total = geometry.polyline_length(sidewalk)
    s0 = float(rng.uniform(0.0, 0.5 * total))
    if not crosses:
        return _dedupe(geometry.slice_polyline(sidewalk, s0, total))

    s_cross = min(total, s0 + float(rng.uniform(5.0, 30.0)))
    walk = geometry.slice_polyline(sidewalk, s0, s_cross)
    point, heading = geometry.interpolate_polyline(sidewalk, s_cross)
    # Cross leftwards relative to the lane: over both lanes to the far sidewalk.
    lane_heading = heading if forward else heading + np.pi
    left = -geometry.right_normal(np.array([np.cos(lane_heading), np.sin(lane_heading)]))
    far = point + left * (2.0 * offset + (lane.width if lane.opposite is not None else 0.0))
    tail = far + np.array([np.cos(heading), np.sin(heading)]) * 10.0
    return _dedupe(np.vstack([walk, far, tail]))


def _dedupe(path: np.ndarray) -> np.ndarray:
    keep = np.concatenate([[True], np.linalg.norm(np.diff(path, axis=0), axis=1) > 1e-9])
    path = path[keep]
    if len(path) < 2:
        path = np.vstack([path, path[-1:] + 1e-6])
    return path
