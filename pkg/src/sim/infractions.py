"""Footprint overlap fractions and collision classification."""

import math
from typing import Optional

import numpy as np

from src.sim import geometry
from src.sim.data_models import CollisionKind, Measurements, VehicleState
from src.sim.obstacles import ObstacleField
from src.sim.town_map import TownMap
from src.sim.vehicle import footprint


def _overlap_fraction(fp: np.ndarray, area: float, quads: np.ndarray, indices: np.ndarray) -> float:
    total = sum(geometry.intersection_area(fp, quads[i]) for i in indices)
    return min(1.0, max(0.0, total / area))


def sidewalk_overlap(town: TownMap, state: VehicleState) -> float:
    fp = footprint(state)
    reach = math.hypot(state.half_length, state.half_width)
    nearby = town.nearby(town.sidewalk_center, town.sidewalk_radius, state.position, reach)
    return _overlap_fraction(fp, 4.0 * state.half_length * state.half_width, town.sidewalk_quads, nearby)


def opposite_overlap(town: TownMap, state: VehicleState) -> float:
    """Fraction of the footprint on lanes running against the vehicle heading."""
    fp = footprint(state)
    reach = math.hypot(state.half_length, state.half_width)
    nearby = town.nearby(town.lane_quad_center, town.lane_quad_radius, state.position, reach)
    against = nearby[town.lane_quad_dir[nearby] @ state.forward < 0.0]
    return _overlap_fraction(fp, 4.0 * state.half_length * state.half_width, town.lane_quads, against)


def collision_kind(town: TownMap, state: VehicleState, obstacles: Optional[ObstacleField] = None) -> CollisionKind:
    """Dynamic agents are checked before static obstacles."""
    fp = footprint(state)
    if obstacles is not None:
        for polygon in obstacles.vehicle_polygons():
            if geometry.convex_polygons_intersect(fp, polygon):
                return CollisionKind.VEHICLE_OR_PEDESTRIAN
        for pedestrian in obstacles.active_pedestrians:
            center, _ = pedestrian.pose()
            if geometry.polygon_disc_intersect(fp, center, pedestrian.radius):
                return CollisionKind.VEHICLE_OR_PEDESTRIAN

    reach = math.hypot(state.half_length, state.half_width)
    for index in town.nearby(town.obstacle_center, town.obstacle_radius, state.position, reach):
        if geometry.convex_polygons_intersect(fp, town.static_obstacles[index]):
            return CollisionKind.OTHER
    return CollisionKind.NONE


def detect_infractions(town: TownMap, state: VehicleState, obstacles: Optional[ObstacleField] = None) -> Measurements:
    """Collision and overlap fields for one vehicle state.

    ``distance_to_goal`` is left at zero; the environment fills it in.
    """
    return Measurements(
        speed_kmh=3.6 * state.speed,
        collision_kind=collision_kind(town, state, obstacles),
        sidewalk_overlap=sidewalk_overlap(town, state),
        opposite_overlap=opposite_overlap(town, state),
    )
