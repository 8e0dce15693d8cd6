"""Scripted expert: pure-pursuit steering with proportional speed control."""

import math
from typing import Optional

import numpy as np

from src.expert.data_models import ExpertConfig
from src.expert.exceptions import ExpertAbortError
from src.sim import geometry
from src.sim.data_models import RIGHT_STEER_SIGN, ActionTriple, Command, SimConfig, VehicleState
from src.sim.obstacles import ObstacleField
from src.sim.planner import Route

DEFAULT_EXPERT = ExpertConfig()
DEFAULT_SIM = SimConfig()


def nearest_waypoint(route: Route, position: np.ndarray, hint: Optional[int] = None, window: int = 8) -> int:
    """Closest waypoint index; with ``hint`` only a short window ahead is searched."""
    if hint is None:
        lo, hi = 0, len(route.waypoints)
    else:
        lo, hi = hint, min(len(route.waypoints), hint + window + 1)
    distances = np.linalg.norm(route.waypoints[lo:hi] - position, axis=1)
    return lo + int(np.argmin(distances))


def route_offset(route: Route, position: np.ndarray) -> float:
    """Distance from ``position`` to the route polyline."""
    return float(geometry.segment_distances(position[None, :], route.waypoints[:-1], route.waypoints[1:])[0])


def pure_pursuit_steer(state: VehicleState, target: np.ndarray, sim: SimConfig) -> float:
    """Pure-pursuit steer toward ``target`` along a circular arc."""
    local = geometry.to_local(target, state.position, state.heading)[0]
    forward, left = local[0], -local[1]
    lookahead = max(math.hypot(forward, left), 1e-6)
    alpha = math.atan2(left, forward)
    delta = math.atan2(2.0 * sim.wheelbase * math.sin(alpha), lookahead)
    steer = -RIGHT_STEER_SIGN * delta / sim.max_steer_rad
    return min(1.0, max(-1.0, steer))


def blocked(state: VehicleState, obstacles: Optional[ObstacleField], cfg: ExpertConfig) -> bool:
    """True when a dynamic agent sits in the corridor within ``block_distance`` ahead."""
    if obstacles is None or not len(obstacles):
        return False
    for center, radius in obstacles.blockers():
        forward, right = geometry.to_local(center, state.position, state.heading)[0]
        gap = forward - state.half_length - radius
        if forward > 0.0 and gap <= cfg.block_distance and abs(right) <= state.half_width + radius + cfg.block_margin:
            return True
    return False


def speed_control(speed: float, target_kmh: float, sim: SimConfig, gain: float) -> tuple[float, float]:
    """(throttle, brake) for a proportional controller with drag feed-forward."""
    wanted = gain * (target_kmh / 3.6 - speed) + sim.drag * speed
    if wanted >= 0.0:
        return min(1.0, wanted / sim.max_accel), 0.0
    return 0.0, min(1.0, -wanted / sim.max_brake)


def expert_action(
    state: VehicleState,
    route: Route,
    obstacles: Optional[ObstacleField] = None,
    cfg: ExpertConfig = DEFAULT_EXPERT,
    sim: SimConfig = DEFAULT_SIM,
    progress: Optional[int] = None,
) -> ActionTriple:
    """Expert action for the current state.

    Raises:
        ExpertAbortError: if the vehicle is more than ``abort_distance`` off the route
    """
    offset = route_offset(route, state.position)
    if offset > cfg.abort_distance:
        raise ExpertAbortError(f"vehicle is {offset:.1f} m off the route")

    index = nearest_waypoint(route, state.position, hint=progress)
    lookahead = max(cfg.lookahead_min, cfg.lookahead_gain * state.speed)
    target, _ = geometry.interpolate_polyline(route.waypoints, float(route.stations[index]) + lookahead)
    steer = pure_pursuit_steer(state, target, sim)

    if blocked(state, obstacles, cfg):
        return ActionTriple(steer=steer, throttle=0.0, brake=1.0)
    command: Command = route.commands[index]
    throttle, brake = speed_control(state.speed, cfg.target_speed(command), sim, cfg.speed_gain)
    return ActionTriple(steer=steer, throttle=throttle, brake=brake)
