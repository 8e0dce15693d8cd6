"""Kinematic bicycle dynamics."""

import math

from src.sim.data_models import RIGHT_STEER_SIGN, ActionTriple, SimConfig, VehicleState
from src.sim.exceptions import InvalidActionError
from src.sim.geometry import normalize_angle, rectangle


def wheel_angle(steer: float, cfg: SimConfig) -> float:
    """Front-wheel angle, counter-clockwise positive."""
    return -RIGHT_STEER_SIGN * steer * cfg.max_steer_rad


def turning_radius(steer: float, cfg: SimConfig) -> float:
    delta = wheel_angle(steer, cfg)
    return math.inf if delta == 0 else cfg.wheelbase / abs(math.tan(delta))


def step_dynamics(state: VehicleState, action: ActionTriple, cfg: SimConfig) -> VehicleState:
    """Advance one fixed step: position moves with the current speed, then
    heading and speed update."""
    if not all(math.isfinite(v) for v in (action.steer, action.throttle, action.brake)):
        raise InvalidActionError(f"non-finite action {action}")
    dt = cfg.dt
    v = state.speed
    x = state.x + v * math.cos(state.heading) * dt
    y = state.y + v * math.sin(state.heading) * dt
    heading = normalize_angle(state.heading + (v / cfg.wheelbase) * math.tan(wheel_angle(action.steer, cfg)) * dt)
    accel = cfg.max_accel * action.throttle - cfg.max_brake * action.brake - cfg.drag * v
    speed = min(cfg.max_speed, max(0.0, v + accel * dt))
    return state.model_copy(update={"x": x, "y": y, "heading": heading, "speed": speed})


def footprint(state: VehicleState):
    return rectangle(state.x, state.y, state.heading, state.half_length, state.half_width)
