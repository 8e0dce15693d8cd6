"""Episode state machine over a town map."""

import math
from typing import Callable, Optional

import numpy as np
from pydantic import ValidationError

from src.sim import geometry
from src.sim.data_models import (
    ActionTriple,
    CollisionKind,
    EpisodeSpec,
    EpisodeStatus,
    Measurements,
    Observation,
    SimConfig,
    VehicleState,
)
from src.sim.exceptions import EpisodeTerminatedError, InvalidEpisodeSpecError
from src.sim.infractions import detect_infractions
from src.sim.layouts import bundled_map
from src.sim.observation import observe
from src.sim.obstacles import ObstacleField
from src.sim.planner import Route, plan_route
from src.sim.town_map import TownMap
from src.sim.vehicle import step_dynamics
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

StepResult = tuple[Observation, Measurements, EpisodeStatus]


def time_budget_steps(optimal_length: float, cfg: SimConfig) -> int:
    """Steps needed to drive ``optimal_length`` at the budget speed."""
    seconds = optimal_length * 3.6 / cfg.budget_speed_kmh
    return max(1, math.ceil(seconds / cfg.dt - 1e-9))


class TownEnv:
    """Single-vehicle episodes: reset with an EpisodeSpec, then step actions.

    Overlaps with sidewalks or the opposite lane are reported but never end
    an episode; collisions, reaching the goal and the time budget do.
    """

    def __init__(
        self,
        cfg: Optional[SimConfig] = None,
        town: Optional[TownMap] = None,
        map_loader: Callable[[str], TownMap] = bundled_map,
    ):
        self.cfg = cfg or SimConfig()
        self._fixed_town = town
        self._map_loader = map_loader
        self.town: Optional[TownMap] = town
        self.spec: Optional[EpisodeSpec] = None
        self.vehicle: Optional[VehicleState] = None
        self.route: Optional[Route] = None
        self.obstacles = ObstacleField.empty()
        self.status = EpisodeStatus.RUNNING
        self.steps = 0
        self.budget_steps = 0
        self.progress = 0
        self.observation: Optional[Observation] = None
        self.measurements: Optional[Measurements] = None
        self._perturbation_rng: Optional[np.random.Generator] = None

    def _resolve_town(self, name: str) -> TownMap:
        if self._fixed_town is not None:
            if self._fixed_town.name != name:
                raise InvalidEpisodeSpecError(
                    f"spec names map {name!r} but this environment runs {self._fixed_town.name!r}"
                )
            return self._fixed_town
        return self._map_loader(name)

    def reset(self, spec: EpisodeSpec | dict) -> Observation:
        """Deterministically rebuild the world for ``spec``."""
        if not isinstance(spec, EpisodeSpec):
            try:
                spec = EpisodeSpec.model_validate(spec)
            except ValidationError as e:
                raise InvalidEpisodeSpecError(f"invalid episode spec: {e}") from e

        town = self._resolve_town(spec.map_name)
        point, heading = town.pose_at(spec.start)
        town.pose_at(spec.goal)
        route = plan_route(town, spec.start, spec.goal, self.cfg)

        self.town = town
        self.spec = spec
        self.route = route
        self.vehicle = VehicleState(
            x=float(point[0]),
            y=float(point[1]),
            heading=geometry.normalize_angle(heading),
            speed=min(spec.start_speed, self.cfg.max_speed),
            half_length=0.5 * self.cfg.vehicle_length,
            half_width=0.5 * self.cfg.vehicle_width,
        )
        world_rng = np.random.default_rng([spec.seed, spec.obstacles.seed])
        if spec.obstacles.is_empty:
            self.obstacles = ObstacleField.empty()
        else:
            self.obstacles = ObstacleField.spawn(town, spec.obstacles, route.lanes, point, world_rng)
        self._perturbation_rng = np.random.default_rng([spec.seed, spec.perturbation.seed, 1])
        self.status = EpisodeStatus.RUNNING
        self.steps = 0
        self.progress = 0
        self.budget_steps = time_budget_steps(route.optimal_length, self.cfg)
        self.measurements = self._measure()
        self.observation = self._observe()
        logger.debug(
            f"Reset {town.name} lane {spec.start.lane}@{spec.start.s:.1f} -> "
            f"lane {spec.goal.lane}@{spec.goal.s:.1f}: {route.optimal_length:.1f} m, "
            f"budget {self.budget_steps} steps, {len(self.obstacles)} agents"
        )
        return self.observation

    def step(self, action: ActionTriple) -> StepResult:
        """Advance one tick. Raises EpisodeTerminatedError once the episode ended."""
        if self.vehicle is None or self.route is None:
            raise EpisodeTerminatedError("step() called before reset()")
        if self.status.is_terminal:
            raise EpisodeTerminatedError(f"episode already ended with {self.status.value}")

        self.vehicle = step_dynamics(self.vehicle, action, self.cfg)
        self.obstacles.advance(self.cfg.dt, self.vehicle)
        self.steps += 1
        self._track_progress()
        self.measurements = self._measure()
        self.status = self._status(self.measurements)
        self.observation = self._observe()
        return self.observation, self.measurements, self.status

    @property
    def goal_distance(self) -> float:
        return float(np.linalg.norm(self.vehicle.position - self.route.goal))

    def _measure(self) -> Measurements:
        m = detect_infractions(self.town, self.vehicle, self.obstacles)
        return m.model_copy(update={"distance_to_goal": self.goal_distance})

    def _observe(self) -> Observation:
        return observe(
            self.town,
            self.vehicle,
            self.route,
            self.obstacles,
            self.spec.perturbation,
            self.cfg,
            rng=self._perturbation_rng,
            progress=self.progress,
        )

    def _track_progress(self) -> None:
        """Nearest route waypoint, searched a short window ahead of the last one."""
        window = int(math.ceil(self.cfg.max_speed * self.cfg.dt / self.cfg.waypoint_spacing)) + 3
        candidates = self.route.waypoints[self.progress : self.progress + window + 1]
        offsets = np.linalg.norm(candidates - self.vehicle.position, axis=1)
        self.progress += int(np.argmin(offsets))

    def _status(self, m: Measurements) -> EpisodeStatus:
        if m.collision_kind is not CollisionKind.NONE:
            return EpisodeStatus.COLLISION
        # Loop routes can start next to their own goal; only count arrival near the route end.
        remaining = self.route.length - float(self.route.stations[self.progress])
        near_end = remaining < self.cfg.goal_tolerance + 2.0 * self.cfg.waypoint_spacing
        if m.distance_to_goal < self.cfg.goal_tolerance and near_end:
            return EpisodeStatus.GOAL_REACHED
        # Elapsed time must exceed the budget; reaching it exactly is still in time.
        if self.steps > self.budget_steps:
            return EpisodeStatus.TIME_BUDGET_EXHAUSTED
        return EpisodeStatus.RUNNING
