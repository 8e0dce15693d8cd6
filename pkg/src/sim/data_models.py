"""Data models for the town simulator."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.sim.exceptions import InvalidActionError

# Positive steer turns the vehicle clockwise (to the right). Every module that
# reasons about steer direction multiplies by this sign.
RIGHT_STEER_SIGN = 1.0


class Command(str, Enum):
    """High-level navigation command, in gate order."""

    FOLLOW = "Follow"
    STRAIGHT = "Straight"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"

    @property
    def index(self) -> int:
        return COMMAND_ORDER.index(self)

    @property
    def is_turn(self) -> bool:
        return self in (Command.TURN_LEFT, Command.TURN_RIGHT)


COMMAND_ORDER: tuple[Command, ...] = (
    Command.FOLLOW,
    Command.STRAIGHT,
    Command.TURN_LEFT,
    Command.TURN_RIGHT,
)


class CollisionKind(str, Enum):
    NONE = "None"
    VEHICLE_OR_PEDESTRIAN = "VehicleOrPedestrian"
    OTHER = "Other"


class EpisodeStatus(str, Enum):
    RUNNING = "Running"
    GOAL_REACHED = "GoalReached"
    COLLISION = "Collision"
    TIME_BUDGET_EXHAUSTED = "TimeBudgetExhausted"

    @property
    def is_terminal(self) -> bool:
        return self is not EpisodeStatus.RUNNING


class ActionTriple(BaseModel):
    """Steer (positive = right), throttle and brake."""

    model_config = ConfigDict(frozen=True)

    steer: float = Field(0.0, ge=-1.0, le=1.0)
    throttle: float = Field(0.0, ge=0.0, le=1.0)
    brake: float = Field(0.0, ge=0.0, le=1.0)

    @classmethod
    def clipped(cls, steer: float, throttle: float, brake: float) -> "ActionTriple":
        """Clip raw values into bounds; non-finite input is rejected."""
        values = (float(steer), float(throttle), float(brake))
        if not all(math.isfinite(v) for v in values):
            raise InvalidActionError(f"non-finite action {values}")
        return cls(
            steer=min(1.0, max(-1.0, values[0])),
            throttle=min(1.0, max(0.0, values[1])),
            brake=min(1.0, max(0.0, values[2])),
        )

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ActionTriple":
        return cls.clipped(values[0], values[1], values[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.steer, self.throttle, self.brake], dtype=np.float64)


class VehicleState(BaseModel):
    """Kinematic vehicle pose and speed; (x, y) is the footprint center."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    heading: float
    speed: float = Field(0.0, ge=0.0)
    half_length: float = 2.0
    half_width: float = 0.9

    @field_validator("heading")
    @classmethod
    def _heading_normalized(cls, value: float) -> float:
        if not (-math.pi < value <= math.pi):
            raise ValueError(f"heading {value} outside (-pi, pi]")
        return value

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])


class Measurements(BaseModel):
    """Per-step simulator measurements feeding the reward module."""

    speed_kmh: float = 0.0
    collision_kind: CollisionKind = CollisionKind.NONE
    sidewalk_overlap: float = Field(0.0, ge=0.0, le=1.0)
    opposite_overlap: float = Field(0.0, ge=0.0, le=1.0)
    distance_to_goal: float = 0.0


class LanePosition(BaseModel):
    """A point on a lane, ``s`` meters along its centerline."""

    model_config = ConfigDict(frozen=True)

    lane: int = Field(..., ge=0)
    s: float = Field(..., ge=0.0)


class PerturbationRegime(BaseModel):
    """Parametric observation corruption standing in for weather."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "none"
    noise_sigma: float = Field(0.0, ge=0.0)
    dropout: float = Field(0.0, ge=0.0, le=1.0)
    intensity: float = Field(1.0, ge=0.0)
    seed: int = 0

    @property
    def is_identity(self) -> bool:
        return self.noise_sigma == 0.0 and self.dropout == 0.0 and self.intensity == 1.0


NO_PERTURBATION = PerturbationRegime()


class ObstacleScript(BaseModel):
    """Scripted dynamic agents for an episode."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    vehicles: int = Field(0, ge=0)
    pedestrians: int = Field(0, ge=0)
    vehicle_speed: float = Field(5.0, gt=0.0)
    pedestrian_speed: float = Field(1.4, gt=0.0)
    crossing_probability: float = Field(0.3, ge=0.0, le=1.0)
    seed: int = 0

    @property
    def is_empty(self) -> bool:
        return self.vehicles == 0 and self.pedestrians == 0


class EpisodeSpec(BaseModel):
    """Everything needed to reset an episode deterministically."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    map_name: str
    start: LanePosition
    goal: LanePosition
    obstacles: ObstacleScript = ObstacleScript()
    perturbation: PerturbationRegime = NO_PERTURBATION
    seed: int = 0
    start_speed: float = Field(0.0, ge=0.0)
    task: Optional[str] = None

    @model_validator(mode="after")
    def _not_degenerate(self) -> "EpisodeSpec":
        if self.start == self.goal:
            raise ValueError("goal equals start (degenerate episode)")
        return self


class SimConfig(BaseModel):
    """Simulator constants; defaults are sedan-scale values."""

    model_config = ConfigDict(extra="forbid")

    dt: float = Field(0.1, gt=0.0)
    wheelbase: float = Field(2.5, gt=0.0)
    max_steer_deg: float = Field(35.0, gt=0.0, lt=90.0)
    max_accel: float = Field(3.0, gt=0.0)
    max_brake: float = Field(8.0, gt=0.0)
    drag: float = Field(0.05, ge=0.0)
    max_speed: float = Field(15.0, gt=0.0)
    vehicle_length: float = Field(4.0, gt=0.0)
    vehicle_width: float = Field(1.8, gt=0.0)
    # Distance below which the goal counts as reached.
    goal_tolerance: float = Field(2.0, gt=0.0)
    # Turn commands are issued this far before an intersection.
    approach_window: float = Field(25.0, gt=0.0)
    waypoint_spacing: float = Field(2.0, gt=0.0, le=5.0)
    budget_speed_kmh: float = Field(10.0, gt=0.0)
    raster_height: int = Field(32, gt=0)
    raster_width: int = Field(32, gt=0)
    raster_extent: float = Field(40.0, gt=0.0)
    # Scripted agents placed in NavDynamic episodes.
    dynamic_vehicles: int = Field(4, ge=0)
    dynamic_pedestrians: int = Field(6, ge=0)

    @property
    def max_steer_rad(self) -> float:
        return math.radians(self.max_steer_deg)

    @property
    def raster_size(self) -> int:
        return self.raster_height * self.raster_width


@dataclass
class Observation:
    """Egocentric raster, speed and command: the policy's state."""

    raster: np.ndarray  # (H, W) float32 in [0, 1]
    speed: float  # m/s
    command: Command

    @property
    def speed_kmh(self) -> float:
        return 3.6 * self.speed

    def flat_raster(self) -> np.ndarray:
        return self.raster.reshape(-1).astype(np.float64)
