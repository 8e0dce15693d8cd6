"""Data models for the scripted expert and its demonstrations."""

from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.sim.data_models import ActionTriple, Command, Measurements, Observation
from src.sim.tasks import REGIME_GROUPS, TaskKind


class ExpertConfig(BaseModel):
    """Controller gains and demonstration-generation settings."""

    model_config = ConfigDict(extra="forbid")

    # Pure pursuit: lookahead = max(lookahead_min, lookahead_gain * speed).
    lookahead_min: float = Field(4.0, gt=0.0)
    lookahead_gain: float = Field(0.8, ge=0.0)
    # Target speeds (km/h) sit inside the high-reward speed bands.
    target_speed_follow: float = Field(25.0, gt=0.0)
    target_speed_straight: float = Field(30.0, gt=0.0)
    target_speed_turn: float = Field(15.0, gt=0.0)
    speed_gain: float = Field(1.0, gt=0.0)
    block_distance: float = Field(8.0, gt=0.0)
    block_margin: float = Field(0.6, ge=0.0)
    abort_distance: float = Field(10.0, gt=0.0)

    map_name: str = "town-a"
    episodes: int = Field(40, ge=0)
    seed: int = 0
    regime_group: str = "training"
    tasks: list[TaskKind] = Field(
        default_factory=lambda: [TaskKind.NAVIGATION, TaskKind.NAV_DYNAMIC, TaskKind.ONE_TURN, TaskKind.STRAIGHT]
    )
    min_per_branch: int = Field(2000, ge=0)
    # Each turn command must reach at least Follow / max_follow_ratio samples.
    max_follow_ratio: float = Field(4.0, gt=0.0)
    max_balance_episodes: int = Field(400, ge=0)
    # Share of episodes driven with a correlated steering disturbance (labels stay clean).
    noise_episode_fraction: float = Field(0.3, ge=0.0, le=1.0)
    steer_noise_sigma: float = Field(0.1, ge=0.0)
    steer_noise_theta: float = Field(0.15, gt=0.0, le=1.0)

    @field_validator("regime_group")
    @classmethod
    def _known_group(cls, value: str) -> str:
        if value not in REGIME_GROUPS:
            raise ValueError(f"unknown regime group {value!r}")
        return value

    @field_validator("tasks")
    @classmethod
    def _some_tasks(cls, value: list[TaskKind]) -> list[TaskKind]:
        if not value:
            raise ValueError("at least one task is required")
        return value

    def target_speed(self, command: Command) -> float:
        if command is Command.FOLLOW:
            return self.target_speed_follow
        if command is Command.STRAIGHT:
            return self.target_speed_straight
        return self.target_speed_turn


@dataclass
class DemoSample:
    """One recorded expert step.

    ``action`` is the expert's label; ``executed`` is what the vehicle
    actually received (differs only under noise injection).
    """

    observation: Observation
    action: ActionTriple
    executed: ActionTriple
    episode: int
    step: int
    next_measurements: Measurements
    terminal: bool

    @property
    def command(self) -> Command:
        return self.observation.command

    @property
    def speed_kmh(self) -> float:
        return self.observation.speed_kmh
