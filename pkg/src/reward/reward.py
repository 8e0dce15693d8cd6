"""Command-conditioned reward: steer, speed, off-road and collision terms."""

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.sim.data_models import RIGHT_STEER_SIGN, ActionTriple, CollisionKind, Command, Measurements


class RewardConfig(BaseModel):
    """Reward constants and the term toggles used by the ablation grid."""

    model_config = ConfigDict(extra="forbid")

    steer_opposite_penalty: float = -15.0
    steer_straight_penalty: float = -20.0
    straight_steer_threshold: float = Field(0.2, ge=0.0)
    # Steer against a turn command is only penalized beyond this magnitude.
    turn_steer_deadband: float = Field(0.05, ge=0.0)
    sidewalk_penalty: float = -100.0
    opposite_penalty: float = -100.0
    collision_vp_penalty: float = -100.0
    collision_other_penalty: float = -50.0
    # r_r / r_o trigger on any overlap above this fraction.
    overlap_trigger: float = Field(0.0, ge=0.0, lt=1.0)
    scale: float = Field(1.0, gt=0.0)
    enable_steer: bool = True
    enable_speed: bool = True
    enable_offroad_collision: bool = True

    @model_validator(mode="after")
    def _penalties_non_positive(self) -> "RewardConfig":
        for name in (
            "steer_opposite_penalty",
            "steer_straight_penalty",
            "sidewalk_penalty",
            "opposite_penalty",
            "collision_vp_penalty",
            "collision_other_penalty",
        ):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0")
        return self


class RewardBreakdown(BaseModel):
    """Per-term rewards; ``total`` is ``scale`` times their sum."""

    model_config = ConfigDict(frozen=True)

    r_s: float = 0.0
    r_v: float = 0.0
    r_r: float = 0.0
    r_o: float = 0.0
    r_d: float = 0.0
    total: float = 0.0

    def terms(self) -> dict[str, float]:
        return {"r_s": self.r_s, "r_v": self.r_v, "r_r": self.r_r, "r_o": self.r_o, "r_d": self.r_d}


DEFAULT_REWARD = RewardConfig()


def steer_reward(command: Command, steer: float, cfg: RewardConfig = DEFAULT_REWARD) -> float:
    """Penalty for steering against a turn command or swerving on Straight.

    Follow carries no steer term.
    """
    rightward = RIGHT_STEER_SIGN * steer
    if command is Command.TURN_LEFT and rightward > cfg.turn_steer_deadband:
        return cfg.steer_opposite_penalty
    if command is Command.TURN_RIGHT and rightward < -cfg.turn_steer_deadband:
        return cfg.steer_opposite_penalty
    if command is Command.STRAIGHT and abs(steer) > cfg.straight_steer_threshold:
        return cfg.steer_straight_penalty
    return 0.0


def speed_reward(command: Command, speed_kmh: float) -> float:
    if command is Command.FOLLOW:
        return min(25.0, speed_kmh)
    if command is Command.STRAIGHT:
        return min(35.0, speed_kmh)
    return speed_kmh if speed_kmh <= 20.0 else 40.0 - speed_kmh


def collision_reward(kind: CollisionKind, cfg: RewardConfig = DEFAULT_REWARD) -> float:
    if kind is CollisionKind.VEHICLE_OR_PEDESTRIAN:
        return cfg.collision_vp_penalty
    if kind is CollisionKind.OTHER:
        return cfg.collision_other_penalty
    return 0.0


def total_reward(
    m: Measurements,
    command: Command,
    action: ActionTriple,
    cfg: RewardConfig = DEFAULT_REWARD,
) -> RewardBreakdown:
    r_s = steer_reward(command, action.steer, cfg) if cfg.enable_steer else 0.0
    r_v = speed_reward(command, m.speed_kmh) if cfg.enable_speed else 0.0
    r_r = r_o = r_d = 0.0
    if cfg.enable_offroad_collision:
        r_r = cfg.sidewalk_penalty if m.sidewalk_overlap > cfg.overlap_trigger else 0.0
        r_o = cfg.opposite_penalty if m.opposite_overlap > cfg.overlap_trigger else 0.0
        r_d = collision_reward(m.collision_kind, cfg)
    total = cfg.scale * (r_s + r_v + r_r + r_o + r_d)
    return RewardBreakdown(r_s=r_s, r_v=r_v, r_r=r_r, r_o=r_o, r_d=r_d, total=total)
