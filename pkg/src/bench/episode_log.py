"""JSON-lines episode logs and their replay as a text trace.

The first line is a header (episode spec, policy, reward config, config
hash); every following line is one simulator step.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from src.bench.exceptions import EpisodeLogError
from src.reward.reward import RewardBreakdown, RewardConfig, total_reward
from src.sim.data_models import ActionTriple, Command, EpisodeSpec, EpisodeStatus, Measurements, VehicleState
from src.utils.files import atomic_write_text
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class EpisodeLog:
    """Accumulates one episode's records until written."""

    spec: EpisodeSpec
    policy: str
    reward_cfg: RewardConfig
    config_hash: str = ""
    steps: list[dict[str, Any]] = field(default_factory=list)

    def record(
        self,
        vehicle: VehicleState,
        command: Command,
        action: ActionTriple,
        measurements: Measurements,
        reward: RewardBreakdown,
        status: EpisodeStatus,
    ) -> None:
        self.steps.append(
            {
                "step": len(self.steps),
                "x": vehicle.x,
                "y": vehicle.y,
                "heading": vehicle.heading,
                "command": command.value,
                "action": [action.steer, action.throttle, action.brake],
                "measurements": measurements.model_dump(mode="json"),
                "reward": reward.model_dump(),
                "status": status.value,
            }
        )

    def header(self) -> dict[str, Any]:
        return {
            "type": "header",
            "spec": self.spec.model_dump(mode="json"),
            "policy": self.policy,
            "reward_config": self.reward_cfg.model_dump(mode="json"),
            "config_hash": self.config_hash,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines.extend(json.dumps(step, sort_keys=True) for step in self.steps)
        return "\n".join(lines) + "\n"

    def write(self, path: Path) -> None:
        atomic_write_text(Path(path), self.to_jsonl())


def read_episode_log(path: Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """(header, steps) from a log file.

    Raises:
        EpisodeLogError: if the file is missing, empty, malformed or has no steps
    """
    path = Path(path)
    if not path.exists():
        raise EpisodeLogError(f"episode log not found: {path}")
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if not lines:
        raise EpisodeLogError(f"episode log {path} is empty")
    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as e:
        raise EpisodeLogError(f"episode log {path} is not valid JSON lines: {e}") from e
    header, steps = records[0], records[1:]
    if header.get("type") != "header":
        raise EpisodeLogError(f"episode log {path} has no header line")
    if not steps:
        raise EpisodeLogError(f"episode log {path} holds no steps")
    return header, steps


@dataclass
class ReplayTrace:
    lines: list[str]
    mismatches: int = 0


def replay_episode(path: Path) -> ReplayTrace:
    """One text line per logged step, with rewards recomputed from the logged inputs."""
    header, steps = read_episode_log(path)
    reward_cfg = RewardConfig.model_validate(header["reward_config"])
    trace = ReplayTrace(lines=[])
    for step in steps:
        try:
            command = Command(step["command"])
            action = ActionTriple.clipped(*step["action"])
            measurements = Measurements.model_validate(step["measurements"])
        except (KeyError, ValueError, TypeError) as e:
            raise EpisodeLogError(f"malformed step record {step.get('step')}: {e}") from e
        recomputed = total_reward(measurements, command, action, reward_cfg)
        if recomputed.total != step["reward"]["total"]:
            trace.mismatches += 1
            logger.warning(
                f"Step {step['step']}: logged reward {step['reward']['total']} != recomputed {recomputed.total}"
            )
        trace.lines.append(
            f"{step['step']:5d}  x={step['x']:8.2f} y={step['y']:8.2f} hdg={step['heading']:+.3f}  "
            f"{command.value:<10}  steer={action.steer:+.3f} thr={action.throttle:.3f} brk={action.brake:.3f}  "
            f"v={measurements.speed_kmh:5.1f}km/h  "
            + " ".join(f"{k}={v:+.1f}" for k, v in recomputed.terms().items())
            + f"  total={recomputed.total:+.2f}  {step['status']}"
        )
    return trace
