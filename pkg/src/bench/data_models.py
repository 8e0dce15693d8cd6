"""Data models for benchmark conditions, cells and results."""

from dataclasses import dataclass, field
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from src.sim.data_models import EpisodeStatus
from src.sim.tasks import TASK_ORDER, TaskKind

INFRACTION_KINDS = ("collision_vp", "collision_other", "sidewalk", "opposite")


class Condition(BaseModel):
    """A (town, perturbation group, route set) evaluation condition."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    map_name: str
    regime_group: str
    # Alternate route sets draw fresh start/goal pairs on the same map.
    route_set: str = "main"
    # Restrict the group to a single named regime.
    regime: Optional[str] = None


class ConditionCell(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    condition: Condition
    task: TaskKind
    episodes: int = Field(25, gt=0)

    @property
    def cell_id(self) -> str:
        c = self.condition
        regime = f"/{c.regime}" if c.regime else ""
        return f"{c.map_name}/{c.regime_group}{regime}/{c.route_set}/{self.task.value}"


class BenchConfig(BaseModel):
    """Evaluation protocol settings."""

    model_config = ConfigDict(extra="forbid")

    episodes_per_cell: int = Field(25, gt=0)
    # Overlap fraction above which a sidewalk/opposite-lane event is logged.
    overlap_threshold: float = Field(0.3, gt=0.0, lt=1.0)
    seed: int = 0
    suite: str = "standard"
    # Used by the "single" suite.
    condition: str = "training"
    task: TaskKind = TaskKind.ONE_TURN
    ablation_task: TaskKind = TaskKind.ONE_TURN
    ablation_variants: list[str] = Field(
        default_factory=lambda: [
            "default",
            "w/o steer reward",
            "add replay",
            "more steps",
            "reward x10",
            "reward/10",
            "w/o speed",
            "w/o offroad&coll",
        ]
    )
    breakdown_task: TaskKind = TaskKind.NAVIGATION
    log_episodes: bool = False


@dataclass
class EpisodeResult:
    """Outcome of one greedy rollout."""

    cell_id: str
    index: int
    seed: int
    status: EpisodeStatus
    steps: int
    episode_return: float
    infractions: dict[str, int] = field(default_factory=lambda: {k: 0 for k in INFRACTION_KINDS})

    @property
    def success(self) -> bool:
        return self.status is EpisodeStatus.GOAL_REACHED


@dataclass
class CellResult:
    cell: ConditionCell
    episodes: list[EpisodeResult]

    @property
    def successes(self) -> int:
        return sum(1 for e in self.episodes if e.success)

    @property
    def pct(self) -> float:
        return 100.0 * self.successes / len(self.episodes) if self.episodes else 0.0

    def failures(self) -> dict[EpisodeStatus, int]:
        counts = {EpisodeStatus.COLLISION: 0, EpisodeStatus.TIME_BUDGET_EXHAUSTED: 0}
        for e in self.episodes:
            if not e.success:
                counts[e.status] += 1
        return counts

    def mean_infractions(self) -> dict[str, float]:
        if not self.episodes:
            return {k: 0.0 for k in INFRACTION_KINDS}
        return {k: sum(e.infractions[k] for e in self.episodes) / len(self.episodes) for k in INFRACTION_KINDS}


@dataclass
class BenchmarkResult:
    cells: list[CellResult]

    def conditions(self) -> list[str]:
        seen: list[str] = []
        for cell in self.cells:
            if cell.cell.condition.name not in seen:
                seen.append(cell.cell.condition.name)
        return seen

    def tasks(self) -> list[TaskKind]:
        present = {cell.cell.task for cell in self.cells}
        return [task for task in TASK_ORDER if task in present]

    def lookup(self, condition: str, task: TaskKind) -> Optional[CellResult]:
        for cell in self.cells:
            if cell.cell.condition.name == condition and cell.cell.task is task:
                return cell
        return None
