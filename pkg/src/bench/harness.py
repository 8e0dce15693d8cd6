"""Evaluation protocol: greedy episodes, condition cells, suites and result tables."""

import csv
import hashlib
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.bench.data_models import (
    INFRACTION_KINDS,
    BenchConfig,
    BenchmarkResult,
    CellResult,
    Condition,
    ConditionCell,
    EpisodeResult,
)
from src.bench.episode_log import EpisodeLog
from src.bench.exceptions import UnknownSuiteError
from src.bench.policies import Policy
from src.reward.reward import DEFAULT_REWARD, RewardConfig, total_reward
from src.sim.data_models import CollisionKind, EpisodeSpec, EpisodeStatus, PerturbationRegime, SimConfig
from src.sim.env import TownEnv
from src.sim.layouts import LAYOUTS, bundled_map
from src.sim.tasks import REGIME_GROUPS, TASK_ORDER, TaskKind, regime_group, sample_episode_spec
from src.utils.files import atomic_write_text
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

CONDITIONS: dict[str, Condition] = {
    c.name: c
    for c in (
        Condition(name="training", map_name="town-a", regime_group="training"),
        Condition(name="new-town", map_name="town-b", regime_group="training"),
        Condition(name="new-weather", map_name="town-a", regime_group="new"),
        Condition(name="new-town-weather", map_name="town-b", regime_group="new"),
        Condition(name="new-path", map_name="town-a", regime_group="training", route_set="alt"),
        Condition(name="new-weather2", map_name="town-a", regime_group="new2"),
        Condition(name="new-town-weather2", map_name="town-b", regime_group="new2"),
        Condition(name="new-town-path2", map_name="town-b", regime_group="training", route_set="alt"),
    )
}
STANDARD_CONDITIONS = ("training", "new-town", "new-weather", "new-town-weather")
GENERALIZATION_CONDITIONS = ("new-path", "new-weather2", "new-town-weather2", "new-town-path2")
GENERALIZATION_TASKS = (TaskKind.NAVIGATION, TaskKind.NAV_DYNAMIC)
SUITES = ("standard", "generalization", "single")


def cell_seed(bench_seed: int, cell_id: str, index: int) -> int:
    """Episode seed from the cell identity alone, so cells never influence each other."""
    digest = hashlib.sha256(f"{bench_seed}:{cell_id}:{index}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def find_regime(name: str) -> PerturbationRegime:
    for group in REGIME_GROUPS.values():
        for regime in group:
            if regime.name == name:
                return regime
    raise UnknownSuiteError(f"unknown perturbation regime {name!r}")


def cell_regimes(cell: ConditionCell) -> tuple[PerturbationRegime, ...]:
    if cell.condition.regime:
        return (find_regime(cell.condition.regime),)
    return regime_group(cell.condition.regime_group)


def cell_episode_spec(cell: ConditionCell, index: int, bench_seed: int, sim: SimConfig) -> EpisodeSpec:
    """Start/goal pair for episode ``index`` of ``cell``, drawn uniformly over task-conforming pairs."""
    seed = cell_seed(bench_seed, cell.cell_id, index)
    regimes = cell_regimes(cell)
    rng = np.random.default_rng(seed)
    town = bundled_map(cell.condition.map_name)
    return sample_episode_spec(town, cell.task, rng, sim, regimes[index % len(regimes)], seed=seed)


def build_suite(cfg: BenchConfig) -> list[ConditionCell]:
    """Cells of the configured suite."""
    if cfg.suite == "standard":
        pairs = [(CONDITIONS[c], t) for t in TASK_ORDER for c in STANDARD_CONDITIONS]
    elif cfg.suite == "generalization":
        pairs = [(CONDITIONS[c], t) for t in GENERALIZATION_TASKS for c in GENERALIZATION_CONDITIONS]
    elif cfg.suite == "single":
        if cfg.condition not in CONDITIONS:
            raise UnknownSuiteError(f"unknown condition {cfg.condition!r}; known: {sorted(CONDITIONS)}")
        pairs = [(CONDITIONS[cfg.condition], cfg.task)]
    else:
        raise UnknownSuiteError(f"unknown suite {cfg.suite!r}; known: {list(SUITES)}")
    return [ConditionCell(condition=c, task=t, episodes=cfg.episodes_per_cell) for c, t in pairs]


def run_episode(
    env: TownEnv,
    spec: EpisodeSpec,
    policy: Policy,
    reward_cfg: RewardConfig = DEFAULT_REWARD,
    overlap_threshold: float = 0.3,
    cell_id: str = "",
    index: int = 0,
    log_path: Optional[Path] = None,
    config_hash: str = "",
) -> EpisodeResult:
    """Greedy rollout of ``policy`` on ``spec``.

    Sidewalk and opposite-lane infractions count once per excursion above
    ``overlap_threshold``.
    """
    policy.check(env)
    obs = env.reset(spec)
    log = EpisodeLog(spec, policy.name, reward_cfg, config_hash) if log_path is not None else None
    result = EpisodeResult(cell_id=cell_id, index=index, seed=spec.seed, status=EpisodeStatus.RUNNING, steps=0, episode_return=0.0)
    on_sidewalk = on_opposite = False
    status = EpisodeStatus.RUNNING
    while not status.is_terminal:
        command = obs.command
        action = policy.act(obs, env)
        obs, measurements, status = env.step(action)
        reward = total_reward(measurements, command, action, reward_cfg)
        result.episode_return += reward.total

        now_sidewalk = measurements.sidewalk_overlap > overlap_threshold
        now_opposite = measurements.opposite_overlap > overlap_threshold
        result.infractions["sidewalk"] += int(now_sidewalk and not on_sidewalk)
        result.infractions["opposite"] += int(now_opposite and not on_opposite)
        on_sidewalk, on_opposite = now_sidewalk, now_opposite
        if measurements.collision_kind is CollisionKind.VEHICLE_OR_PEDESTRIAN:
            result.infractions["collision_vp"] += 1
        elif measurements.collision_kind is CollisionKind.OTHER:
            result.infractions["collision_other"] += 1

        if log is not None:
            log.record(env.vehicle, command, action, measurements, reward, status)

    result.status = status
    result.steps = env.steps
    if log is not None:
        log.write(log_path)
    return result


@dataclass
class _EpisodeJob:
    cell: ConditionCell
    index: int
    policy: Policy
    bench: BenchConfig
    sim: SimConfig
    reward: RewardConfig
    log_dir: Optional[Path]
    config_hash: str


def _log_path(log_dir: Optional[Path], cell: ConditionCell, index: int) -> Optional[Path]:
    if log_dir is None:
        return None
    return Path(log_dir) / f"{cell.cell_id.replace('/', '_')}_{index:03d}.jsonl"


def _run_job(job: _EpisodeJob) -> EpisodeResult:
    spec = cell_episode_spec(job.cell, job.index, job.bench.seed, job.sim)
    return run_episode(
        TownEnv(job.sim),
        spec,
        job.policy,
        job.reward,
        job.bench.overlap_threshold,
        cell_id=job.cell.cell_id,
        index=job.index,
        log_path=_log_path(job.log_dir, job.cell, job.index),
        config_hash=job.config_hash,
    )


def run_benchmark(
    cells: Sequence[ConditionCell],
    policy: Policy,
    cfg: Optional[BenchConfig] = None,
    sim: Optional[SimConfig] = None,
    reward_cfg: RewardConfig = DEFAULT_REWARD,
    workers: int = 1,
    log_dir: Optional[Path] = None,
    config_hash: str = "",
) -> BenchmarkResult:
    """Evaluate one policy on every cell; episodes may run in worker processes."""
    cfg = cfg or BenchConfig()
    sim = sim or SimConfig()
    policy.check(TownEnv(sim))
    log_dir = log_dir if cfg.log_episodes else None
    jobs = [
        _EpisodeJob(cell, index, policy, cfg, sim, reward_cfg, log_dir, config_hash)
        for cell in cells
        for index in range(cell.episodes)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            episodes = list(executor.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        episodes = [_run_job(job) for job in jobs]

    by_cell: dict[str, list[EpisodeResult]] = {cell.cell_id: [] for cell in cells}
    for episode in episodes:
        by_cell[episode.cell_id].append(episode)
    result = BenchmarkResult(
        cells=[CellResult(cell, sorted(by_cell[cell.cell_id], key=lambda e: e.index)) for cell in cells]
    )
    for cell in result.cells:
        logger.info(
            f"{cell.cell.condition.name} / {cell.cell.task.value}: "
            f"{cell.successes}/{len(cell.episodes)} ({cell.pct:.0f}%)"
        )
    return result


def run_regime_breakdown(
    policy: Policy,
    cfg: Optional[BenchConfig] = None,
    sim: Optional[SimConfig] = None,
    reward_cfg: RewardConfig = DEFAULT_REWARD,
    workers: int = 1,
    config_hash: str = "",
) -> BenchmarkResult:
    """Success per individual perturbation regime on each bundled town."""
    cfg = cfg or BenchConfig()
    cells = []
    for map_name in sorted(LAYOUTS):
        for group, regimes in REGIME_GROUPS.items():
            for regime in regimes:
                condition = Condition(
                    name=f"{map_name}:{regime.name}", map_name=map_name, regime_group=group, regime=regime.name
                )
                cells.append(ConditionCell(condition=condition, task=cfg.breakdown_task, episodes=cfg.episodes_per_cell))
    return run_benchmark(cells, policy, cfg, sim, reward_cfg, workers, config_hash=config_hash)


RESULT_COLUMNS = (
    "task",
    "condition",
    "map",
    "regime_group",
    "episodes",
    "successes",
    "pct",
    *(f"mean_{kind}" for kind in INFRACTION_KINDS),
)


def format_results_csv(result: BenchmarkResult, config_hash: str = "") -> str:
    buffer = io.StringIO()
    buffer.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for cell in result.cells:
        means = cell.mean_infractions()
        condition = cell.cell.condition
        writer.writerow(
            [
                cell.cell.task.value,
                condition.name,
                condition.map_name,
                condition.regime or condition.regime_group,
                len(cell.episodes),
                cell.successes,
                f"{cell.pct:.1f}",
                *(f"{means[kind]:.3f}" for kind in INFRACTION_KINDS),
            ]
        )
    return buffer.getvalue()


def format_table(result: BenchmarkResult) -> str:
    """Tasks as rows, conditions as columns, success percentages in the cells."""
    conditions = result.conditions()
    tasks = result.tasks()
    first = max([len("Task")] + [len(t.value) for t in tasks])
    widths = [max(len(c), 6) for c in conditions]
    header = "Task".ljust(first) + "  " + "  ".join(c.rjust(w) for c, w in zip(conditions, widths))
    lines = [header, "-" * len(header)]
    for task in tasks:
        cells = []
        for condition, width in zip(conditions, widths):
            cell = result.lookup(condition, task)
            cells.append(("-" if cell is None else f"{cell.pct:.0f}").rjust(width))
        lines.append(task.value.ljust(first) + "  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


def write_results(result: BenchmarkResult, out_dir: Path, stem: str = "benchmark", config_hash: str = "") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    table_path = out_dir / f"{stem}.txt"
    atomic_write_text(csv_path, format_results_csv(result, config_hash))
    atomic_write_text(table_path, f"# config_hash={config_hash}\n" + format_table(result))
    logger.info(f"Wrote benchmark results to {csv_path} and {table_path}")
    return csv_path, table_path
