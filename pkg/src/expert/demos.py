"""Expert demonstration generation with per-command balancing."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.expert.controller import expert_action
from src.expert.data_models import DemoSample, ExpertConfig
from src.expert.dataset import DemoDataset
from src.expert.exceptions import EmptyDatasetError, ExpertAbortError, InsufficientDemosError
from src.sim.data_models import (
    COMMAND_ORDER,
    ActionTriple,
    Command,
    EpisodeSpec,
    EpisodeStatus,
    LanePosition,
    PerturbationRegime,
    SimConfig,
)
from src.sim.env import TownEnv
from src.sim.exceptions import InvalidEpisodeSpecError
from src.sim.layouts import bundled_map
from src.sim.planner import classify_turn
from src.sim.tasks import TaskKind, regime_group, sample_episode_spec
from src.sim.town_map import TownMap
from src.training.noise import OUProcess
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

# Approach episodes start this far before the intersection edge, beyond the command window.
APPROACH_LEAD = 15.0


@dataclass
class EpisodeJob:
    """One expert rollout to record."""

    episode: int
    spec: EpisodeSpec
    noise_seed: Optional[int] = None


@dataclass
class EpisodeRecord:
    episode: int
    samples: list[DemoSample]
    status: Optional[EpisodeStatus]
    aborted: bool = False


def record_episode(
    env: TownEnv,
    job: EpisodeJob,
    cfg: ExpertConfig,
) -> EpisodeRecord:
    """Drive one episode with the expert and record every step."""
    observation = env.reset(job.spec)
    noise = None
    if job.noise_seed is not None and cfg.steer_noise_sigma > 0:
        noise = OUProcess.create(mu=[0.0], sigma=[cfg.steer_noise_sigma], theta=cfg.steer_noise_theta, seed=job.noise_seed)

    samples: list[DemoSample] = []
    status = EpisodeStatus.RUNNING
    while not status.is_terminal:
        try:
            label = expert_action(env.vehicle, env.route, env.obstacles, cfg, env.cfg, progress=env.progress)
        except ExpertAbortError as e:
            logger.warning(f"Episode {job.episode} aborted at step {env.steps}: {e}")
            return EpisodeRecord(job.episode, samples, None, aborted=True)
        executed = label
        if noise is not None:
            executed = ActionTriple.clipped(label.steer + float(noise.step()[0]), label.throttle, label.brake)
        next_observation, measurements, status = env.step(executed)
        samples.append(
            DemoSample(
                observation=observation,
                action=label,
                executed=executed,
                episode=job.episode,
                step=env.steps - 1,
                next_measurements=measurements,
                terminal=status.is_terminal,
            )
        )
        observation = next_observation
    return EpisodeRecord(job.episode, samples, status)


def _run_job(args: tuple[EpisodeJob, ExpertConfig, SimConfig]) -> EpisodeRecord:
    job, cfg, sim = args
    return record_episode(TownEnv(sim), job, cfg)


def _run_jobs(jobs: list[EpisodeJob], cfg: ExpertConfig, sim: SimConfig, workers: int) -> list[EpisodeRecord]:
    args = [(job, cfg, sim) for job in jobs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_run_job, args))
    env = TownEnv(sim)
    return [record_episode(env, job, cfg) for job in jobs]


def approach_spec(
    town: TownMap,
    command: Command,
    rng: np.random.Generator,
    sim: SimConfig,
    seed: int,
    perturbation: PerturbationRegime,
) -> EpisodeSpec:
    """Short episode ending just after an intersection crossed with ``command``."""
    candidates = []
    for lane in town.lanes.values():
        for nxt in town.successors(lane.id):
            target = town.lane(nxt)
            if classify_turn(lane.end_heading, target.start_heading) is command:
                candidates.append((lane, target))
    if not candidates:
        raise InvalidEpisodeSpecError(f"{town.name}: no intersection offers {command.value}")
    lane, target = candidates[rng.integers(len(candidates))]
    start = max(0.0, lane.length - sim.approach_window - APPROACH_LEAD * float(rng.uniform(0.5, 1.0)))
    goal = min(target.length, float(rng.uniform(10.0, 25.0)))
    return EpisodeSpec(
        map_name=town.name,
        start=LanePosition(lane=lane.id, s=start),
        goal=LanePosition(lane=target.id, s=goal),
        perturbation=perturbation,
        seed=seed,
        task=f"approach-{command.value}",
    )


def _deficits(counts: dict[Command, int], cfg: ExpertConfig) -> dict[Command, int]:
    follow = counts[Command.FOLLOW]
    wanted = {Command.FOLLOW: cfg.min_per_branch}
    for command in (Command.STRAIGHT, Command.TURN_LEFT, Command.TURN_RIGHT):
        wanted[command] = max(cfg.min_per_branch, math.ceil(follow / cfg.max_follow_ratio))
    return {c: wanted[c] - counts[c] for c in COMMAND_ORDER if counts[c] < wanted[c]}


def generate_demos(
    cfg: ExpertConfig,
    sim: Optional[SimConfig] = None,
    config_hash: str = "",
    workers: int = 1,
) -> DemoDataset:
    """Record expert episodes on ``cfg.map_name`` and balance commands.

    Episodes ending in a collision and aborted episodes are dropped.

    Raises:
        EmptyDatasetError: if no episodes are requested or none survive filtering
        InsufficientDemosError: if balancing cannot reach ``min_per_branch``
    """
    sim = sim or SimConfig()
    if cfg.episodes == 0:
        raise EmptyDatasetError("demonstration config requests 0 episodes")
    town = bundled_map(cfg.map_name)
    regimes = regime_group(cfg.regime_group)
    rng = np.random.default_rng(cfg.seed)

    def noise_seed() -> Optional[int]:
        draw = int(rng.integers(2**31 - 1))
        return draw if rng.random() < cfg.noise_episode_fraction else None

    jobs = []
    for index in range(cfg.episodes):
        task = cfg.tasks[index % len(cfg.tasks)]
        regime = regimes[index % len(regimes)]
        spec = sample_episode_spec(town, task, rng, sim, regime, seed=int(rng.integers(2**31 - 1)))
        jobs.append(EpisodeJob(episode=index, spec=spec, noise_seed=noise_seed()))

    kept: list[DemoSample] = []
    counts = {command: 0 for command in COMMAND_ORDER}
    dropped = 0

    def absorb(records: list[EpisodeRecord]) -> None:
        nonlocal dropped
        for record in records:
            if record.aborted or record.status is EpisodeStatus.COLLISION:
                dropped += 1
                reason = record.status.value if record.status else "aborted"
                logger.warning(f"Dropped demonstration episode {record.episode} ({reason})")
                continue
            kept.extend(record.samples)
            for sample in record.samples:
                counts[sample.command] += 1

    absorb(_run_jobs(jobs, cfg, sim, workers))

    next_episode = cfg.episodes
    balance_runs = 0
    while (deficits := _deficits(counts, cfg)) and balance_runs < cfg.max_balance_episodes:
        command = max(deficits, key=lambda c: (deficits[c], -c.index))
        regime = regimes[next_episode % len(regimes)]
        seed = int(rng.integers(2**31 - 1))
        if command is Command.FOLLOW:
            spec = sample_episode_spec(town, TaskKind.STRAIGHT, rng, sim, regime, seed=seed)
        else:
            spec = approach_spec(town, command, rng, sim, seed, regime)
        absorb(_run_jobs([EpisodeJob(next_episode, spec, noise_seed())], cfg, sim, 1))
        next_episode += 1
        balance_runs += 1

    if not kept:
        raise EmptyDatasetError(f"all {dropped} demonstration episodes were dropped")
    if _deficits(counts, cfg):
        raise InsufficientDemosError(
            f"command counts {_format_counts(counts)} still short after {balance_runs} balancing episodes"
        )
    logger.info(
        f"Generated {len(kept)} samples from {next_episode - dropped} episodes "
        f"({dropped} dropped, {balance_runs} balancing): {_format_counts(counts)}"
    )
    return DemoDataset.from_samples(kept, (sim.raster_height, sim.raster_width), seed=cfg.seed, config_hash=config_hash)


def _format_counts(counts: dict[Command, int]) -> str:
    return ", ".join(f"{c.value}={counts[c]}" for c in COMMAND_ORDER)
