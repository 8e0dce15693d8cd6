"""Stage 2: DDPG fine-tuning of the imitation-pretrained actor."""

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.expert.dataset import DemoDataset
from src.nn.exceptions import ShapeError
from src.nn.optim import Adam
from src.policy.networks import (
    ROLE_ACTOR,
    ROLE_ACTOR_TARGET,
    ROLE_CRITIC,
    ROLE_CRITIC_TARGET,
    ActorOptimizer,
    Critic,
    GatedActor,
    PolicyConfig,
    gate,
)
from src.reward.reward import DEFAULT_REWARD, RewardConfig, total_reward
from src.sim.data_models import ActionTriple, EpisodeStatus, Observation, SimConfig
from src.sim.env import TownEnv
from src.sim.layouts import bundled_map
from src.sim.tasks import REGIME_GROUPS, TASK_ORDER, TaskKind, regime_group, sample_episode_spec
from src.training.exceptions import MissingCheckpointError, MissingDemonstrationsError
from src.training.noise import OUProcess
from src.utils.files import atomic_write_text
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

METRIC_COLUMNS = (
    "step",
    "episode",
    "return",
    "success",
    "r_s",
    "r_v",
    "r_r",
    "r_o",
    "r_d",
    "critic_loss",
    "actor_grad_norm",
)


class BrakeNoise(str, Enum):
    """How the brake exploration channel behaves."""

    ZERO = "zero"
    REVERT = "revert"


class RLConfig(BaseModel):
    """DDPG stage hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(0.9, gt=0.0, lt=1.0)
    actor_lr: float = Field(1e-5, ge=0.0)
    critic_lr: float = Field(1e-3, ge=0.0)
    total_steps: int = Field(150_000, ge=0)
    batch_size: int = Field(64, gt=0)
    tau: float = Field(0.001, gt=0.0, le=1.0)
    warmup_steps: int = Field(1_000, ge=0)
    replay_capacity: int = Field(100_000, gt=0)
    demo_replay: bool = False

    ou_mu: tuple[float, float, float] = (0.0, 0.15, 0.5)
    ou_sigma: tuple[float, float, float] = (0.02, 0.05, 0.0)
    ou_theta: float = Field(0.15, gt=0.0, le=1.0)
    # "zero" pins the brake channel at 0; "revert" starts it at 0 and lets it drift to ou_mu[2].
    brake_noise: BrakeNoise = BrakeNoise.ZERO
    # Zero output layer: dQ/da starts at 0 and the actor holds still until the critic learns.
    zero_critic_head: bool = False

    map_name: str = "town-a"
    regime_group: str = "training"
    tasks: list[TaskKind] = Field(default_factory=lambda: list(TASK_ORDER))
    seed: int = 0

    @field_validator("ou_sigma")
    @classmethod
    def _sigma_non_negative(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(s < 0 for s in value):
            raise ValueError(f"OU sigma must be >= 0 per channel, got {value}")
        return value

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
            raise ValueError("at least one training task is required")
        return value


@dataclass
class Transition:
    obs: Observation
    action: ActionTriple
    reward: float
    next_obs: Observation
    terminal: bool

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ValueError(f"transition reward must be finite, got {self.reward}")


@dataclass
class TransitionBatch:
    """Column arrays for a set of transitions; speeds in km/h."""

    rasters: np.ndarray
    speeds_kmh: np.ndarray
    commands: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_rasters: np.ndarray
    next_speeds_kmh: np.ndarray
    next_commands: np.ndarray
    terminals: np.ndarray

    @classmethod
    def allocate(cls, capacity: int, raster_size: int) -> "TransitionBatch":
        return cls(
            rasters=np.zeros((capacity, raster_size), dtype=np.float32),
            speeds_kmh=np.zeros(capacity),
            commands=np.zeros(capacity, dtype=np.int64),
            actions=np.zeros((capacity, 3)),
            rewards=np.zeros(capacity),
            next_rasters=np.zeros((capacity, raster_size), dtype=np.float32),
            next_speeds_kmh=np.zeros(capacity),
            next_commands=np.zeros(capacity, dtype=np.int64),
            terminals=np.zeros(capacity, dtype=bool),
        )

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        batch = cls.allocate(len(transitions), transitions[0].obs.raster.size if transitions else 0)
        for i, t in enumerate(transitions):
            batch.write(i, t)
        return batch

    def __len__(self) -> int:
        return len(self.rewards)

    def write(self, i: int, t: Transition) -> None:
        self.rasters[i] = t.obs.raster.reshape(-1)
        self.speeds_kmh[i] = t.obs.speed_kmh
        self.commands[i] = gate(t.obs.command)
        self.actions[i] = t.action.as_array()
        self.rewards[i] = t.reward
        self.next_rasters[i] = t.next_obs.raster.reshape(-1)
        self.next_speeds_kmh[i] = t.next_obs.speed_kmh
        self.next_commands[i] = gate(t.next_obs.command)
        self.terminals[i] = t.terminal

    def take(self, rows: np.ndarray) -> "TransitionBatch":
        return TransitionBatch(
            rasters=self.rasters[rows].astype(np.float64),
            speeds_kmh=self.speeds_kmh[rows],
            commands=self.commands[rows],
            actions=self.actions[rows],
            rewards=self.rewards[rows],
            next_rasters=self.next_rasters[rows].astype(np.float64),
            next_speeds_kmh=self.next_speeds_kmh[rows],
            next_commands=self.next_commands[rows],
            terminals=self.terminals[rows],
        )

    @staticmethod
    def concat(a: "TransitionBatch", b: "TransitionBatch") -> "TransitionBatch":
        return TransitionBatch(
            **{name: np.concatenate([getattr(a, name), getattr(b, name)]) for name in a.__dataclass_fields__}
        )


class ReplayBuffer:
    """FIFO ring of transitions plus a protected set that is never evicted.

    ``capacity`` bounds the ring only; protected transitions are stored
    alongside it.
    """

    def __init__(self, capacity: int, raster_size: int):
        if capacity <= 0:
            raise ValueError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.raster_size = raster_size
        self._ring = TransitionBatch.allocate(capacity, raster_size)
        self._protected = TransitionBatch.allocate(0, raster_size)
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size + len(self._protected)

    @property
    def protected_size(self) -> int:
        return len(self._protected)

    def push(self, transition: Transition) -> None:
        if transition.obs.raster.size != self.raster_size:
            raise ShapeError(f"transition raster has {transition.obs.raster.size} cells, buffer expects {self.raster_size}")
        self._ring.write(self._next, transition)
        self._next = (self._next + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_protected(self, batch: TransitionBatch) -> None:
        if len(batch) and batch.rasters.shape[1] != self.raster_size:
            raise ShapeError(f"demonstration rasters have {batch.rasters.shape[1]} cells, buffer expects {self.raster_size}")
        self._protected = TransitionBatch.concat(self._protected, batch)

    def ring_rows(self) -> np.ndarray:
        """Ring slots in insertion order, oldest first."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def rewards(self) -> np.ndarray:
        return self._ring.rewards[self.ring_rows()].copy()

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform draw with replacement over ring and protected transitions."""
        total = len(self)
        if total == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        picks = rng.integers(total, size=batch_size)
        ring = np.sort(picks[picks < self.size])
        protected = np.sort(picks[picks >= self.size] - self.size)
        if not len(protected):
            return self._ring.take(ring)
        if not len(ring):
            return self._protected.take(protected)
        return TransitionBatch.concat(self._ring.take(ring), self._protected.take(protected))


def demo_transitions(dataset: DemoDataset, reward_cfg: RewardConfig = DEFAULT_REWARD) -> TransitionBatch:
    """Rebuild (o, a, r, o', terminal) from demonstrations; rewards use ``reward_cfg``."""
    n = len(dataset)
    batch = TransitionBatch.allocate(n, int(np.prod(dataset.raster_shape)))
    if n == 0:
        return batch
    nxt = dataset.next_indices()
    flat = dataset.rasters.reshape(n, -1)
    speeds_kmh = dataset.speeds * 3.6
    commands = dataset.commands
    batch.rasters[:] = flat
    batch.speeds_kmh[:] = speeds_kmh
    batch.commands[:] = commands
    batch.actions[:] = dataset.records["executed"]
    batch.next_rasters[:] = flat[nxt]
    batch.next_speeds_kmh[:] = speeds_kmh[nxt]
    batch.next_commands[:] = commands[nxt]
    batch.terminals[:] = dataset.records["terminal"].astype(bool)
    for i in range(n):
        sample = dataset.sample(i)
        batch.rewards[i] = total_reward(sample.next_measurements, sample.command, sample.executed, reward_cfg).total
    return batch


def linear_decay(step: int, total: int) -> float:
    """Fraction remaining: 1 at step 0, exactly 0 from ``total`` on."""
    if total <= 0:
        return 0.0
    return max(0.0, 1.0 - step / total)


def exploration_noise(cfg: RLConfig, rng: np.random.Generator) -> OUProcess:
    mu = np.asarray(cfg.ou_mu, dtype=np.float64)
    sigma = np.asarray(cfg.ou_sigma, dtype=np.float64)
    initial = mu.copy()
    if cfg.brake_noise is BrakeNoise.ZERO:
        mu[2] = sigma[2] = initial[2] = 0.0
    else:
        initial[2] = 0.0
    return OUProcess(mu=mu, sigma=sigma, theta=cfg.ou_theta, rng=rng, initial_state=initial)


def act_explore(actor: GatedActor, obs: Observation, proc: OUProcess) -> ActionTriple:
    """Greedy action plus one OU step, clipped to action bounds."""
    greedy = actor.act(obs).as_array()
    return ActionTriple.from_array(greedy + proc.step())


def critic_update(
    critic: Critic,
    target_actor: GatedActor,
    target_critic: Critic,
    batch: TransitionBatch,
    gamma: float,
    optimizer: Adam,
    lr: float,
) -> Optional[float]:
    """One Adam step on the one-step TD error; returns the loss, or None when skipped."""
    next_actions = target_actor.forward(batch.next_rasters, batch.next_speeds_kmh, batch.next_commands)
    next_q = target_critic.forward(batch.next_rasters, batch.next_speeds_kmh, batch.next_commands, next_actions)
    y = np.where(batch.terminals, batch.rewards, batch.rewards + gamma * next_q)
    if not np.all(np.isfinite(y)):
        logger.warning("Skipped critic update: non-finite TD target")
        return None
    q = critic.forward(batch.rasters, batch.speeds_kmh, batch.commands, batch.actions)
    residual = q - y
    loss = float(np.mean(residual**2))
    critic.backward(2.0 * residual / len(residual))
    optimizer.step(lr)
    return loss


def actor_update(
    actor: GatedActor,
    critic: Critic,
    batch: TransitionBatch,
    optimizer: ActorOptimizer,
    lr: float,
) -> float:
    """Ascend mean Q(o, pi(o)); returns the applied gradient norm."""
    actions = actor.forward(batch.rasters, batch.speeds_kmh, batch.commands)
    dq_da = critic.action_gradient(batch.rasters, batch.speeds_kmh, batch.commands, actions)
    actor.backward_masked(-dq_da / len(actions))
    norm = optimizer.grad_norm()
    optimizer.step(lr)
    return norm


Tunable = Union[GatedActor, Critic]


def soft_update(target: Tunable, online: Tunable, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    target_params, online_params = target.parameters(), online.parameters()
    if len(target_params) != len(online_params) or any(
        t.shape != o.shape for t, o in zip(target_params, online_params)
    ):
        raise ShapeError("soft update between networks of different shapes")
    for t, o in zip(target_params, online_params):
        t.values *= 1.0 - tau
        t.values += tau * o.values


@dataclass
class EpisodeMetrics:
    step: int
    episode: int
    episode_return: float
    success: bool
    term_sums: dict[str, float]
    critic_loss: float
    actor_grad_norm: float

    def row(self) -> list:
        return [
            self.step,
            self.episode,
            repr(self.episode_return),
            int(self.success),
            *(repr(self.term_sums[k]) for k in ("r_s", "r_v", "r_r", "r_o", "r_d")),
            repr(self.critic_loss),
            repr(self.actor_grad_norm),
        ]


@dataclass
class RLResult:
    actor: GatedActor
    critic: Critic
    target_actor: GatedActor
    target_critic: Critic
    metrics: list[EpisodeMetrics] = field(default_factory=list)
    steps: int = 0


def default_env_factory(sim: SimConfig) -> Callable[[], TownEnv]:
    return lambda: TownEnv(sim)


def train_cirl(
    env_factory: Callable[[], TownEnv],
    pretrained: Optional[Union[Path, GatedActor]] = None,
    cfg: Optional[RLConfig] = None,
    reward_cfg: RewardConfig = DEFAULT_REWARD,
    policy_cfg: Optional[PolicyConfig] = None,
    demos: Optional[DemoDataset] = None,
) -> RLResult:
    """Run DDPG from the pretrained actor (or from scratch when ``pretrained`` is None).

    One critic update, one actor update and both soft updates follow every
    environment step once ``warmup_steps`` have passed. Learning rates and
    exploration sigma fall linearly to zero at ``total_steps``.

    Raises:
        MissingCheckpointError: if ``pretrained`` names a missing checkpoint
        MissingDemonstrationsError: if ``demo_replay`` is set without demonstrations
    """
    cfg = cfg or RLConfig()
    env = env_factory()
    sim = env.cfg
    raster_size = sim.raster_size

    if isinstance(pretrained, GatedActor):
        actor = pretrained.copy()
    else:
        actor = GatedActor.create(raster_size, policy_cfg)
        if pretrained is not None:
            if not Path(pretrained).exists():
                raise MissingCheckpointError(f"pretrained actor checkpoint not found: {pretrained}")
            actor.load(Path(pretrained), ROLE_ACTOR)
            logger.info(f"Initialized actor from {pretrained}")
    if actor.trunk.in_dim != raster_size:
        raise ShapeError(f"actor expects {actor.trunk.in_dim} raster cells, environment renders {raster_size}")
    if pretrained is None:
        logger.info("Training actor from scratch")

    critic = Critic.create(raster_size, policy_cfg)
    if cfg.zero_critic_head:
        critic.zero_head()
    target_actor, target_critic = actor.copy(), critic.copy()
    actor_opt = ActorOptimizer(actor)
    critic_opt = Adam(critic.parameters())

    buffer = ReplayBuffer(cfg.replay_capacity, raster_size)
    if cfg.demo_replay:
        if demos is None or len(demos) == 0:
            raise MissingDemonstrationsError("demo_replay needs a demonstration dataset")
        buffer.add_protected(demo_transitions(demos, reward_cfg))
        logger.info(f"Preloaded {buffer.protected_size} protected demonstration transitions")

    episode_rng = np.random.default_rng([cfg.seed, 3])
    sample_rng = np.random.default_rng([cfg.seed, 4])
    noise = exploration_noise(cfg, np.random.default_rng([cfg.seed, 5]))
    regimes = regime_group(cfg.regime_group)
    town = env.town if env.town is not None else bundled_map(cfg.map_name)
    result = RLResult(actor, critic, target_actor, target_critic)

    step = 0
    episode = 0
    while step < cfg.total_steps:
        task = cfg.tasks[episode % len(cfg.tasks)]
        regime = regimes[episode % len(regimes)]
        spec = sample_episode_spec(
            town,
            task,
            episode_rng,
            sim,
            regime,
            seed=int(episode_rng.integers(2**31 - 1)),
        )
        obs = env.reset(spec)
        noise.reset()
        status = EpisodeStatus.RUNNING
        episode_return = 0.0
        sums = {k: 0.0 for k in ("r_s", "r_v", "r_r", "r_o", "r_d")}
        losses: list[float] = []
        norms: list[float] = []

        while not status.is_terminal and step < cfg.total_steps:
            fraction = linear_decay(step, cfg.total_steps)
            noise.decay(fraction)
            action = act_explore(actor, obs, noise)
            next_obs, measurements, status = env.step(action)
            breakdown = total_reward(measurements, obs.command, action, reward_cfg)
            buffer.push(Transition(obs, action, breakdown.total, next_obs, status.is_terminal))
            episode_return += breakdown.total
            for key, value in breakdown.terms().items():
                sums[key] += value
            obs = next_obs

            if step >= cfg.warmup_steps and len(buffer) >= cfg.batch_size:
                batch = buffer.sample(cfg.batch_size, sample_rng)
                loss = critic_update(
                    critic, target_actor, target_critic, batch, cfg.gamma, critic_opt, cfg.critic_lr * fraction
                )
                if loss is not None:
                    losses.append(loss)
                norms.append(actor_update(actor, critic, batch, actor_opt, cfg.actor_lr * fraction))
                soft_update(target_critic, critic, cfg.tau)
                soft_update(target_actor, actor, cfg.tau)
            step += 1

        metrics = EpisodeMetrics(
            step=step,
            episode=episode,
            episode_return=episode_return,
            success=status is EpisodeStatus.GOAL_REACHED,
            term_sums=sums,
            critic_loss=float(np.mean(losses)) if losses else math.nan,
            actor_grad_norm=float(np.mean(norms)) if norms else math.nan,
        )
        result.metrics.append(metrics)
        logger.info(
            f"Episode {episode} ({task.value}, {regime.name}) ended {status.value} at step {step}: "
            f"return {episode_return:.1f}"
        )
        episode += 1

    result.steps = step
    return result


def format_metrics(metrics: list[EpisodeMetrics], config_hash: str = "") -> str:
    buffer = io.StringIO()
    buffer.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for m in metrics:
        writer.writerow(m.row())
    return buffer.getvalue()


def write_metrics(metrics: list[EpisodeMetrics], path: Path, config_hash: str = "") -> None:
    atomic_write_text(Path(path), format_metrics(metrics, config_hash))
    logger.info(f"Wrote {len(metrics)} episode metrics to {path}")


CHECKPOINT_FILES = {
    ROLE_ACTOR: "actor.ckpt",
    ROLE_CRITIC: "critic.ckpt",
    ROLE_ACTOR_TARGET: "actor_target.ckpt",
    ROLE_CRITIC_TARGET: "critic_target.ckpt",
}


def save_rl_result(result: RLResult, out_dir: Path, config_hash: str = "") -> dict[str, Path]:
    """Write the four networks and the metrics log; returns paths by role."""
    out_dir = Path(out_dir)
    paths = {role: out_dir / name for role, name in CHECKPOINT_FILES.items()}
    result.actor.save(paths[ROLE_ACTOR], ROLE_ACTOR, config_hash)
    result.critic.save(paths[ROLE_CRITIC], ROLE_CRITIC, config_hash)
    result.target_actor.save(paths[ROLE_ACTOR_TARGET], ROLE_ACTOR_TARGET, config_hash)
    result.target_critic.save(paths[ROLE_CRITIC_TARGET], ROLE_CRITIC_TARGET, config_hash)
    write_metrics(result.metrics, out_dir / "rl_metrics.csv", config_hash)
    return paths
