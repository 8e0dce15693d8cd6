"""Command-gated actor and the command-conditioned critic.

Both share the same layout: a ReLU trunk over the flattened raster, a
speed encoder over ``speed_kmh / speed_scale_kmh``, then heads. The actor
owns four branches in gate order; the critic owns one Q head that also
takes the command one-hot and the action.
"""

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.nn.checkpoint import Checkpoint, load_into, save_checkpoint
from src.nn.exceptions import ShapeError
from src.nn.layers import LayerKind, LayerSpec, ParamTensor, activation, affine, concat, sigmoid
from src.nn.network import Network
from src.nn.optim import Adam
from src.sim.data_models import COMMAND_ORDER, ActionTriple, Command, Observation

ROLE_ACTOR = "actor"
ROLE_CRITIC = "critic"
ROLE_ACTOR_TARGET = "actor-target"
ROLE_CRITIC_TARGET = "critic-target"

ACTION_DIM = 3
NUM_COMMANDS = len(COMMAND_ORDER)


class PolicyConfig(BaseModel):
    """Layer sizes for the actor and critic."""

    model_config = ConfigDict(extra="forbid")

    trunk_hidden: list[int] = Field(default_factory=lambda: [128, 128])
    speed_hidden: int = Field(32, gt=0)
    branch_hidden: int = Field(64, gt=0)
    critic_hidden: int = Field(64, gt=0)
    speed_scale_kmh: float = Field(40.0, gt=0.0)
    seed: int = 0


def gate(command: Command) -> int:
    """Branch index of ``command`` in the fixed gate order."""
    return COMMAND_ORDER.index(command)


def _relu_stack(in_dim: int, sizes: Sequence[int]) -> list[LayerSpec]:
    specs: list[LayerSpec] = []
    width = in_dim
    for size in sizes:
        specs.append(affine(width, size))
        specs.append(activation(LayerKind.RELU, size))
        width = size
    return specs


def batch_observations(observations: Sequence[Observation]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rasters (n, H*W), speeds_kmh (n,), command indices (n,)) for a list of observations."""
    rasters = np.stack([obs.flat_raster() for obs in observations])
    speeds = np.array([obs.speed_kmh for obs in observations], dtype=np.float64)
    commands = np.array([gate(obs.command) for obs in observations], dtype=np.int64)
    return rasters, speeds, commands


def squash(raw: np.ndarray) -> np.ndarray:
    """Head activations: tanh on steer, sigmoid on throttle and brake."""
    out = np.empty_like(raw)
    out[:, 0] = np.tanh(raw[:, 0])
    out[:, 1:] = sigmoid(raw[:, 1:])
    return out


def squash_backward(out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    local = np.empty_like(out)
    local[:, 0] = 1.0 - out[:, 0] ** 2
    local[:, 1:] = out[:, 1:] * (1.0 - out[:, 1:])
    return grad * local


class _Encoder:
    """Trunk plus speed encoder; the part actor and critic have in common."""

    trunk: Network
    speed_encoder: Network
    speed_scale_kmh: float

    def _encode(self, rasters: np.ndarray, speeds_kmh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rasters = np.atleast_2d(np.asarray(rasters, dtype=np.float64))
        if rasters.shape[1] != self.trunk.in_dim:
            raise ShapeError(f"raster has {rasters.shape[1]} cells, trunk expects {self.trunk.in_dim}")
        speed_in = (np.asarray(speeds_kmh, dtype=np.float64).reshape(-1, 1)) / self.speed_scale_kmh
        self._rasters = rasters
        self._speed_in = speed_in
        return self.trunk.forward(rasters), self.speed_encoder.forward(speed_in)

    def _encode_backward(self, feature_grad: np.ndarray, speed_grad: np.ndarray) -> None:
        self.trunk.backward(self._rasters, feature_grad)
        self.speed_encoder.backward(self._speed_in, speed_grad)

    @property
    def feature_dim(self) -> int:
        return self.trunk.out_dim


class GatedActor(_Encoder):
    """Trunk, speed encoder and four command branches."""

    def __init__(self, raster_size: int, cfg: Optional[PolicyConfig] = None, rng: Optional[np.random.Generator] = None):
        cfg = cfg or PolicyConfig()
        self.cfg = cfg
        self.speed_scale_kmh = cfg.speed_scale_kmh
        self.trunk = Network(_relu_stack(raster_size, cfg.trunk_hidden), rng=rng, name="trunk")
        self.speed_encoder = Network(_relu_stack(1, [cfg.speed_hidden]), rng=rng, name="speed")
        features = self.trunk.out_dim
        self.branches = [
            Network(
                [concat(features, cfg.speed_hidden)]
                + _relu_stack(features + cfg.speed_hidden, [cfg.branch_hidden])
                + [affine(cfg.branch_hidden, ACTION_DIM)],
                rng=rng,
                name=f"branch{k}",
            )
            for k in range(NUM_COMMANDS)
        ]
        self._cache: list[tuple[int, np.ndarray, np.ndarray]] = []

    @classmethod
    def create(cls, raster_size: int, cfg: Optional[PolicyConfig] = None) -> "GatedActor":
        cfg = cfg or PolicyConfig()
        return cls(raster_size, cfg, rng=np.random.default_rng([cfg.seed, 0]))

    def networks(self) -> dict[str, Network]:
        nets = {"trunk": self.trunk, "speed": self.speed_encoder}
        nets.update({branch.name: branch for branch in self.branches})
        return nets

    def parameters(self) -> list[ParamTensor]:
        return [p for net in self.networks().values() for p in net.parameters()]

    def zero_grad(self) -> None:
        for net in self.networks().values():
            net.zero_grad()

    def zero_heads(self) -> None:
        """Zero the last affine layer of every branch."""
        for branch in self.branches:
            index = max(branch.weights)
            for param in branch.weights[index]:
                param.values[:] = 0.0

    def forward(self, rasters: np.ndarray, speeds_kmh: np.ndarray, commands: np.ndarray) -> np.ndarray:
        """Actions (n, 3); each sample runs only the branch its command selects."""
        features, speed = self._encode(rasters, speeds_kmh)
        commands = np.asarray(commands, dtype=np.int64).reshape(-1)
        if len(commands) != len(features):
            raise ShapeError(f"{len(commands)} commands for a batch of {len(features)}")
        actions = np.zeros((len(features), ACTION_DIM))
        self._cache = []
        for k in np.unique(commands):
            rows = np.nonzero(commands == k)[0]
            raw = self.branches[int(k)].forward(features[rows], sides=[speed[rows]])
            out = squash(raw)
            actions[rows] = out
            self._cache.append((int(k), rows, out))
        self._features = features
        return actions

    @property
    def active_branches(self) -> list[int]:
        """Branches evaluated by the last forward pass."""
        return [k for k, _, _ in self._cache]

    def backward_masked(self, output_grad: np.ndarray) -> None:
        """Accumulate gradients; each branch only sees grads of its own samples."""
        output_grad = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
        feature_grad = np.zeros_like(self._features)
        speed_grad = np.zeros((len(self._features), self.speed_encoder.out_dim))
        for k, rows, out in self._cache:
            branch = self.branches[k]
            raw_grad = squash_backward(out, output_grad[rows])
            feature_grad[rows] = branch.backward(self._features[rows], raw_grad)
            speed_grad[rows] = branch.side_grads[0]
        self._encode_backward(feature_grad, speed_grad)

    def act(self, obs: Observation) -> ActionTriple:
        raster = obs.flat_raster()[None, :]
        action = self.forward(raster, np.array([obs.speed_kmh]), np.array([gate(obs.command)]))[0]
        return ActionTriple.from_array(action)

    def copy(self) -> "GatedActor":
        twin = GatedActor.__new__(GatedActor)
        twin.cfg = self.cfg
        twin.speed_scale_kmh = self.speed_scale_kmh
        twin.trunk = self.trunk.copy()
        twin.speed_encoder = self.speed_encoder.copy()
        twin.branches = [branch.copy() for branch in self.branches]
        twin._cache = []
        return twin

    def save(self, path: Path, role: str = ROLE_ACTOR, config_hash: str = "") -> None:
        save_checkpoint(path, self.networks(), role, config_hash)

    def load(self, path: Path, role: Optional[str] = ROLE_ACTOR) -> Checkpoint:
        return load_into(path, self.networks(), role)


def actor_forward(actor: GatedActor, obs: Observation) -> ActionTriple:
    return actor.act(obs)


class Critic(_Encoder):
    """Q(o, a): trunk and speed encoder feed a head that also sees command and action."""

    def __init__(self, raster_size: int, cfg: Optional[PolicyConfig] = None, rng: Optional[np.random.Generator] = None):
        cfg = cfg or PolicyConfig()
        self.cfg = cfg
        self.speed_scale_kmh = cfg.speed_scale_kmh
        self.trunk = Network(_relu_stack(raster_size, cfg.trunk_hidden), rng=rng, name="trunk")
        self.speed_encoder = Network(_relu_stack(1, [cfg.speed_hidden]), rng=rng, name="speed")
        features = self.trunk.out_dim
        joined = features + cfg.speed_hidden
        self.q_head = Network(
            [concat(features, cfg.speed_hidden), concat(joined, NUM_COMMANDS + ACTION_DIM)]
            + _relu_stack(joined + NUM_COMMANDS + ACTION_DIM, [cfg.critic_hidden])
            + [affine(cfg.critic_hidden, 1)],
            rng=rng,
            name="q_head",
        )

    @classmethod
    def create(cls, raster_size: int, cfg: Optional[PolicyConfig] = None) -> "Critic":
        cfg = cfg or PolicyConfig()
        return cls(raster_size, cfg, rng=np.random.default_rng([cfg.seed, 1]))

    def networks(self) -> dict[str, Network]:
        return {"trunk": self.trunk, "speed": self.speed_encoder, "q_head": self.q_head}

    def parameters(self) -> list[ParamTensor]:
        return [p for net in self.networks().values() for p in net.parameters()]

    def zero_grad(self) -> None:
        for net in self.networks().values():
            net.zero_grad()

    def zero_head(self) -> None:
        index = max(self.q_head.weights)
        for param in self.q_head.weights[index]:
            param.values[:] = 0.0

    def forward(
        self,
        rasters: np.ndarray,
        speeds_kmh: np.ndarray,
        commands: np.ndarray,
        actions: np.ndarray,
    ) -> np.ndarray:
        """Q values, shape (n,)."""
        features, speed = self._encode(rasters, speeds_kmh)
        commands = np.asarray(commands, dtype=np.int64).reshape(-1)
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if actions.shape != (len(features), ACTION_DIM) or len(commands) != len(features):
            raise ShapeError(
                f"critic batch mismatch: {len(features)} rasters, {len(commands)} commands, actions {actions.shape}"
            )
        one_hot = np.eye(NUM_COMMANDS)[commands]
        self._features = features
        return self.q_head.forward(features, sides=[speed, np.concatenate([one_hot, actions], axis=1)])[:, 0]

    def backward(self, q_grad: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads for dL/dQ = ``q_grad``; returns dQ/da-weighted grads (n, 3)."""
        q_grad = np.asarray(q_grad, dtype=np.float64).reshape(-1, 1)
        feature_grad = self.q_head.backward(self._features, q_grad)
        speed_grad, joint_grad = self.q_head.side_grads
        self._encode_backward(feature_grad, speed_grad)
        return joint_grad[:, NUM_COMMANDS:]

    def action_gradient(
        self,
        rasters: np.ndarray,
        speeds_kmh: np.ndarray,
        commands: np.ndarray,
        actions: np.ndarray,
    ) -> np.ndarray:
        """dQ/da per sample; parameter grads touched on the way are cleared."""
        self.forward(rasters, speeds_kmh, commands, actions)
        grad = self.backward(np.ones(len(np.atleast_2d(actions))))
        self.zero_grad()
        return grad

    def value(self, obs: Observation, action: ActionTriple) -> float:
        return float(
            self.forward(
                obs.flat_raster()[None, :],
                np.array([obs.speed_kmh]),
                np.array([gate(obs.command)]),
                action.as_array()[None, :],
            )[0]
        )

    def copy(self) -> "Critic":
        twin = Critic.__new__(Critic)
        twin.cfg = self.cfg
        twin.speed_scale_kmh = self.speed_scale_kmh
        twin.trunk = self.trunk.copy()
        twin.speed_encoder = self.speed_encoder.copy()
        twin.q_head = self.q_head.copy()
        return twin

    def save(self, path: Path, role: str = ROLE_CRITIC, config_hash: str = "") -> None:
        save_checkpoint(path, self.networks(), role, config_hash)

    def load(self, path: Path, role: Optional[str] = ROLE_CRITIC) -> Checkpoint:
        return load_into(path, self.networks(), role)


def critic_forward(critic: Critic, obs: Observation, action: ActionTriple) -> float:
    return critic.value(obs, action)


def parameter_distance(a: Sequence[ParamTensor], b: Sequence[ParamTensor]) -> float:
    """Euclidean distance between two parameter lists of equal shapes."""
    if len(a) != len(b) or any(p.shape != q.shape for p, q in zip(a, b)):
        raise ShapeError("parameter lists differ in structure")
    return float(np.sqrt(sum(np.sum((p.values - q.values) ** 2) for p, q in zip(a, b))))


class ActorOptimizer:
    """One Adam state per actor network; only branches used by the last batch are stepped."""

    def __init__(self, actor: GatedActor):
        self.actor = actor
        self.shared = Adam(actor.trunk.parameters() + actor.speed_encoder.parameters())
        self.branches = [Adam(branch.parameters()) for branch in actor.branches]

    def grad_norm(self) -> float:
        squares = self.shared.grad_norm() ** 2 + sum(opt.grad_norm() ** 2 for opt in self.branches)
        return float(np.sqrt(squares))

    def step(self, lr: float) -> None:
        self.shared.step(lr)
        for k in self.actor.active_branches:
            self.branches[k].step(lr)
        self.actor.zero_grad()
