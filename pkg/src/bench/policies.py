"""Policies the harness can drive: a trained actor, the scripted expert, or a constant action."""

from pathlib import Path
from typing import Optional, Protocol

from src.bench.exceptions import PolicyMismatchError
from src.expert.controller import expert_action
from src.expert.data_models import ExpertConfig
from src.expert.exceptions import ExpertAbortError
from src.nn.checkpoint import read_checkpoint
from src.policy.networks import ROLE_ACTOR, ROLE_ACTOR_TARGET, GatedActor, PolicyConfig
from src.sim.data_models import ActionTriple, Observation
from src.sim.env import TownEnv

FULL_BRAKE = ActionTriple(steer=0.0, throttle=0.0, brake=1.0)


class Policy(Protocol):
    name: str

    def check(self, env: TownEnv) -> None: ...

    def act(self, obs: Observation, env: TownEnv) -> ActionTriple: ...


class ActorPolicy:
    """Greedy gated actor."""

    def __init__(self, actor: GatedActor, name: str = "actor"):
        self.actor = actor
        self.name = name

    @classmethod
    def from_checkpoint(cls, path: Path, policy_cfg: Optional[PolicyConfig] = None) -> "ActorPolicy":
        """Load an actor (or actor-target) checkpoint; the raster size comes from the trunk."""
        checkpoint = read_checkpoint(path)
        trunk = checkpoint.networks.get("trunk")
        if trunk is None:
            raise PolicyMismatchError(f"{path} holds no actor trunk")
        role = checkpoint.role if checkpoint.role in (ROLE_ACTOR, ROLE_ACTOR_TARGET) else ROLE_ACTOR
        actor = GatedActor.create(trunk.in_dim, policy_cfg)
        actor.load(path, role)
        return cls(actor, name=Path(path).stem)

    def check(self, env: TownEnv) -> None:
        if self.actor.trunk.in_dim != env.cfg.raster_size:
            raise PolicyMismatchError(
                f"policy expects {self.actor.trunk.in_dim} raster cells, environment renders {env.cfg.raster_size}"
            )

    def act(self, obs: Observation, env: TownEnv) -> ActionTriple:
        return self.actor.act(obs)


class ExpertPolicy:
    """Scripted expert reading privileged simulator state."""

    name = "expert"

    def __init__(self, cfg: Optional[ExpertConfig] = None):
        self.cfg = cfg or ExpertConfig()

    def check(self, env: TownEnv) -> None:
        pass

    def act(self, obs: Observation, env: TownEnv) -> ActionTriple:
        try:
            return expert_action(env.vehicle, env.route, env.obstacles, self.cfg, env.cfg, progress=env.progress)
        except ExpertAbortError:
            return FULL_BRAKE


class ConstantPolicy:
    def __init__(self, action: ActionTriple = FULL_BRAKE, name: str = "constant"):
        self.action = action
        self.name = name

    def check(self, env: TownEnv) -> None:
        pass

    def act(self, obs: Observation, env: TownEnv) -> ActionTriple:
        return self.action
