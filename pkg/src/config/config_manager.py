"""Pipeline configuration stored in one JSON file."""

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.bench.data_models import BenchConfig
from src.config.exceptions import ConfigNotFoundError, ConfigValidationError
from src.config.settings import OUTPUT_DIR
from src.expert.data_models import ExpertConfig
from src.policy.networks import PolicyConfig
from src.reward.reward import RewardConfig
from src.sim.data_models import SimConfig
from src.training.il_trainer import ILConfig
from src.training.rl_trainer import RLConfig
from src.utils.files import atomic_write_json
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


class GlobalConfig(BaseModel):
    """Every section of the pipeline; ``{}`` is a complete, valid config."""

    model_config = ConfigDict(extra="forbid")

    sim: SimConfig = Field(default_factory=SimConfig)
    reward: RewardConfig = Field(default_factory=RewardConfig)
    expert: ExpertConfig = Field(default_factory=ExpertConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    il: ILConfig = Field(default_factory=ILConfig)
    rl: RLConfig = Field(default_factory=RLConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    seed: int = 0
    output_dir: Path = OUTPUT_DIR

    def seeded(self) -> "GlobalConfig":
        """Copy with the top-level seed pushed into sections that leave theirs unset."""
        data = self.model_dump(mode="json")
        for section in ("expert", "policy", "il", "rl", "bench"):
            if "seed" not in getattr(self, section).model_fields_set:
                data[section]["seed"] = self.seed
        return GlobalConfig.model_validate(data)


def canonical_json(cfg: GlobalConfig) -> str:
    # output_dir is where artifacts go, not what produces them
    data = cfg.model_dump(mode="json", exclude={"output_dir"})
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: GlobalConfig) -> str:
    """First 16 hex chars of the SHA-256 of the canonical JSON."""
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()[:16]


def parse_config(data: Any, source: str = "<config>") -> GlobalConfig:
    try:
        return GlobalConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError(f"{source}: {e}") from e


def load_config(path: Path) -> GlobalConfig:
    """Read and validate a JSON config file.

    Raises:
        ConfigNotFoundError: if the file does not exist
        ConfigValidationError: if it is not JSON or fails validation
    """
    path = Path(path)
    if not path.exists():
        raise ConfigNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"{path}: invalid JSON: {e}") from e
    cfg = parse_config(data, str(path))
    logger.debug(f"Loaded config {path} (hash {config_hash(cfg)})")
    return cfg


def save_config(cfg: GlobalConfig, path: Path) -> None:
    atomic_write_json(Path(path), cfg.model_dump(mode="json"))


class ConfigManager:
    """A config file plus the output directory layout derived from it."""

    def __init__(self, path: Path | None = None, cfg: GlobalConfig | None = None):
        self.path = Path(path) if path is not None else None
        if cfg is None:
            cfg = load_config(self.path) if self.path is not None else GlobalConfig()
        self.cfg = cfg.seeded()
        self.hash = config_hash(self.cfg)

    @property
    def output_dir(self) -> Path:
        return Path(self.cfg.output_dir)

    def artifact(self, name: str) -> Path:
        return self.output_dir / name

    def provenance(self, **extra: Any) -> dict[str, Any]:
        record = {
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "config_path": str(self.path) if self.path else None,
        }
        record.update(extra)
        return record

    def write_provenance(self, name: str, **extra: Any) -> Path:
        path = self.artifact(name)
        atomic_write_json(path, self.provenance(**extra))
        return path
