"""Ablation grid: retrain with reward/RL deltas and compare on one task."""

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from src.bench.data_models import BenchConfig, BenchmarkResult, ConditionCell
from src.bench.exceptions import UnknownVariantError
from src.bench.harness import CONDITIONS, STANDARD_CONDITIONS, run_benchmark
from src.bench.policies import ActorPolicy
from src.expert.dataset import DemoDataset
from src.policy.networks import GatedActor, PolicyConfig
from src.reward.reward import DEFAULT_REWARD, RewardConfig
from src.sim.data_models import SimConfig
from src.training.rl_trainer import RLConfig, default_env_factory, train_cirl
from src.utils.files import atomic_write_text
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class Variant:
    """Named deltas applied on top of the default reward and RL configs."""

    name: str
    reward: dict[str, Any]
    rl: dict[str, Any]


VARIANTS: dict[str, Variant] = {
    v.name: v
    for v in (
        Variant("default", {}, {}),
        Variant("w/o steer reward", {"enable_steer": False}, {}),
        Variant("add replay", {}, {"demo_replay": True}),
        Variant("more steps", {}, {"total_steps": 300_000}),
        Variant("reward x10", {"scale": 10.0}, {}),
        Variant("reward/10", {"scale": 0.1}, {}),
        Variant("w/o speed", {"enable_speed": False}, {}),
        Variant("w/o offroad&coll", {"enable_offroad_collision": False}, {}),
    )
}
ALIASES = {
    "wo-steer-reward": "w/o steer reward",
    "add-replay": "add replay",
    "more-steps": "more steps",
    "reward×10": "reward x10",
    "reward-x10": "reward x10",
    "reward-div10": "reward/10",
    "wo-speed": "w/o speed",
    "wo-offroad-coll": "w/o offroad&coll",
}


def resolve_variant(key: str) -> Variant:
    name = ALIASES.get(key, key)
    if name not in VARIANTS:
        raise UnknownVariantError(f"unknown ablation variant {key!r}; known: {list(VARIANTS)}")
    return VARIANTS[name]


def apply_variant(variant: Variant, reward_cfg: RewardConfig, rl_cfg: RLConfig) -> tuple[RewardConfig, RLConfig]:
    """Validated copies of both configs with the variant's deltas."""
    reward = RewardConfig.model_validate({**reward_cfg.model_dump(), **variant.reward})
    rl = RLConfig.model_validate({**rl_cfg.model_dump(), **variant.rl})
    return reward, rl


@dataclass
class AblationRow:
    variant: str
    result: BenchmarkResult


def run_ablation_grid(
    variants: Sequence[str],
    pretrained: Optional[Path | GatedActor],
    rl_cfg: Optional[RLConfig] = None,
    reward_cfg: RewardConfig = DEFAULT_REWARD,
    bench_cfg: Optional[BenchConfig] = None,
    sim: Optional[SimConfig] = None,
    policy_cfg: Optional[PolicyConfig] = None,
    demos: Optional[DemoDataset] = None,
    workers: int = 1,
) -> list[AblationRow]:
    """Train every variant from the same seed and evaluate it on the ablation task.

    Raises:
        UnknownVariantError: before any training, if a variant key is unknown
    """
    resolved = [resolve_variant(key) for key in variants]
    rl_cfg = rl_cfg or RLConfig()
    bench_cfg = bench_cfg or BenchConfig()
    sim = sim or SimConfig()
    cells = [
        ConditionCell(condition=CONDITIONS[name], task=bench_cfg.ablation_task, episodes=bench_cfg.episodes_per_cell)
        for name in STANDARD_CONDITIONS
    ]
    rows = []
    for variant in resolved:
        reward, rl = apply_variant(variant, reward_cfg, rl_cfg)
        logger.info(f"Ablation variant {variant.name!r}: training {rl.total_steps} steps")
        trained = train_cirl(default_env_factory(sim), pretrained, rl, reward, policy_cfg, demos)
        result = run_benchmark(cells, ActorPolicy(trained.actor, variant.name), bench_cfg, sim, reward, workers)
        rows.append(AblationRow(variant.name, result))
    return rows


def format_ablation(rows: Sequence[AblationRow], config_hash: str = "") -> tuple[str, str]:
    """(CSV text, aligned text table) with one row per variant."""
    conditions = list(STANDARD_CONDITIONS)
    buffer = io.StringIO()
    buffer.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["variant", *conditions])
    first = max([len("Variant")] + [len(r.variant) for r in rows])
    widths = [max(len(c), 6) for c in conditions]
    header = "Variant".ljust(first) + "  " + "  ".join(c.rjust(w) for c, w in zip(conditions, widths))
    lines = [f"# config_hash={config_hash}", header, "-" * len(header)]
    for row in rows:
        pcts = []
        for name in conditions:
            cell = next(c for c in row.result.cells if c.cell.condition.name == name)
            pcts.append(cell.pct)
        writer.writerow([row.variant, *(f"{p:.1f}" for p in pcts)])
        lines.append(row.variant.ljust(first) + "  " + "  ".join(f"{p:.0f}".rjust(w) for p, w in zip(pcts, widths)))
    return buffer.getvalue(), "\n".join(lines) + "\n"


def write_ablation(rows: Sequence[AblationRow], out_dir: Path, config_hash: str = "") -> tuple[Path, Path]:
    csv_text, table = format_ablation(rows, config_hash)
    csv_path, table_path = Path(out_dir) / "ablation.csv", Path(out_dir) / "ablation.txt"
    atomic_write_text(csv_path, csv_text)
    atomic_write_text(table_path, table)
    logger.info(f"Wrote ablation grid to {csv_path}")
    return csv_path, table_path
