"""Stage 1: branch-masked imitation learning on expert demonstrations."""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.expert.dataset import DemoDataset
from src.nn.exceptions import ShapeError
from src.policy.networks import ROLE_ACTOR, ActorOptimizer, GatedActor, PolicyConfig
from src.sim.data_models import COMMAND_ORDER, ActionTriple, Command
from src.training.exceptions import MissingBranchDataError
from src.utils.files import atomic_write_text
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

REPORT_COLUMNS = ("epoch", "split", "command", "loss")
SPLITS = ("train", "validation")


class ILConfig(BaseModel):
    """Imitation stage hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(60, ge=0)
    batch_size: int = Field(128, gt=0)
    lr: float = Field(1e-4, gt=0.0)
    # Cosine schedule floor reached on the last update.
    lr_final: float = Field(1e-5, ge=0.0)
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    validation_fraction: float = Field(0.1, gt=0.0, lt=0.5)
    require_all_branches: bool = True

    @field_validator("loss_weights")
    @classmethod
    def _weights_non_negative(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(w < 0 for w in value):
            raise ValueError(f"loss weights must be >= 0, got {value}")
        return value


@dataclass
class ReportRow:
    epoch: int
    split: str
    command: Command
    loss: float


@dataclass
class ILResult:
    """Best-validation actor and the per-epoch loss report."""

    actor: GatedActor
    report: list[ReportRow] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf


def il_loss(pred: ActionTriple, target: ActionTriple, weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> float:
    """Weighted squared error over steer, throttle and brake."""
    residual = pred.as_array() - target.as_array()
    return float(np.dot(np.asarray(weights), residual**2))


def batch_losses(pred: np.ndarray, target: np.ndarray, weights: tuple[float, float, float]) -> np.ndarray:
    """Per-sample weighted squared error, shape (n,)."""
    return ((pred - target) ** 2) @ np.asarray(weights, dtype=np.float64)


def cosine_lr(step: int, total: int, lr: float, lr_final: float) -> float:
    """Cosine decay from ``lr`` at step 0 to ``lr_final`` at step ``total - 1``."""
    if total <= 1:
        return lr
    progress = min(1.0, step / (total - 1))
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + math.cos(math.pi * progress))


def split_indices(dataset: DemoDataset, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-command stratified (train, validation) split."""
    commands = dataset.commands
    train, validation = [], []
    for command in COMMAND_ORDER:
        rows = rng.permutation(np.nonzero(commands == command.index)[0])
        held = int(math.floor(len(rows) * fraction))
        validation.append(rows[:held])
        train.append(rows[held:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(validation))


def _inputs(dataset: DemoDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rasters = dataset.rasters.reshape(len(dataset), -1).astype(np.float64)
    return rasters, dataset.speeds * 3.6, dataset.commands, dataset.labels.astype(np.float64)


def evaluate_split(
    actor: GatedActor,
    inputs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    indices: np.ndarray,
    weights: tuple[float, float, float],
    batch_size: int = 1024,
) -> dict[Command, float]:
    """Mean loss per command over ``indices``; NaN for commands without samples."""
    rasters, speeds, commands, labels = inputs
    totals = np.zeros(len(COMMAND_ORDER))
    counts = np.zeros(len(COMMAND_ORDER))
    for start in range(0, len(indices), batch_size):
        rows = indices[start : start + batch_size]
        pred = actor.forward(rasters[rows], speeds[rows], commands[rows])
        losses = batch_losses(pred, labels[rows], weights)
        np.add.at(totals, commands[rows], losses)
        np.add.at(counts, commands[rows], 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, totals / np.maximum(counts, 1.0), np.nan)
    return {command: float(means[command.index]) for command in COMMAND_ORDER}


def _overall(per_command: dict[Command, float], counts: dict[Command, int]) -> float:
    total = sum(counts.values())
    if total == 0:
        return math.nan
    return sum(per_command[c] * counts[c] for c in COMMAND_ORDER if counts[c]) / total


def train_il(
    dataset: DemoDataset,
    cfg: Optional[ILConfig] = None,
    policy_cfg: Optional[PolicyConfig] = None,
    actor: Optional[GatedActor] = None,
) -> ILResult:
    """Fit a gated actor to the expert labels with mini-batch Adam.

    Each sample only trains the branch its command selects. The returned
    actor is the epoch with the lowest validation loss (training loss when
    the validation split is empty).

    Raises:
        MissingBranchDataError: if a command has no samples and ``require_all_branches`` is set
        ShapeError: if ``actor`` does not match the dataset raster size
    """
    cfg = cfg or ILConfig()
    counts = dataset.command_counts()
    if len(dataset) == 0:
        raise MissingBranchDataError("demonstration dataset is empty")
    missing = [c.value for c in COMMAND_ORDER if counts[c] == 0]
    if missing and cfg.require_all_branches:
        raise MissingBranchDataError(f"no demonstrations for branch(es): {', '.join(missing)}")

    raster_size = int(np.prod(dataset.raster_shape))
    if actor is None:
        actor = GatedActor.create(raster_size, policy_cfg)
    elif actor.trunk.in_dim != raster_size:
        raise ShapeError(f"actor expects {actor.trunk.in_dim} raster cells, dataset has {raster_size}")

    rng = np.random.default_rng([cfg.seed, 2])
    train_idx, val_idx = split_indices(dataset, cfg.validation_fraction, rng)
    inputs = _inputs(dataset)
    rasters, speeds, commands, labels = inputs
    train_counts = _split_counts(commands, train_idx)
    val_counts = _split_counts(commands, val_idx)

    optimizer = ActorOptimizer(actor)
    batches_per_epoch = math.ceil(len(train_idx) / cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    result = ILResult(actor=actor.copy())
    step = 0
    logger.info(
        f"Imitation training on {len(train_idx)} samples ({len(val_idx)} held out), "
        f"{cfg.epochs} epochs x {batches_per_epoch} batches"
    )

    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            pred = actor.forward(rasters[rows], speeds[rows], commands[rows])
            grad = 2.0 * (pred - labels[rows]) * np.asarray(cfg.loss_weights) / len(rows)
            actor.backward_masked(grad)
            optimizer.step(cosine_lr(step, total_steps, cfg.lr, cfg.lr_final))
            step += 1

        train_loss = evaluate_split(actor, inputs, train_idx, cfg.loss_weights)
        val_loss = evaluate_split(actor, inputs, val_idx, cfg.loss_weights)
        for split, losses in zip(SPLITS, (train_loss, val_loss)):
            result.report.extend(ReportRow(epoch, split, c, losses[c]) for c in COMMAND_ORDER)

        score = _overall(val_loss, val_counts) if len(val_idx) else _overall(train_loss, train_counts)
        if score < result.best_loss:
            result.best_loss = score
            result.best_epoch = epoch
            result.actor = actor.copy()
        logger.info(
            f"Epoch {epoch + 1}/{cfg.epochs}: train {_overall(train_loss, train_counts):.5f} "
            f"validation {_overall(val_loss, val_counts):.5f}"
        )

    if cfg.epochs:
        logger.info(f"Best epoch {result.best_epoch + 1} with loss {result.best_loss:.5f}")
    return result


def _split_counts(commands: np.ndarray, indices: np.ndarray) -> dict[Command, int]:
    counts = np.bincount(commands[indices], minlength=len(COMMAND_ORDER))
    return {c: int(counts[c.index]) for c in COMMAND_ORDER}


def format_report(rows: list[ReportRow], config_hash: str = "") -> str:
    """CSV text; a leading comment line carries the config hash."""
    buffer = io.StringIO()
    buffer.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([row.epoch, row.split, row.command.value, repr(float(row.loss))])
    return buffer.getvalue()


def write_report(rows: list[ReportRow], path: Path, config_hash: str = "") -> None:
    atomic_write_text(Path(path), format_report(rows, config_hash))
    logger.info(f"Wrote training report ({len(rows)} rows) to {path}")


def save_il_result(result: ILResult, checkpoint_path: Path, report_path: Path, config_hash: str = "") -> None:
    result.actor.save(checkpoint_path, ROLE_ACTOR, config_hash)
    write_report(result.report, report_path, config_hash)
