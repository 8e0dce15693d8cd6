"""Command-line entry point for the pipeline.

Each subcommand reads one JSON config (``--config``; defaults when omitted)
and writes its artifacts under the config's output directory.
"""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from src.bench.ablation import run_ablation_grid, write_ablation
from src.bench.data_models import BenchConfig
from src.bench.episode_log import replay_episode
from src.bench.harness import SUITES, build_suite, run_benchmark, run_regime_breakdown, write_results
from src.bench.policies import ActorPolicy, ExpertPolicy, Policy
from src.config.config_manager import ConfigManager
from src.config.exceptions import ConfigValidationError
from src.config.settings import EVAL_WORKERS
from src.expert.dataset import load_dataset, save_dataset
from src.expert.demos import generate_demos
from src.nn.exceptions import ShapeError
from src.sim.tasks import TaskKind
from src.training.il_trainer import save_il_result, train_il
from src.training.rl_trainer import default_env_factory, save_rl_result, train_cirl
from src.utils.exceptions import CirlError, NumericError
from src.utils.files import file_sha256
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

DEMOS_FILE = "demos.bin"
IL_CHECKPOINT = "il_actor.ckpt"
IL_REPORT = "il_report.csv"
RL_DIR = "rl"
RL_SCRATCH_DIR = "rl_scratch"
EVAL_DIR = "eval"


def cmd_gen_demos(manager: ConfigManager, out: Optional[Path] = None, workers: int = 1) -> Path:
    cfg = manager.cfg
    out = Path(out) if out else manager.artifact(DEMOS_FILE)
    dataset = generate_demos(cfg.expert, cfg.sim, config_hash=manager.hash, workers=workers)
    save_dataset(dataset, out)
    manager.write_provenance(
        "demos.provenance.json",
        artifact=str(out),
        sha256=file_sha256(out),
        samples=len(dataset),
        command_counts={c.value: n for c, n in dataset.command_counts().items()},
    )
    return out


def cmd_train_il(manager: ConfigManager, dataset_path: Optional[Path] = None, out: Optional[Path] = None) -> Path:
    cfg = manager.cfg
    dataset_path = Path(dataset_path) if dataset_path else manager.artifact(DEMOS_FILE)
    dataset = load_dataset(dataset_path)
    if tuple(dataset.raster_shape) != (cfg.sim.raster_height, cfg.sim.raster_width):
        raise ShapeError(
            f"dataset rasters are {dataset.raster_shape}, config renders "
            f"{(cfg.sim.raster_height, cfg.sim.raster_width)}"
        )
    result = train_il(dataset, cfg.il, cfg.policy)
    out = Path(out) if out else manager.artifact(IL_CHECKPOINT)
    save_il_result(result, out, out.with_name(IL_REPORT), manager.hash)
    manager.write_provenance(
        "il.provenance.json",
        artifact=str(out),
        dataset=str(dataset_path),
        dataset_sha256=file_sha256(dataset_path),
        best_epoch=result.best_epoch,
    )
    return out


def cmd_train_rl(
    manager: ConfigManager,
    checkpoint: Optional[Path] = None,
    il_only: bool = False,
    demos_path: Optional[Path] = None,
    out_name: str = RL_DIR,
) -> Optional[Path]:
    """DDPG stage; without ``checkpoint`` the actor starts from scratch."""
    cfg = manager.cfg
    if il_only:
        logger.info(f"IL-only baseline: stage-1 checkpoint {checkpoint} is the final policy")
        return checkpoint
    demos = None
    if cfg.rl.demo_replay:
        demos = load_dataset(Path(demos_path) if demos_path else manager.artifact(DEMOS_FILE))
    result = train_cirl(default_env_factory(cfg.sim), checkpoint, cfg.rl, cfg.reward, cfg.policy, demos)
    paths = save_rl_result(result, manager.artifact(out_name), manager.hash)
    manager.write_provenance(
        f"{out_name}.provenance.json",
        pretrained=str(checkpoint) if checkpoint else None,
        steps=result.steps,
        episodes=len(result.metrics),
        checkpoints={role: str(path) for role, path in paths.items()},
    )
    return paths["actor"]


def _policy(manager: ConfigManager, checkpoint: Optional[Path], expert: bool) -> Policy:
    if expert:
        return ExpertPolicy(manager.cfg.expert)
    if checkpoint is None:
        raise ConfigValidationError("evaluate needs --checkpoint or --expert")
    return ActorPolicy.from_checkpoint(Path(checkpoint), manager.cfg.policy)


def cmd_evaluate(
    manager: ConfigManager,
    checkpoint: Optional[Path] = None,
    suite: Optional[str] = None,
    expert: bool = False,
    condition: Optional[str] = None,
    task: Optional[str] = None,
    workers: int = 1,
    label: str = "",
) -> list[Path]:
    """Benchmark one policy; ``suite`` also accepts "ablation" and "regimes".

    ``label`` tags result files so several policies can share one output directory.
    """
    cfg = manager.cfg
    overrides = {k: v for k, v in (("suite", suite), ("condition", condition), ("task", task)) if v}
    if overrides.get("suite") in ("ablation", "regimes"):
        overrides.pop("suite")
    try:
        bench = BenchConfig.model_validate({**cfg.bench.model_dump(), **overrides})
    except ValidationError as e:
        raise ConfigValidationError(str(e)) from e
    out_dir = manager.artifact(EVAL_DIR)

    if suite == "ablation":
        demos_path = manager.artifact(DEMOS_FILE)
        rows = run_ablation_grid(
            bench.ablation_variants,
            pretrained=checkpoint,
            rl_cfg=cfg.rl,
            reward_cfg=cfg.reward,
            bench_cfg=bench,
            sim=cfg.sim,
            policy_cfg=cfg.policy,
            demos=load_dataset(demos_path) if demos_path.exists() else None,
            workers=workers,
        )
        return list(write_ablation(rows, out_dir, manager.hash))

    suffix = f"_{label}" if label else ""
    policy = _policy(manager, checkpoint, expert)
    if suite == "regimes":
        result = run_regime_breakdown(policy, bench, cfg.sim, cfg.reward, workers, manager.hash)
        return list(write_results(result, out_dir, f"regimes{suffix}", manager.hash))

    cells = build_suite(bench)
    result = run_benchmark(
        cells, policy, bench, cfg.sim, cfg.reward, workers, log_dir=out_dir / f"episodes{suffix}", config_hash=manager.hash
    )
    paths = list(write_results(result, out_dir, f"benchmark_{bench.suite}{suffix}", manager.hash))
    print(Path(paths[1]).read_text(), end="")
    return paths


def cmd_replay(log_path: Path) -> int:
    """Print the per-step trace; returns the number of reward mismatches."""
    trace = replay_episode(Path(log_path))
    for line in trace.lines:
        print(line)
    if trace.mismatches:
        logger.warning(f"{trace.mismatches} steps disagree with the recomputed reward")
    return trace.mismatches


PIPELINE_POLICIES = ("cirl", "il-only", "ddpg-scratch")


def cmd_pipeline(manager: ConfigManager, workers: int = 1) -> dict[str, list[Path]]:
    """Run every stage, then benchmark CIRL, the IL-only actor and DDPG from scratch.

    Returns result paths per policy in ``PIPELINE_POLICIES`` order.
    """
    demos = cmd_gen_demos(manager, workers=workers)
    il_checkpoint = cmd_train_il(manager, demos)
    actors = {
        "cirl": cmd_train_rl(manager, il_checkpoint, demos_path=demos),
        "il-only": cmd_train_rl(manager, il_checkpoint, il_only=True),
        "ddpg-scratch": cmd_train_rl(manager, None, demos_path=demos, out_name=RL_SCRATCH_DIR),
    }
    results = {}
    for name in PIPELINE_POLICIES:
        print(f"== {name} ==")
        results[name] = cmd_evaluate(manager, actors[name], workers=workers, label=name)
    return results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cirl", description="Imitation-pretrained DDPG driving pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", type=Path, default=None, help="JSON config file (defaults when omitted).")
        p.add_argument("--workers", type=int, default=EVAL_WORKERS, help="Worker processes for rollouts.")
        return p

    p = with_config(sub.add_parser("gen-demos", help="Record balanced expert demonstrations."))
    p.add_argument("--out", type=Path, default=None)

    p = with_config(sub.add_parser("train-il", help="Imitation stage."))
    p.add_argument("--dataset", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)

    p = with_config(sub.add_parser("train-rl", help="DDPG stage."))
    p.add_argument("--checkpoint", type=Path, default=None, help="Stage-1 actor; omit to train from scratch.")
    p.add_argument("--il-only", action="store_true", help="Skip this stage and keep the stage-1 actor.")
    p.add_argument("--demos", type=Path, default=None)

    p = with_config(sub.add_parser("evaluate", help="Run a benchmark suite."))
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--expert", action="store_true", help="Evaluate the scripted expert instead of a checkpoint.")
    p.add_argument("--suite", choices=[*SUITES, "ablation", "regimes"], default=None)
    p.add_argument("--condition", default=None)
    p.add_argument("--task", choices=[t.value for t in TaskKind], default=None)

    p = sub.add_parser("replay", help="Print a per-step trace of an episode log.")
    p.add_argument("log", type=Path)

    with_config(sub.add_parser("pipeline", help="gen-demos, train-il, train-rl and evaluate in one run."))
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "replay":
        cmd_replay(args.log)
        return 0

    manager = ConfigManager(args.config)
    logger.info(f"{args.command}: config hash {manager.hash}")
    if args.command == "gen-demos":
        cmd_gen_demos(manager, args.out, args.workers)
    elif args.command == "train-il":
        cmd_train_il(manager, args.dataset, args.out)
    elif args.command == "train-rl":
        cmd_train_rl(manager, args.checkpoint, args.il_only, args.demos)
    elif args.command == "evaluate":
        cmd_evaluate(manager, args.checkpoint, args.suite, args.expert, args.condition, args.task, args.workers)
    elif args.command == "pipeline":
        cmd_pipeline(manager, args.workers)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except CirlError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=isinstance(e, NumericError))
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
