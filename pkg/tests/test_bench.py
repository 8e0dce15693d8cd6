"""Tests for the benchmark harness, episode logs and the ablation grid."""
import json

import numpy as np
import pytest

from src.bench.ablation import ALIASES, VARIANTS, AblationRow, apply_variant, format_ablation, resolve_variant, run_ablation_grid
from src.bench.data_models import INFRACTION_KINDS, BenchConfig, BenchmarkResult, CellResult, ConditionCell, EpisodeResult
from src.bench.episode_log import read_episode_log, replay_episode
from src.bench.exceptions import EpisodeLogError, PolicyMismatchError, UnknownSuiteError, UnknownVariantError
from src.bench.harness import (
    CONDITIONS,
    STANDARD_CONDITIONS,
    build_suite,
    cell_episode_spec,
    cell_seed,
    format_results_csv,
    format_table,
    run_benchmark,
    run_episode,
    write_results,
)
from src.bench.policies import ActorPolicy, ConstantPolicy, ExpertPolicy
from src.nn.checkpoint import CheckpointError, save_network
from src.reward.reward import RewardConfig
from src.sim.data_models import ActionTriple, EpisodeSpec, EpisodeStatus, LanePosition
from src.sim.env import TownEnv
from src.sim.tasks import TaskKind
from src.training.rl_trainer import RLConfig


def fake_cell(condition="training", task=TaskKind.STRAIGHT, successes=0, episodes=25):
    cell = ConditionCell(condition=CONDITIONS[condition], task=task, episodes=episodes)
    results = [
        EpisodeResult(
            cell_id=cell.cell_id,
            index=i,
            seed=i,
            status=EpisodeStatus.GOAL_REACHED if i < successes else EpisodeStatus.COLLISION,
            steps=10,
            episode_return=0.0,
        )
        for i in range(episodes)
    ]
    return CellResult(cell, results)


@pytest.fixture
def swerve_spec():
    """Northbound start where a hard right swerve hits a building."""
    return EpisodeSpec(map_name="town-a", start=LanePosition(lane=2, s=20.0), goal=LanePosition(lane=2, s=60.0), start_speed=8.0)


class TestSeedsAndSuites:
    """Test cell seeding and suite construction."""

    def test_cell_seed_stable(self):
        assert cell_seed(0, "town-a/training/main/Straight", 3) == cell_seed(0, "town-a/training/main/Straight", 3)

    def test_cell_seed_varies(self):
        base = cell_seed(0, "town-a/training/main/Straight", 0)
        assert cell_seed(0, "town-a/training/main/Straight", 1) != base
        assert cell_seed(0, "town-b/training/main/Straight", 0) != base
        assert cell_seed(1, "town-a/training/main/Straight", 0) != base

    def test_standard_suite(self):
        cells = build_suite(BenchConfig())
        assert len(cells) == 16
        assert {cell.condition.name for cell in cells} == set(STANDARD_CONDITIONS)
        assert all(cell.episodes == 25 for cell in cells)

    def test_generalization_suite(self):
        cells = build_suite(BenchConfig(suite="generalization"))
        assert len(cells) == 8
        assert {cell.task for cell in cells} == {TaskKind.NAVIGATION, TaskKind.NAV_DYNAMIC}

    def test_single_suite(self):
        cells = build_suite(BenchConfig(suite="single", condition="new-town", task=TaskKind.STRAIGHT, episodes_per_cell=3))
        assert [cell.cell_id for cell in cells] == ["town-b/training/main/Straight"]

    def test_unknown_suite(self):
        with pytest.raises(UnknownSuiteError):
            build_suite(BenchConfig(suite="everything"))

    def test_unknown_condition(self):
        with pytest.raises(UnknownSuiteError):
            build_suite(BenchConfig(suite="single", condition="mars"))

    def test_alternate_route_set_differs(self, sim_cfg):
        """Test that the new-path condition draws other routes than training."""
        main = ConditionCell(condition=CONDITIONS["training"], task=TaskKind.NAVIGATION)
        alt = ConditionCell(condition=CONDITIONS["new-path"], task=TaskKind.NAVIGATION)
        assert cell_episode_spec(main, 0, 0, sim_cfg) != cell_episode_spec(alt, 0, 0, sim_cfg)

    def test_episode_spec_deterministic(self, sim_cfg):
        cell = ConditionCell(condition=CONDITIONS["new-weather"], task=TaskKind.ONE_TURN)
        assert cell_episode_spec(cell, 4, 7, sim_cfg) == cell_episode_spec(cell, 4, 7, sim_cfg)


class TestRunEpisode:
    """Test single greedy rollouts."""

    def test_brake_times_out(self, small_env, straight_spec):
        result = run_episode(small_env, straight_spec, ConstantPolicy())
        assert result.status is EpisodeStatus.TIME_BUDGET_EXHAUSTED
        assert result.steps == 199
        assert result.episode_return == 0.0
        assert result.infractions == {kind: 0 for kind in INFRACTION_KINDS}

    def test_expert_succeeds(self, small_env, straight_spec):
        result = run_episode(small_env, straight_spec, ExpertPolicy())
        assert result.success
        assert result.episode_return > 0.0

    def test_collision_counted(self, small_env, swerve_spec):
        result = run_episode(small_env, swerve_spec, ConstantPolicy(ActionTriple(steer=1.0, throttle=0.5)))
        assert result.status is EpisodeStatus.COLLISION
        assert result.infractions["collision_other"] == 1
        assert result.infractions["collision_vp"] == 0

    def test_policy_size_checked(self, env, actor, straight_spec):
        """Test that an 8x8 actor refuses a 32x32 environment."""
        with pytest.raises(PolicyMismatchError):
            run_episode(env, straight_spec, ActorPolicy(actor))

    def test_actor_runs(self, small_env, actor, straight_spec):
        result = run_episode(small_env, straight_spec, ActorPolicy(actor))
        assert result.status.is_terminal


class TestRunBenchmark:
    """Test cell evaluation."""

    def test_cells_are_isolated(self, small_sim):
        """Test that a cell's episodes do not depend on the other cells evaluated."""
        target = ConditionCell(condition=CONDITIONS["training"], task=TaskKind.STRAIGHT, episodes=2)
        other = ConditionCell(condition=CONDITIONS["new-town"], task=TaskKind.STRAIGHT, episodes=1)
        alone = run_benchmark([target], ConstantPolicy(), sim=small_sim)
        together = run_benchmark([other, target], ConstantPolicy(), sim=small_sim)
        first = [(e.seed, e.steps) for e in alone.lookup("training", TaskKind.STRAIGHT).episodes]
        second = [(e.seed, e.steps) for e in together.lookup("training", TaskKind.STRAIGHT).episodes]
        assert first == second

    def test_checks_policy_first(self, actor):
        cell = ConditionCell(condition=CONDITIONS["training"], task=TaskKind.STRAIGHT, episodes=1)
        with pytest.raises(PolicyMismatchError):
            run_benchmark([cell], ActorPolicy(actor))

    def test_episode_logs(self, small_sim, tmp_path):
        """Test that logged episodes replay without reward mismatches."""
        cell = ConditionCell(condition=CONDITIONS["training"], task=TaskKind.STRAIGHT, episodes=1)
        cfg = BenchConfig(log_episodes=True)
        run_benchmark([cell], ExpertPolicy(), cfg, sim=small_sim, log_dir=tmp_path, config_hash="f00d")
        logs = sorted(tmp_path.glob("*.jsonl"))
        assert [p.name for p in logs] == ["town-a_training_main_Straight_000.jsonl"]
        header, steps = read_episode_log(logs[0])
        assert header["policy"] == "expert"
        assert header["config_hash"] == "f00d"
        trace = replay_episode(logs[0])
        assert trace.mismatches == 0
        assert len(trace.lines) == len(steps)


class TestResults:
    """Test aggregation and formatting."""

    def test_pct_granularity(self):
        """Test that 25 episodes give success rates in steps of 4 percent."""
        cell = fake_cell(successes=7)
        assert cell.pct == pytest.approx(28.0)
        assert cell.failures() == {EpisodeStatus.COLLISION: 18, EpisodeStatus.TIME_BUDGET_EXHAUSTED: 0}

    def test_mean_infractions(self):
        cell = fake_cell(episodes=2)
        cell.episodes[0].infractions["sidewalk"] = 3
        assert cell.mean_infractions()["sidewalk"] == pytest.approx(1.5)

    def test_table(self):
        result = BenchmarkResult(
            [fake_cell("training", TaskKind.STRAIGHT, 25), fake_cell("new-town", TaskKind.STRAIGHT, 5), fake_cell("training", TaskKind.ONE_TURN, 10)]
        )
        lines = format_table(result).splitlines()
        assert lines[0].split() == ["Task", "training", "new-town"]
        assert lines[2].split() == ["Straight", "100", "20"]
        assert lines[3].split() == ["OneTurn", "40", "-"]

    def test_csv(self):
        lines = format_results_csv(BenchmarkResult([fake_cell(successes=5)]), config_hash="abc").splitlines()
        assert lines[0] == "# config_hash=abc"
        assert lines[1].startswith("task,condition,map,regime_group,episodes,successes,pct")
        assert lines[2].startswith("Straight,training,town-a,training,25,5,20.0")

    def test_write_results(self, tmp_path):
        csv_path, table_path = write_results(BenchmarkResult([fake_cell()]), tmp_path, stem="run", config_hash="abc")
        assert csv_path.name == "run.csv" and csv_path.exists()
        lines = table_path.read_text().splitlines()
        assert lines[0] == "# config_hash=abc"
        assert lines[1].startswith("Task")


class TestEpisodeLogErrors:
    """Test malformed episode logs."""

    def test_missing(self, tmp_path):
        with pytest.raises(EpisodeLogError, match="not found"):
            read_episode_log(tmp_path / "absent.jsonl")

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(EpisodeLogError, match="empty"):
            read_episode_log(path)

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{oops\n")
        with pytest.raises(EpisodeLogError):
            read_episode_log(path)

    def test_no_header(self, tmp_path):
        path = tmp_path / "headless.jsonl"
        path.write_text(json.dumps({"step": 0}) + "\n")
        with pytest.raises(EpisodeLogError, match="header"):
            read_episode_log(path)

    def test_no_steps(self, tmp_path):
        path = tmp_path / "short.jsonl"
        path.write_text(json.dumps({"type": "header"}) + "\n")
        with pytest.raises(EpisodeLogError, match="no steps"):
            read_episode_log(path)

    def test_malformed_step(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        header = {"type": "header", "reward_config": RewardConfig().model_dump(mode="json")}
        path.write_text(json.dumps(header) + "\n" + json.dumps({"step": 0, "command": "Reverse"}) + "\n")
        with pytest.raises(EpisodeLogError, match="malformed"):
            replay_episode(path)


class TestActorPolicyLoading:
    """Test loading benchmark policies from checkpoints."""

    def test_from_checkpoint(self, tmp_path, actor, small_policy):
        path = tmp_path / "best.ckpt"
        actor.save(path)
        policy = ActorPolicy.from_checkpoint(path, small_policy)
        assert policy.name == "best"
        assert policy.actor.trunk.in_dim == 64

    def test_critic_file_rejected(self, tmp_path, critic, small_policy):
        path = tmp_path / "critic.ckpt"
        critic.save(path)
        with pytest.raises(CheckpointError):
            ActorPolicy.from_checkpoint(path, small_policy)

    def test_no_trunk(self, tmp_path, actor):
        path = tmp_path / "branch.ckpt"
        save_network(actor.branches[0], path)
        with pytest.raises(PolicyMismatchError):
            ActorPolicy.from_checkpoint(path)


class TestAblation:
    """Test variant resolution and ablation tables."""

    def test_aliases_resolve(self):
        for alias, name in ALIASES.items():
            assert resolve_variant(alias).name == name
        assert resolve_variant("reward x10").reward == {"scale": 10.0}

    def test_unknown_variant(self):
        with pytest.raises(UnknownVariantError):
            resolve_variant("w/o everything")

    def test_unknown_variant_fails_before_training(self):
        with pytest.raises(UnknownVariantError):
            run_ablation_grid(["default", "nope"], pretrained=None)

    def test_apply_variant(self):
        reward, rl = apply_variant(VARIANTS["w/o steer reward"], RewardConfig(), RLConfig())
        assert not reward.enable_steer
        _, rl = apply_variant(VARIANTS["more steps"], RewardConfig(), RLConfig(total_steps=10))
        assert rl.total_steps == 300_000

    def test_apply_variant_keeps_other_settings(self):
        reward, _ = apply_variant(VARIANTS["reward/10"], RewardConfig(sidewalk_penalty=-5.0), RLConfig())
        assert reward.scale == pytest.approx(0.1)
        assert reward.sidewalk_penalty == -5.0

    def test_format(self):
        result = BenchmarkResult([fake_cell(name, TaskKind.ONE_TURN, 4 * i) for i, name in enumerate(STANDARD_CONDITIONS)])
        csv_text, table = format_ablation([AblationRow("default", result)], config_hash="aa")
        assert csv_text.splitlines()[1] == "variant," + ",".join(STANDARD_CONDITIONS)
        assert csv_text.splitlines()[2] == "default,0.0,16.0,32.0,48.0"
        assert table.splitlines()[0] == "# config_hash=aa"
        assert table.splitlines()[1].startswith("Variant")
        assert table.splitlines()[3].split() == ["default", "0", "16", "32", "48"]
