"""Tests for branch-masked imitation learning."""
import math

import numpy as np
import pytest

from src.expert.data_models import DemoSample
from src.expert.dataset import DemoDataset
from src.nn.exceptions import ShapeError
from src.policy.networks import GatedActor, parameter_distance
from src.sim.data_models import ActionTriple, Command, Measurements, Observation
from src.sim.env import TownEnv
from src.training.exceptions import MissingBranchDataError
from src.training.il_trainer import (
    ILConfig,
    cosine_lr,
    format_report,
    il_loss,
    save_il_result,
    split_indices,
    train_il,
)
from src.training.rl_trainer import RLConfig, train_cirl

LABELS = {
    Command.FOLLOW: ActionTriple(steer=0.0, throttle=0.6),
    Command.STRAIGHT: ActionTriple(steer=0.0, throttle=0.8),
    Command.TURN_LEFT: ActionTriple(steer=-0.5, throttle=0.3),
    Command.TURN_RIGHT: ActionTriple(steer=0.5, throttle=0.3),
}


def build_dataset(per_command, commands=tuple(LABELS), seed=0):
    """Synthetic 8x8 demonstrations with one fixed label per command."""
    rng = np.random.default_rng(seed)
    samples = []
    for episode, command in enumerate(commands):
        for step in range(per_command):
            samples.append(
                DemoSample(
                    observation=Observation(raster=rng.random((8, 8)).astype(np.float32), speed=float(rng.uniform(0, 8)), command=command),
                    action=LABELS[command],
                    executed=LABELS[command],
                    episode=episode,
                    step=step,
                    next_measurements=Measurements(),
                    terminal=step == per_command - 1,
                )
            )
    return DemoDataset.from_samples(samples, (8, 8), seed=seed)


@pytest.fixture
def dataset():
    return build_dataset(10)


@pytest.fixture
def quick_cfg():
    return ILConfig(epochs=3, batch_size=16, lr=1e-3, lr_final=1e-4, validation_fraction=0.2)


class TestLoss:
    """Test the imitation loss and learning-rate schedule."""

    def test_unit_residuals(self):
        assert il_loss(ActionTriple(), ActionTriple(steer=1.0, throttle=1.0, brake=1.0)) == pytest.approx(3.0)

    def test_weighted(self):
        pred = ActionTriple(steer=0.5, throttle=0.2)
        target = ActionTriple(steer=0.0, throttle=0.9)
        assert il_loss(pred, target, weights=(2.0, 0.0, 0.0)) == pytest.approx(0.5)

    def test_cosine_endpoints(self):
        assert cosine_lr(0, 10, 1e-3, 1e-5) == pytest.approx(1e-3)
        assert cosine_lr(9, 10, 1e-3, 1e-5) == pytest.approx(1e-5)
        assert cosine_lr(0, 1, 1e-3, 1e-5) == 1e-3

    def test_cosine_midpoint(self):
        assert cosine_lr(5, 11, 1.0, 0.0) == pytest.approx(0.5)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            ILConfig(loss_weights=(1.0, -1.0, 1.0))


class TestSplit:
    """Test the stratified split."""

    def test_per_command(self, dataset):
        train, validation = split_indices(dataset, 0.2, np.random.default_rng(0))
        assert len(validation) == 8
        assert np.bincount(dataset.commands[validation], minlength=4).tolist() == [2, 2, 2, 2]
        assert sorted(np.concatenate([train, validation]).tolist()) == list(range(len(dataset)))


class TestTrainIL:
    """Test the imitation training loop."""

    def test_report_rows(self, dataset, quick_cfg, small_policy):
        """Test one row per epoch, split and command."""
        result = train_il(dataset, quick_cfg, small_policy)
        assert len(result.report) == 3 * 2 * 4
        assert 0 <= result.best_epoch < 3
        assert math.isfinite(result.best_loss)

    def test_deterministic(self, dataset, quick_cfg, small_policy):
        first = train_il(dataset, quick_cfg, small_policy)
        second = train_il(dataset, quick_cfg, small_policy)
        assert [row.loss for row in first.report] == [row.loss for row in second.report]

    def test_memorizes_single_sample(self, small_policy):
        """Test that one Follow sample is fit almost exactly."""
        dataset = build_dataset(1, commands=(Command.FOLLOW,))
        cfg = ILConfig(epochs=300, batch_size=1, lr=1e-2, lr_final=1e-2, require_all_branches=False)
        result = train_il(dataset, cfg, small_policy)
        assert result.best_loss < 1e-2
        action = result.actor.act(dataset.observation(0))
        assert action.throttle == pytest.approx(0.6, abs=0.1)

    def test_missing_branch(self, quick_cfg, small_policy):
        dataset = build_dataset(5, commands=(Command.FOLLOW, Command.STRAIGHT, Command.TURN_LEFT))
        with pytest.raises(MissingBranchDataError, match="TurnRight"):
            train_il(dataset, quick_cfg, small_policy)

    def test_missing_branch_allowed(self, quick_cfg, small_policy):
        dataset = build_dataset(5, commands=(Command.FOLLOW, Command.STRAIGHT, Command.TURN_LEFT))
        result = train_il(dataset, quick_cfg.model_copy(update={"require_all_branches": False}), small_policy)
        assert math.isnan(result.report[3].loss)

    def test_empty_dataset(self, quick_cfg):
        with pytest.raises(MissingBranchDataError):
            train_il(build_dataset(0), quick_cfg)

    def test_actor_shape_checked(self, dataset, quick_cfg, small_policy):
        with pytest.raises(ShapeError):
            train_il(dataset, quick_cfg, actor=GatedActor.create(16, small_policy))

    def test_zero_epochs(self, dataset, small_policy):
        result = train_il(dataset, ILConfig(epochs=0), small_policy)
        assert result.report == []
        assert result.best_epoch == -1

    def test_only_used_branches_move(self, small_policy):
        """Test that branches without data keep their initial weights."""
        dataset = build_dataset(6, commands=(Command.FOLLOW,))
        start = GatedActor.create(64, small_policy)
        cfg = ILConfig(epochs=2, batch_size=4, require_all_branches=False)
        result = train_il(dataset, cfg, actor=start.copy())
        for k in (1, 2, 3):
            np.testing.assert_array_equal(result.actor.branches[k].flat_values(), start.branches[k].flat_values())


class TestReport:
    """Test report formatting and saving."""

    def test_format(self, dataset, quick_cfg, small_policy):
        result = train_il(dataset, quick_cfg, small_policy)
        lines = format_report(result.report, config_hash="abc").splitlines()
        assert lines[0] == "# config_hash=abc"
        assert lines[1] == "epoch,split,command,loss"
        assert len(lines) == 2 + 24
        assert lines[2].startswith("0,train,Follow,")

    def test_save(self, tmp_path, dataset, quick_cfg, small_policy):
        result = train_il(dataset, quick_cfg, small_policy)
        save_il_result(result, tmp_path / "actor.ckpt", tmp_path / "report.csv", config_hash="abc")
        loaded = GatedActor.create(64, small_policy)
        assert loaded.load(tmp_path / "actor.ckpt").config_hash == "abc"
        assert (tmp_path / "report.csv").read_text().startswith("# config_hash=abc")

    def test_checkpoint_seeds_ddpg_actor(self, tmp_path, dataset, quick_cfg, small_policy, small_sim):
        """Test that DDPG starts from exactly the saved imitation weights."""
        result = train_il(dataset, quick_cfg, small_policy)
        save_il_result(result, tmp_path / "actor.ckpt", tmp_path / "report.csv")
        rl = train_cirl(lambda: TownEnv(small_sim), tmp_path / "actor.ckpt", RLConfig(total_steps=0), policy_cfg=small_policy)
        assert parameter_distance(rl.actor.parameters(), result.actor.parameters()) == 0.0
        assert parameter_distance(rl.target_actor.parameters(), result.actor.parameters()) == 0.0
