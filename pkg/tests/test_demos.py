"""Tests for expert demonstration recording and balancing."""
import hashlib

import numpy as np
import pytest

from src.expert.data_models import ExpertConfig
from src.expert.dataset import encode_dataset
from src.expert.demos import EpisodeJob, _deficits, approach_spec, generate_demos, record_episode
from src.expert.exceptions import EmptyDatasetError
from src.sim.data_models import Command, EpisodeStatus, PerturbationRegime, SimConfig
from src.sim.planner import plan_route
from src.sim.tasks import TaskKind


class TestDeficits:
    """Test per-command balancing targets."""

    def test_turns_track_follow(self):
        """Test that turn branches must reach a quarter of Follow."""
        counts = {Command.FOLLOW: 100, Command.STRAIGHT: 10, Command.TURN_LEFT: 30, Command.TURN_RIGHT: 0}
        cfg = ExpertConfig(min_per_branch=20, max_follow_ratio=4.0)
        assert _deficits(counts, cfg) == {Command.STRAIGHT: 15, Command.TURN_RIGHT: 25}

    def test_balanced(self):
        counts = {command: 50 for command in Command}
        assert _deficits(counts, ExpertConfig(min_per_branch=50)) == {}

    def test_follow_minimum(self):
        counts = {Command.FOLLOW: 0, Command.STRAIGHT: 5, Command.TURN_LEFT: 5, Command.TURN_RIGHT: 5}
        assert _deficits(counts, ExpertConfig(min_per_branch=5)) == {Command.FOLLOW: 5}


class TestApproachSpec:
    """Test short intersection episodes."""

    @pytest.mark.parametrize("command", [Command.STRAIGHT, Command.TURN_LEFT, Command.TURN_RIGHT])
    def test_crosses_with_command(self, town_a, sim_cfg, command):
        spec = approach_spec(town_a, command, np.random.default_rng(2), sim_cfg, seed=4, perturbation=PerturbationRegime())
        route = plan_route(town_a, spec.start, spec.goal, sim_cfg)
        assert [crossing.command for crossing in route.crossings] == [command]
        assert spec.task == f"approach-{command.value}"
        assert spec.seed == 4

    def test_starts_before_window(self, town_a, sim_cfg):
        """Test that the episode opens with Follow before the turn command."""
        spec = approach_spec(town_a, Command.TURN_LEFT, np.random.default_rng(5), sim_cfg, seed=0, perturbation=PerturbationRegime())
        route = plan_route(town_a, spec.start, spec.goal, sim_cfg)
        assert route.commands[0] is Command.FOLLOW


class TestRecordEpisode:
    """Test recording one expert rollout."""

    def test_clean_episode(self, small_env, straight_spec):
        record = record_episode(small_env, EpisodeJob(episode=3, spec=straight_spec), ExpertConfig())
        assert record.status is EpisodeStatus.GOAL_REACHED
        assert not record.aborted
        assert [s.step for s in record.samples] == list(range(len(record.samples)))
        assert [s.terminal for s in record.samples] == [False] * (len(record.samples) - 1) + [True]
        assert all(s.episode == 3 for s in record.samples)
        assert all(s.action == s.executed for s in record.samples)

    def test_noise_keeps_clean_labels(self, small_env, straight_spec):
        """Test that injected steering noise changes executed actions only."""
        record = record_episode(small_env, EpisodeJob(episode=0, spec=straight_spec, noise_seed=9), ExpertConfig(steer_noise_sigma=0.2))
        assert any(s.action.steer != s.executed.steer for s in record.samples)
        assert all(s.action.throttle == s.executed.throttle for s in record.samples)

    def test_observation_matches_sample_shape(self, small_env, straight_spec):
        record = record_episode(small_env, EpisodeJob(episode=0, spec=straight_spec), ExpertConfig())
        assert record.samples[0].observation.raster.shape == (8, 8)
        assert record.samples[0].command is Command.FOLLOW


class TestGenerateDemos:
    """Test end-to-end demonstration generation."""

    def test_zero_episodes(self):
        with pytest.raises(EmptyDatasetError):
            generate_demos(ExpertConfig(episodes=0))

    @pytest.mark.slow
    def test_balanced_small_run(self):
        """Test that balancing fills every branch."""
        sim = SimConfig(raster_height=8, raster_width=8)
        cfg = ExpertConfig(episodes=2, tasks=[TaskKind.STRAIGHT], min_per_branch=5, noise_episode_fraction=0.0)
        dataset = generate_demos(cfg, sim, config_hash="feed")
        counts = dataset.command_counts()
        assert all(count >= 5 for count in counts.values())
        assert dataset.raster_shape == (8, 8)
        assert dataset.config_hash == "feed"

    @pytest.mark.slow
    def test_deterministic(self):
        sim = SimConfig(raster_height=8, raster_width=8)
        cfg = ExpertConfig(episodes=2, tasks=[TaskKind.STRAIGHT], min_per_branch=1, seed=3)
        first = generate_demos(cfg, sim)
        second = generate_demos(cfg, sim)
        assert first.records.tobytes() == second.records.tobytes()
        assert hashlib.sha256(encode_dataset(first)).digest() == hashlib.sha256(encode_dataset(second)).digest()
