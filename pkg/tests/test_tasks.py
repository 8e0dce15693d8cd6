"""Tests for task-conforming episode sampling."""
import numpy as np
import pytest

from src.sim.data_models import PerturbationRegime
from src.sim.exceptions import InvalidEpisodeSpecError
from src.sim.layouts import bundled_map
from src.sim.planner import plan_route
from src.sim.tasks import (
    MAX_NAVIGATION_LENGTH,
    MIN_STRAIGHT_DISTANCE,
    REGIME_GROUPS,
    TASK_ORDER,
    TaskKind,
    regime_group,
    route_matches,
    sample_episode_spec,
)


class TestSampleEpisodeSpec:
    """Test sampling for every task kind."""

    @pytest.mark.parametrize("task", TASK_ORDER)
    def test_route_fits_task(self, town_a, sim_cfg, task):
        """Test that sampled episodes satisfy their task's route condition."""
        rng = np.random.default_rng(17)
        for _ in range(5):
            spec = sample_episode_spec(town_a, task, rng, sim_cfg)
            route = plan_route(town_a, spec.start, spec.goal, sim_cfg)
            assert route_matches(task, route)
            assert spec.task == task.value
            assert spec.map_name == "town-a"

    def test_straight_distance(self, town_a, sim_cfg):
        """Test the minimum Straight distance."""
        rng = np.random.default_rng(2)
        for _ in range(10):
            spec = sample_episode_spec(town_a, TaskKind.STRAIGHT, rng, sim_cfg)
            assert spec.start.lane == spec.goal.lane
            assert spec.goal.s - spec.start.s >= MIN_STRAIGHT_DISTANCE

    def test_navigation_length_cap(self, town_a, sim_cfg):
        rng = np.random.default_rng(4)
        spec = sample_episode_spec(town_a, TaskKind.NAVIGATION, rng, sim_cfg)
        assert plan_route(town_a, spec.start, spec.goal, sim_cfg).optimal_length <= MAX_NAVIGATION_LENGTH

    def test_dynamic_has_agents(self, town_a, sim_cfg):
        """Test that NavDynamic scripts the configured agents."""
        spec = sample_episode_spec(town_a, TaskKind.NAV_DYNAMIC, np.random.default_rng(6), sim_cfg)
        assert spec.obstacles.vehicles == sim_cfg.dynamic_vehicles
        assert spec.obstacles.pedestrians == sim_cfg.dynamic_pedestrians

    def test_static_tasks_have_no_agents(self, town_a, sim_cfg):
        spec = sample_episode_spec(town_a, TaskKind.NAVIGATION, np.random.default_rng(6), sim_cfg)
        assert spec.obstacles.is_empty

    def test_deterministic(self, town_a, sim_cfg):
        """Test that equal generators sample equal specs."""
        a = sample_episode_spec(town_a, TaskKind.ONE_TURN, np.random.default_rng(8), sim_cfg, seed=3)
        b = sample_episode_spec(town_a, TaskKind.ONE_TURN, np.random.default_rng(8), sim_cfg, seed=3)
        assert a == b

    def test_perturbation_carried(self, town_a, sim_cfg):
        regime = PerturbationRegime(name="noisy", noise_sigma=0.1)
        spec = sample_episode_spec(town_a, TaskKind.STRAIGHT, np.random.default_rng(0), sim_cfg, perturbation=regime, seed=12)
        assert spec.perturbation == regime
        assert spec.seed == 12

    def test_held_out_town(self, sim_cfg):
        """Test sampling on town-b."""
        town_b = bundled_map("town-b")
        spec = sample_episode_spec(town_b, TaskKind.ONE_TURN, np.random.default_rng(1), sim_cfg)
        assert spec.map_name == "town-b"


class TestRegimeGroups:
    """Test the named perturbation groups."""

    def test_training_includes_clean(self):
        assert any(regime.is_identity for regime in regime_group("training"))

    def test_held_out_groups_perturb(self):
        for name in ("new", "new2"):
            assert not any(regime.is_identity for regime in regime_group(name))

    def test_unknown_group(self):
        with pytest.raises(InvalidEpisodeSpecError):
            regime_group("sunny")

    def test_group_names(self):
        assert set(REGIME_GROUPS) == {"training", "new", "new2"}
