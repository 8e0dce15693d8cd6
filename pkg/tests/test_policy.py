"""Tests for the command-gated actor and the critic."""
import numpy as np
import pytest

from src.nn.exceptions import CheckpointError, ShapeError
from src.policy.networks import (
    ROLE_ACTOR_TARGET,
    ActorOptimizer,
    GatedActor,
    actor_forward,
    critic_forward,
    gate,
    parameter_distance,
)
from src.sim.data_models import ActionTriple, Command, Observation


def partial_numeric_grad(f, values, count, eps=1e-6):
    """Central differences of scalar ``f`` for the first ``count`` entries of ``values``."""
    grad = np.zeros(count)
    for i in range(count):
        old = values[i]
        values[i] = old + eps
        plus = f()
        values[i] = old - eps
        minus = f()
        values[i] = old
        grad[i] = (plus - minus) / (2 * eps)
    return grad


@pytest.fixture
def batch(rng, small_sim):
    """Six observations covering every command."""
    rasters = rng.random((6, small_sim.raster_size))
    speeds = np.array([0.0, 10.0, 20.0, 30.0, 5.0, 15.0])
    commands = np.array([0, 1, 2, 3, 0, 2])
    return rasters, speeds, commands


@pytest.fixture
def observation(small_sim):
    raster = np.linspace(0.0, 1.0, small_sim.raster_size, dtype=np.float32).reshape(8, 8)
    return Observation(raster=raster, speed=4.0, command=Command.TURN_LEFT)


class TestGate:
    """Test the command gate."""

    def test_order(self):
        assert [gate(c) for c in (Command.FOLLOW, Command.STRAIGHT, Command.TURN_LEFT, Command.TURN_RIGHT)] == [0, 1, 2, 3]


class TestGatedActor:
    """Test actor forward, backward and branch isolation."""

    def test_bounds(self, actor, batch):
        actions = actor.forward(*batch)
        assert actions.shape == (6, 3)
        assert np.all(np.abs(actions[:, 0]) <= 1.0)
        assert np.all((actions[:, 1:] >= 0.0) & (actions[:, 1:] <= 1.0))

    def test_zero_heads(self, actor, batch):
        """Test that zeroed heads output no steer and half throttle and brake."""
        actor.zero_heads()
        np.testing.assert_allclose(actor.forward(*batch), np.tile([0.0, 0.5, 0.5], (6, 1)))

    def test_only_selected_branch_runs(self, actor, batch):
        rasters, speeds, _ = batch
        actor.forward(rasters, speeds, np.full(6, 2))
        assert actor.active_branches == [2]

    def test_branches_differ(self, actor, batch):
        """Test that one input gives different actions under different commands."""
        rasters, speeds, _ = batch
        left = actor.forward(rasters[:1], speeds[:1], np.array([2]))
        right = actor.forward(rasters[:1], speeds[:1], np.array([3]))
        assert not np.allclose(left, right)

    def test_branch_gradient(self, actor, batch):
        """Test branch parameter gradients against finite differences."""
        coeffs = np.array([1.0, -2.0, 0.5])
        branch = actor.branches[0]
        actor.zero_grad()
        actor.forward(*batch)
        actor.backward_masked(np.tile(coeffs, (6, 1)))
        param = branch.parameters()[0]
        analytic = param.grad[:12].copy()

        def loss():
            return float(np.sum(actor.forward(*batch) * coeffs))

        np.testing.assert_allclose(analytic, partial_numeric_grad(loss, param.values, 12), atol=1e-5)

    def test_branch_isolation(self, actor, batch):
        """Test that an update on Follow samples leaves other branches untouched."""
        rasters, speeds, _ = batch
        before = actor.copy()
        optimizer = ActorOptimizer(actor)
        actor.forward(rasters, speeds, np.zeros(6, dtype=np.int64))
        actor.backward_masked(np.ones((6, 3)))
        optimizer.step(1e-2)
        assert parameter_distance(actor.branches[0].parameters(), before.branches[0].parameters()) > 0
        assert parameter_distance(actor.trunk.parameters(), before.trunk.parameters()) > 0
        for k in (1, 2, 3):
            assert parameter_distance(actor.branches[k].parameters(), before.branches[k].parameters()) == 0.0

    def test_wrong_raster_width(self, actor):
        with pytest.raises(ShapeError):
            actor.forward(np.zeros((1, 10)), np.zeros(1), np.zeros(1, dtype=np.int64))

    def test_command_count_mismatch(self, actor, batch):
        rasters, speeds, _ = batch
        with pytest.raises(ShapeError):
            actor.forward(rasters, speeds, np.zeros(2, dtype=np.int64))

    def test_act(self, actor, observation):
        action = actor.act(observation)
        assert isinstance(action, ActionTriple)
        assert actor_forward(actor, observation) == action

    def test_create_is_seeded(self, small_sim, small_policy, batch):
        a = GatedActor.create(small_sim.raster_size, small_policy)
        b = GatedActor.create(small_sim.raster_size, small_policy)
        np.testing.assert_array_equal(a.forward(*batch), b.forward(*batch))

    def test_copy_is_independent(self, actor):
        twin = actor.copy()
        twin.zero_heads()
        assert parameter_distance(actor.parameters(), twin.parameters()) > 0


class TestCritic:
    """Test the Q network."""

    def test_zero_head(self, critic, batch):
        critic.zero_head()
        actions = np.full((6, 3), 0.5)
        np.testing.assert_array_equal(critic.forward(*batch, actions), np.zeros(6))

    def test_action_gradient(self, critic, batch, rng):
        """Test dQ/da against finite differences."""
        rasters, speeds, commands = batch
        actions = rng.random((6, 3))
        analytic = critic.action_gradient(rasters, speeds, commands, actions)
        assert analytic.shape == (6, 3)
        flat = actions.reshape(-1)

        def total_q():
            return float(np.sum(critic.forward(rasters, speeds, commands, flat.reshape(6, 3))))

        numeric = partial_numeric_grad(total_q, flat, flat.size).reshape(6, 3)
        np.testing.assert_allclose(analytic, numeric, atol=1e-5)

    def test_action_gradient_clears_grads(self, critic, batch, rng):
        critic.action_gradient(*batch, rng.random((6, 3)))
        assert all(not p.grad.any() for p in critic.parameters())

    def test_command_changes_value(self, critic, batch):
        rasters, speeds, _ = batch
        actions = np.full((1, 3), 0.3)
        follow = critic.forward(rasters[:1], speeds[:1], np.array([0]), actions)
        turn = critic.forward(rasters[:1], speeds[:1], np.array([3]), actions)
        assert follow[0] != turn[0]

    def test_action_shape_checked(self, critic, batch):
        with pytest.raises(ShapeError):
            critic.forward(*batch, np.zeros((6, 2)))

    def test_value(self, critic, observation):
        action = ActionTriple(steer=-0.2, throttle=0.4)
        assert critic.value(observation, action) == pytest.approx(critic_forward(critic, observation, action))


class TestPolicyCheckpoints:
    """Test saving and loading both networks."""

    def test_actor_round_trip(self, tmp_path, actor, batch, small_sim, small_policy):
        path = tmp_path / "actor.ckpt"
        actor.save(path, config_hash="cafe")
        other = GatedActor.create(small_sim.raster_size, small_policy.model_copy(update={"seed": 99}))
        checkpoint = other.load(path)
        assert checkpoint.config_hash == "cafe"
        np.testing.assert_array_equal(other.forward(*batch), actor.forward(*batch))

    def test_role_checked(self, tmp_path, actor):
        path = tmp_path / "target.ckpt"
        actor.save(path, role=ROLE_ACTOR_TARGET)
        with pytest.raises(CheckpointError, match="role"):
            actor.load(path)
        actor.load(path, role=ROLE_ACTOR_TARGET)

    def test_critic_refuses_actor_file(self, tmp_path, actor, critic):
        path = tmp_path / "actor.ckpt"
        actor.save(path)
        with pytest.raises(CheckpointError):
            critic.load(path, role=None)

    def test_parameter_distance_structure(self, actor, critic):
        with pytest.raises(ShapeError):
            parameter_distance(actor.parameters(), critic.parameters())
