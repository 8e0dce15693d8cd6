"""Tests for scripted dynamic agents."""
import numpy as np
import pytest

from src.sim.data_models import ObstacleScript, VehicleState
from src.sim.obstacles import SPAWN_CLEARANCE, ObstacleField, Pedestrian, ScriptedVehicle

EGO_START = np.array([12.0, -1.75])


@pytest.fixture
def eastbound():
    """A scripted vehicle at the origin heading east at 5 m/s."""
    return ScriptedVehicle(path=np.array([[0.0, 0.0], [100.0, 0.0]]), speed=5.0)


def far_ego():
    return VehicleState(x=500.0, y=500.0, heading=0.0)


class TestPathAgent:
    """Test constant-speed path following."""

    def test_advance(self, eastbound):
        eastbound.advance(0.1)
        assert eastbound.s == pytest.approx(0.5)
        center, heading = eastbound.pose()
        np.testing.assert_allclose(center, [0.5, 0.0])
        assert heading == pytest.approx(0.0)

    def test_clamped_at_end(self, eastbound):
        """Test that agents stop at the end of their path."""
        eastbound.advance(100.0)
        assert eastbound.s == pytest.approx(100.0)
        assert eastbound.finished


class TestObstacleField:
    """Test field stepping and spawning."""

    def test_empty(self):
        field = ObstacleField.empty()
        assert len(field) == 0
        assert field.pedestrian_centers().shape == (0, 2)
        assert field.snapshot() == {"vehicles": [], "pedestrians": []}

    def test_vehicle_moves_when_clear(self, eastbound):
        field = ObstacleField(vehicles=[eastbound])
        field.advance(0.1, far_ego())
        assert not eastbound.halted
        assert eastbound.s == pytest.approx(0.5)

    def test_vehicle_yields_to_ego_ahead(self, eastbound):
        """Test that a vehicle holds while the ego is just ahead of it."""
        field = ObstacleField(vehicles=[eastbound])
        field.advance(0.1, VehicleState(x=5.0, y=0.0, heading=0.0))
        assert eastbound.halted
        assert eastbound.s == 0.0

    def test_vehicle_ignores_ego_behind(self, eastbound):
        field = ObstacleField(vehicles=[eastbound])
        field.advance(0.1, VehicleState(x=-5.0, y=0.0, heading=0.0))
        assert not eastbound.halted

    def test_pedestrian_yields(self):
        """Test that a pedestrian stops next to the ego."""
        walker = Pedestrian(path=np.array([[3.0, 0.0], [3.0, 20.0]]), speed=1.4)
        field = ObstacleField(pedestrians=[walker])
        field.advance(0.1, VehicleState(x=0.0, y=0.0, heading=0.0))
        assert walker.halted
        assert walker.s == 0.0

    def test_spawn_deterministic(self, town_a):
        """Test that equal generators spawn equal fields."""
        script = ObstacleScript(vehicles=3, pedestrians=3)
        first = ObstacleField.spawn(town_a, script, [0, 6], EGO_START, np.random.default_rng(5))
        second = ObstacleField.spawn(town_a, script, [0, 6], EGO_START, np.random.default_rng(5))
        assert first.snapshot() == second.snapshot()

    def test_spawn_clear_of_ego(self, town_a):
        """Test the spawn clearance around the ego start."""
        field = ObstacleField.spawn(town_a, ObstacleScript(vehicles=4, pedestrians=4), [0, 6], EGO_START, np.random.default_rng(9))
        for vehicle in field.vehicles:
            assert np.linalg.norm(vehicle.path[0] - EGO_START) >= SPAWN_CLEARANCE
        for pedestrian in field.pedestrians:
            assert np.linalg.norm(pedestrian.path[0] - EGO_START) >= SPAWN_CLEARANCE

    def test_blockers(self, eastbound):
        walker = Pedestrian(path=np.array([[3.0, 0.0], [3.0, 20.0]]), speed=1.4)
        blockers = ObstacleField(vehicles=[eastbound], pedestrians=[walker]).blockers()
        assert [radius for _, radius in blockers] == [0.9, walker.radius]


class TestFinishedAgents:
    """Test that agents at the end of their path leave the world."""

    @pytest.fixture
    def parked_walker(self):
        walker = Pedestrian(path=np.array([[3.0, -10.0], [3.0, 0.0]]), speed=1.4)
        walker.s = float(walker.stations[-1])
        return walker

    def test_dropped_from_blockers(self, parked_walker, eastbound):
        eastbound.advance(100.0)
        field = ObstacleField(vehicles=[eastbound], pedestrians=[parked_walker])
        assert field.blockers() == []
        assert field.vehicle_polygons() == []
        assert field.pedestrian_centers().shape == (0, 2)
        assert len(field) == 0

    def test_active_agents_kept(self, parked_walker, eastbound):
        field = ObstacleField(vehicles=[eastbound], pedestrians=[parked_walker])
        assert field.active_vehicles == [eastbound]
        assert field.active_pedestrians == []
        assert len(field.blockers()) == 1

    def test_walker_leaves_after_reaching_the_end(self):
        """Test that a walker counts until it arrives and not after."""
        walker = Pedestrian(path=np.array([[0.0, 0.0], [0.0, 1.0]]), speed=1.0)
        field = ObstacleField(pedestrians=[walker])
        field.advance(0.5, far_ego())
        assert len(field.blockers()) == 1
        field.advance(0.5, far_ego())
        assert field.blockers() == []
