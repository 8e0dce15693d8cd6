"""Pytest configuration and fixtures."""
import os
import tempfile

import numpy as np
import pytest

# Set environment variables BEFORE any imports
# This must happen at module level to work before settings.py is imported
_SCRATCH = tempfile.mkdtemp(prefix="cirl-tests-")
os.environ["CIRL_LOG_DIR"] = os.path.join(_SCRATCH, "logs")
os.environ["CIRL_OUTPUT_DIR"] = os.path.join(_SCRATCH, "runs")
os.environ["CIRL_LOG_LEVEL"] = "WARNING"
os.environ["CIRL_WORKERS"] = "1"

from src.policy.networks import Critic, GatedActor, PolicyConfig  # noqa: E402
from src.sim.data_models import EpisodeSpec, LanePosition, SimConfig  # noqa: E402
from src.sim.env import TownEnv  # noqa: E402
from src.sim.layouts import bundled_map  # noqa: E402


@pytest.fixture
def town_a():
    """The bundled training town."""
    return bundled_map("town-a")


@pytest.fixture
def sim_cfg():
    """Default simulator constants."""
    return SimConfig()


@pytest.fixture
def small_sim():
    """Simulator with an 8x8 raster so networks stay tiny."""
    return SimConfig(raster_height=8, raster_width=8)


@pytest.fixture
def small_policy():
    """Narrow actor/critic layout."""
    return PolicyConfig(trunk_hidden=[16], speed_hidden=4, branch_hidden=8, critic_hidden=8, seed=3)


@pytest.fixture
def actor(small_sim, small_policy):
    """Seeded gated actor over an 8x8 raster."""
    return GatedActor.create(small_sim.raster_size, small_policy)


@pytest.fixture
def critic(small_sim, small_policy):
    """Seeded critic over an 8x8 raster."""
    return Critic.create(small_sim.raster_size, small_policy)


@pytest.fixture
def straight_spec():
    """55 m along lane 0 of town-a with no intersection on the way."""
    return EpisodeSpec(
        map_name="town-a",
        start=LanePosition(lane=0, s=5.0),
        goal=LanePosition(lane=0, s=60.0),
        seed=7,
    )


@pytest.fixture
def left_turn_spec():
    """Lane 0 into lane 6 across node 1: one left turn."""
    return EpisodeSpec(
        map_name="town-a",
        start=LanePosition(lane=0, s=30.0),
        goal=LanePosition(lane=6, s=20.0),
        seed=8,
    )


@pytest.fixture
def env(sim_cfg):
    """Environment with default constants."""
    return TownEnv(sim_cfg)


@pytest.fixture
def small_env(small_sim):
    """Environment rendering 8x8 rasters."""
    return TownEnv(small_sim)


@pytest.fixture
def rng():
    """Deterministic generator."""
    return np.random.default_rng(1234)
