"""Task-conforming episode sampling and the perturbation regime groups."""

from enum import Enum

import numpy as np

from src.sim.data_models import (
    NO_PERTURBATION,
    EpisodeSpec,
    LanePosition,
    ObstacleScript,
    PerturbationRegime,
    SimConfig,
)
from src.sim.exceptions import InvalidEpisodeSpecError
from src.sim.planner import Route, classify_turn, plan_route
from src.sim.town_map import TownMap

MAX_ATTEMPTS = 500
MIN_STRAIGHT_DISTANCE = 20.0
MAX_NAVIGATION_LENGTH = 600.0


class TaskKind(str, Enum):
    STRAIGHT = "Straight"
    ONE_TURN = "OneTurn"
    NAVIGATION = "Navigation"
    NAV_DYNAMIC = "NavDynamic"


TASK_ORDER: tuple[TaskKind, ...] = (
    TaskKind.STRAIGHT,
    TaskKind.ONE_TURN,
    TaskKind.NAVIGATION,
    TaskKind.NAV_DYNAMIC,
)

REGIME_GROUPS: dict[str, tuple[PerturbationRegime, ...]] = {
    "training": (
        NO_PERTURBATION,
        PerturbationRegime(name="noise-0.02", noise_sigma=0.02, seed=11),
        PerturbationRegime(name="dropout-0.02", dropout=0.02, seed=12),
    ),
    "new": (
        PerturbationRegime(name="noise-0.05", noise_sigma=0.05, seed=21),
        PerturbationRegime(name="dropout-0.05", dropout=0.05, seed=22),
    ),
    "new2": (
        PerturbationRegime(name="noise-0.1", noise_sigma=0.1, seed=31),
        PerturbationRegime(name="dropout-0.1", dropout=0.1, seed=32),
        PerturbationRegime(name="dim-0.7", intensity=0.7, seed=33),
    ),
}


def regime_group(name: str) -> tuple[PerturbationRegime, ...]:
    try:
        return REGIME_GROUPS[name]
    except KeyError:
        raise InvalidEpisodeSpecError(f"unknown regime group {name!r}; known: {sorted(REGIME_GROUPS)}") from None


def route_matches(task: TaskKind, route: Route) -> bool:
    if task is TaskKind.STRAIGHT:
        return route.intersections_crossed == 0
    if task is TaskKind.ONE_TURN:
        return route.turn_count == 1
    return route.turn_count >= 2


def _straight(town: TownMap, rng: np.random.Generator) -> tuple[LanePosition, LanePosition]:
    lanes = [lane for lane in town.lanes.values() if lane.length >= MIN_STRAIGHT_DISTANCE + 5.0]
    if not lanes:
        raise InvalidEpisodeSpecError(f"{town.name}: no lane long enough for a Straight task")
    lane = lanes[rng.integers(len(lanes))]
    start = float(rng.uniform(0.0, lane.length - MIN_STRAIGHT_DISTANCE - 5.0))
    goal = float(rng.uniform(start + MIN_STRAIGHT_DISTANCE, lane.length - 5.0))
    return LanePosition(lane=lane.id, s=start), LanePosition(lane=lane.id, s=goal)


def _one_turn(town: TownMap, rng: np.random.Generator) -> tuple[LanePosition, LanePosition]:
    lane_ids = sorted(town.lanes)
    for _ in range(MAX_ATTEMPTS):
        lane = town.lane(lane_ids[rng.integers(len(lane_ids))])
        turns = [
            nxt
            for nxt in town.successors(lane.id)
            if classify_turn(lane.end_heading, town.lane(nxt).start_heading).is_turn
        ]
        if not turns:
            continue
        target = town.lane(turns[rng.integers(len(turns))])
        start = float(rng.uniform(0.0, 0.6 * lane.length))
        goal = float(rng.uniform(min(10.0, 0.5 * target.length), max(10.0, target.length - 5.0)))
        return LanePosition(lane=lane.id, s=start), LanePosition(lane=target.id, s=min(goal, target.length))
    raise InvalidEpisodeSpecError(f"{town.name}: no turning lane pair found")


def _anywhere(town: TownMap, rng: np.random.Generator) -> tuple[LanePosition, LanePosition]:
    lane_ids = sorted(town.lanes)
    a = town.lane(lane_ids[rng.integers(len(lane_ids))])
    b = town.lane(lane_ids[rng.integers(len(lane_ids))])
    start = float(rng.uniform(0.0, max(0.0, a.length - 5.0)))
    goal = float(rng.uniform(min(5.0, b.length), max(5.0, b.length - 5.0)))
    return LanePosition(lane=a.id, s=start), LanePosition(lane=b.id, s=min(goal, b.length))


def sample_episode_spec(
    town: TownMap,
    task: TaskKind,
    rng: np.random.Generator,
    cfg: SimConfig,
    perturbation: PerturbationRegime = NO_PERTURBATION,
    seed: int = 0,
) -> EpisodeSpec:
    """Draw start/goal pairs until the planned route fits ``task``."""
    for _ in range(MAX_ATTEMPTS):
        if task is TaskKind.STRAIGHT:
            start, goal = _straight(town, rng)
        elif task is TaskKind.ONE_TURN:
            start, goal = _one_turn(town, rng)
        else:
            start, goal = _anywhere(town, rng)
        if start == goal:
            continue
        route = plan_route(town, start, goal, cfg)
        if not route_matches(task, route):
            continue
        if task in (TaskKind.NAVIGATION, TaskKind.NAV_DYNAMIC) and route.optimal_length > MAX_NAVIGATION_LENGTH:
            continue
        obstacles = ObstacleScript()
        if task is TaskKind.NAV_DYNAMIC:
            obstacles = ObstacleScript(
                vehicles=cfg.dynamic_vehicles,
                pedestrians=cfg.dynamic_pedestrians,
                seed=int(rng.integers(2**31 - 1)),
            )
        return EpisodeSpec(
            map_name=town.name,
            start=start,
            goal=goal,
            obstacles=obstacles,
            perturbation=perturbation,
            seed=seed,
            task=task.value,
        )
    raise InvalidEpisodeSpecError(f"{town.name}: could not sample a {task.value} episode in {MAX_ATTEMPTS} tries")
