"""Egocentric occupancy raster rendering and observation perturbation.

Rows run from far (row 0) to near (last row); columns run left to right.
The window starts at the vehicle center and extends ``raster_extent``
meters ahead and half that to each side.
"""

import math
from typing import Optional

import numpy as np

from src.sim import geometry
from src.sim.data_models import Command, Observation, PerturbationRegime, SimConfig, VehicleState
from src.sim.obstacles import ObstacleField
from src.sim.planner import Route
from src.sim.town_map import TownMap

OFFROAD = 0.0
SIDEWALK = 0.2
OPPOSITE_LANE = 0.4
DRIVABLE = 0.6
ROUTE = 0.8
OBSTACLE = 1.0


def cell_offsets(cfg: SimConfig) -> np.ndarray:
    """(forward, right) offset of every cell center, shape (H*W, 2), row-major."""
    h, w, extent = cfg.raster_height, cfg.raster_width, cfg.raster_extent
    forward = extent * (h - np.arange(h) - 0.5) / h
    right = -0.5 * extent + extent * (np.arange(w) + 0.5) / w
    ff, rr = np.meshgrid(forward, right, indexing="ij")
    return np.stack([ff.ravel(), rr.ravel()], axis=1)


def cell_centers(state: VehicleState, cfg: SimConfig) -> np.ndarray:
    """World coordinates of every cell center."""
    offsets = cell_offsets(cfg)
    fwd = state.forward
    right = geometry.right_normal(fwd)
    return state.position + offsets[:, :1] * fwd + offsets[:, 1:] * right


def _paint(raster: np.ndarray, polys: np.ndarray, indices: np.ndarray, points: np.ndarray, code: float) -> None:
    if len(indices) == 0:
        return
    inside = geometry.points_in_convex(points, polys[indices]).any(axis=0)
    raster[inside] = code


def render_raster(
    town: TownMap,
    state: VehicleState,
    route: Optional[Route],
    progress: int,
    obstacles: Optional[ObstacleField],
    cfg: SimConfig,
) -> np.ndarray:
    """Layered occupancy raster; later layers overwrite earlier ones."""
    points = cell_centers(state, cfg)
    raster = np.full(len(points), OFFROAD)
    half_extent = 0.5 * cfg.raster_extent
    window_center = state.position + state.forward * half_extent
    reach = math.sqrt(2.0) * half_extent + cfg.raster_extent / min(cfg.raster_height, cfg.raster_width)

    sidewalks = town.nearby(town.sidewalk_center, town.sidewalk_radius, window_center, reach)
    _paint(raster, town.sidewalk_quads, sidewalks, points, SIDEWALK)

    lanes = town.nearby(town.lane_quad_center, town.lane_quad_radius, window_center, reach)
    against = town.lane_quad_dir[lanes] @ state.forward < 0.0
    _paint(raster, town.lane_quads, lanes[against], points, OPPOSITE_LANE)
    _paint(raster, town.lane_quads, lanes[~against], points, DRIVABLE)
    boxes = town.nearby(town.box_center, town.box_radius, window_center, reach)
    _paint(raster, town.box_quads, boxes, points, DRIVABLE)

    if route is not None and len(route.waypoints) > 1:
        lane_half = 0.5 * min(lane.width for lane in town.lanes.values())
        horizon = int(math.ceil(1.5 * cfg.raster_extent / cfg.waypoint_spacing)) + 1
        start = max(0, min(progress, len(route.waypoints) - 2))
        ahead = route.waypoints[start : start + horizon + 1]
        if len(ahead) > 1:
            distances = geometry.segment_distances(points, ahead[:-1], ahead[1:])
            raster[distances <= lane_half] = ROUTE

    statics = town.nearby(town.obstacle_center, town.obstacle_radius, window_center, reach)
    _paint(raster, town.obstacle_polys, statics, points, OBSTACLE)
    if obstacles is not None and len(obstacles):
        if obstacles.active_vehicles:
            polys = np.array(obstacles.vehicle_polygons())
            _paint(raster, polys, np.arange(len(polys)), points, OBSTACLE)
        if obstacles.active_pedestrians:
            cell = cfg.raster_extent / min(cfg.raster_height, cfg.raster_width)
            centers = obstacles.pedestrian_centers()
            radii = np.array([p.radius for p in obstacles.active_pedestrians])
            distances = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
            raster[(distances <= radii + 0.5 * cell).any(axis=1)] = OBSTACLE

    return raster.reshape(cfg.raster_height, cfg.raster_width).astype(np.float32)


def apply_perturbation(raster: np.ndarray, regime: PerturbationRegime, rng: np.random.Generator) -> np.ndarray:
    """Rescale, add Gaussian noise, drop cells, clip to [0, 1].

    Zero-valued parameters consume no random draws, so a zero-noise regime
    is exactly the identity.
    """
    if regime.is_identity:
        return raster
    out = raster.astype(np.float64)
    if regime.intensity != 1.0:
        out = out * regime.intensity
    if regime.noise_sigma > 0.0:
        out = out + rng.normal(0.0, regime.noise_sigma, size=out.shape)
    if regime.dropout > 0.0:
        out = np.where(rng.random(out.shape) < regime.dropout, 0.0, out)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def observe(
    town: TownMap,
    state: VehicleState,
    route: Optional[Route],
    obstacles: Optional[ObstacleField],
    perturbation: PerturbationRegime,
    cfg: SimConfig,
    rng: Optional[np.random.Generator] = None,
    progress: int = 0,
) -> Observation:
    """Observation <raster, speed, command> at the current state."""
    raster = render_raster(town, state, route, progress, obstacles, cfg)
    if not perturbation.is_identity:
        if rng is None:
            rng = np.random.default_rng(perturbation.seed)
        raster = apply_perturbation(raster, perturbation, rng)
    command = route.commands[min(progress, len(route.commands) - 1)] if route is not None else None
    return Observation(raster=raster, speed=state.speed, command=command or Command.FOLLOW)
