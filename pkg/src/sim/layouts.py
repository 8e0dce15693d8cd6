"""Bundled towns built from compact grid layouts.

"town-a" is the training town; "town-b" is held out and differs in block
sizes and intersection degrees.
"""

from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.sim import geometry
from src.sim.exceptions import InvalidEpisodeSpecError
from src.sim.town_map import Lane, TownMap

GridIndex = tuple[int, int]


class GridLayout(BaseModel):
    """A rectangular street grid with optional missing roads."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]
    removed_roads: tuple[tuple[GridIndex, GridIndex], ...] = ()
    lane_width: float = Field(3.5, gt=0)
    sidewalk_width: float = Field(2.0, ge=0)
    box_half: float = Field(7.0, gt=0)
    building_margin: float = Field(1.0, ge=0)
    pole_size: float = Field(0.4, gt=0)

    def node_id(self, index: GridIndex) -> int:
        i, j = index
        return j * len(self.xs) + i

    def roads(self) -> list[tuple[GridIndex, GridIndex]]:
        removed = {frozenset(pair) for pair in self.removed_roads}
        roads = []
        for j in range(len(self.ys)):
            for i in range(len(self.xs)):
                for nxt in ((i + 1, j), (i, j + 1)):
                    if nxt[0] >= len(self.xs) or nxt[1] >= len(self.ys):
                        continue
                    if frozenset(((i, j), nxt)) in removed:
                        continue
                    roads.append(((i, j), nxt))
        return roads


TOWN_A = GridLayout(name="town-a", xs=(0.0, 80.0, 160.0), ys=(0.0, 80.0, 160.0))

TOWN_B = GridLayout(
    name="town-b",
    xs=(0.0, 65.0, 140.0, 200.0),
    ys=(0.0, 75.0, 150.0),
    removed_roads=(((1, 1), (2, 1)), ((2, 0), (2, 1))),
)

LAYOUTS = {layout.name: layout for layout in (TOWN_A, TOWN_B)}


def build_town(layout: GridLayout) -> TownMap:
    """Two-lane roads between grid nodes, trimmed at intersection boxes."""
    nodes = {
        layout.node_id((i, j)): (x, y)
        for j, y in enumerate(layout.ys)
        for i, x in enumerate(layout.xs)
    }
    lanes: list[Lane] = []
    obstacles: list[np.ndarray] = []
    half = 0.5 * layout.lane_width
    for road_index, (a, b) in enumerate(layout.roads()):
        u, v = layout.node_id(a), layout.node_id(b)
        pu, pv = np.array(nodes[u]), np.array(nodes[v])
        d = (pv - pu) / np.linalg.norm(pv - pu)
        n = geometry.right_normal(d)
        start = pu + d * layout.box_half
        end = pv - d * layout.box_half
        forward_id, backward_id = 2 * road_index, 2 * road_index + 1
        lanes.append(
            Lane(
                id=forward_id,
                start_node=u,
                end_node=v,
                centerline=np.array([start + n * half, end + n * half]),
                width=layout.lane_width,
                sidewalk_width=layout.sidewalk_width,
                opposite=backward_id,
            )
        )
        lanes.append(
            Lane(
                id=backward_id,
                start_node=v,
                end_node=u,
                centerline=np.array([end - n * half, start - n * half]),
                width=layout.lane_width,
                sidewalk_width=layout.sidewalk_width,
                opposite=forward_id,
            )
        )
        # A pole on the outer edge of the right-hand sidewalk, a third of the way along.
        pole_center = start + (end - start) / 3.0 + n * (layout.lane_width + layout.sidewalk_width - layout.pole_size)
        p = 0.5 * layout.pole_size
        obstacles.append(geometry.box(pole_center[0] - p, pole_center[1] - p, pole_center[0] + p, pole_center[1] + p))

    inset = layout.lane_width + layout.sidewalk_width + layout.building_margin
    for j in range(len(layout.ys) - 1):
        for i in range(len(layout.xs) - 1):
            x0, x1 = layout.xs[i] + inset, layout.xs[i + 1] - inset
            y0, y1 = layout.ys[j] + inset, layout.ys[j + 1] - inset
            if x1 > x0 and y1 > y0:
                obstacles.append(geometry.box(x0, y0, x1, y1))

    return TownMap(
        name=layout.name,
        nodes=nodes,
        lanes=lanes,
        box_half=layout.box_half,
        static_obstacles=obstacles,
    )


@lru_cache(maxsize=None)
def bundled_map(name: str) -> TownMap:
    """Build (once) and return a bundled town by name."""
    if name not in LAYOUTS:
        raise InvalidEpisodeSpecError(f"unknown map {name!r}; bundled maps: {sorted(LAYOUTS)}")
    return build_town(LAYOUTS[name])
