"""Road-graph town: lanes, sidewalks, intersection boxes and static obstacles."""

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.config.settings import FORMAT_VERSION
from src.sim import geometry
from src.sim.data_models import LanePosition
from src.sim.exceptions import InvalidEpisodeSpecError, MapFormatError, MapValidationError
from src.utils.files import atomic_write_json


@dataclass
class Lane:
    """A directed lane segment between two intersection nodes."""

    id: int
    start_node: int
    end_node: int
    centerline: np.ndarray
    width: float
    sidewalk_width: float
    opposite: Optional[int] = None
    stations: np.ndarray = field(init=False, repr=False)
    quads: np.ndarray = field(init=False, repr=False)
    sidewalks: np.ndarray = field(init=False, repr=False)
    directions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.centerline = np.asarray(self.centerline, dtype=np.float64).reshape(-1, 2)
        if len(self.centerline) < 2:
            raise MapValidationError(f"lane {self.id} needs at least two centerline points")
        self.stations = geometry.polyline_stations(self.centerline)
        if self.stations[-1] <= 0:
            raise MapValidationError(f"lane {self.id} has zero length")

        quads, sidewalks, directions = [], [], []
        half = 0.5 * self.width
        for p0, p1 in zip(self.centerline[:-1], self.centerline[1:]):
            d = p1 - p0
            norm = float(np.linalg.norm(d))
            if norm <= 0:
                continue
            d = d / norm
            n = geometry.right_normal(d)
            quads.append([p0 + n * half, p1 + n * half, p1 - n * half, p0 - n * half])
            outer = half + self.sidewalk_width
            sidewalks.append([p0 + n * outer, p1 + n * outer, p1 + n * half, p0 + n * half])
            directions.append(d)
        self.quads = np.array(quads)
        self.sidewalks = np.array(sidewalks) if self.sidewalk_width > 0 else np.zeros((0, 4, 2))
        self.directions = np.array(directions)

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    def pose_at(self, s: float) -> tuple[np.ndarray, float]:
        return geometry.interpolate_polyline(self.centerline, s)

    @property
    def end_heading(self) -> float:
        d = self.centerline[-1] - self.centerline[-2]
        return math.atan2(d[1], d[0])

    @property
    def start_heading(self) -> float:
        d = self.centerline[1] - self.centerline[0]
        return math.atan2(d[1], d[0])


class NodeRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    x: float
    y: float


class LaneRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    start_node: int
    end_node: int
    width: float = Field(..., gt=0)
    sidewalk_width: float = Field(0.0, ge=0)
    opposite: Optional[int] = None
    centerline: list[tuple[float, float]]


class MapFile(BaseModel):
    """On-disk map schema (JSON)."""

    model_config = ConfigDict(extra="forbid")

    format_version: int
    name: str
    box_half: float = Field(..., gt=0)
    nodes: list[NodeRecord]
    lanes: list[LaneRecord]
    static_obstacles: list[list[tuple[float, float]]] = Field(default_factory=list)


def _pad_polygons(polys: Sequence[np.ndarray]) -> np.ndarray:
    """Stack convex polygons by repeating each last vertex up to a common count."""
    if not polys:
        return np.zeros((0, 4, 2))
    k = max(len(p) for p in polys)
    padded = [np.vstack([p, np.repeat(p[-1:], k - len(p), axis=0)]) for p in polys]
    return np.array(padded)


class TownMap:
    """Immutable town description plus precomputed region arrays."""

    def __init__(
        self,
        name: str,
        nodes: dict[int, tuple[float, float]],
        lanes: Sequence[Lane],
        box_half: float,
        static_obstacles: Sequence[np.ndarray] = (),
        validate: bool = True,
    ):
        self.name = name
        self.nodes = {int(k): np.asarray(v, dtype=np.float64) for k, v in nodes.items()}
        self.lanes: dict[int, Lane] = {lane.id: lane for lane in lanes}
        if len(self.lanes) != len(lanes):
            raise MapValidationError(f"{name}: duplicate lane ids")
        self.box_half = float(box_half)
        self.static_obstacles = [geometry.ensure_ccw(np.asarray(p, dtype=np.float64)) for p in static_obstacles]

        self._successors: dict[int, list[int]] = {}
        outgoing: dict[int, list[int]] = {node: [] for node in self.nodes}
        for lane in self.lanes.values():
            for node in (lane.start_node, lane.end_node):
                if node not in self.nodes:
                    raise MapValidationError(f"{name}: lane {lane.id} references unknown node {node}")
            outgoing[lane.start_node].append(lane.id)
        for lane in self.lanes.values():
            # U-turns onto the paired lane are not routable.
            self._successors[lane.id] = sorted(
                nxt for nxt in outgoing[lane.end_node] if nxt != lane.opposite
            )

        self._build_region_arrays()
        if validate:
            self.validate()

    def _build_region_arrays(self) -> None:
        quads, quad_lanes, quad_dirs, sidewalks = [], [], [], []
        for lane in self.lanes.values():
            quads.extend(lane.quads)
            quad_lanes.extend([lane.id] * len(lane.quads))
            quad_dirs.extend(lane.directions)
            sidewalks.extend(lane.sidewalks)
        self.lane_quads = np.array(quads).reshape(-1, 4, 2)
        self.lane_quad_lane = np.array(quad_lanes, dtype=np.int64)
        self.lane_quad_dir = np.array(quad_dirs).reshape(-1, 2)
        self.sidewalk_quads = np.array(sidewalks).reshape(-1, 4, 2)
        self.box_quads = np.array(
            [geometry.box(p[0] - self.box_half, p[1] - self.box_half, p[0] + self.box_half, p[1] + self.box_half)
             for p in self.nodes.values()]
        ).reshape(-1, 4, 2)
        self.obstacle_polys = _pad_polygons(self.static_obstacles)

        def centers_and_radii(polys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            if len(polys) == 0:
                return np.zeros((0, 2)), np.zeros(0)
            centers = polys.mean(axis=1)
            radii = np.linalg.norm(polys - centers[:, None, :], axis=2).max(axis=1)
            return centers, radii

        self.lane_quad_center, self.lane_quad_radius = centers_and_radii(self.lane_quads)
        self.sidewalk_center, self.sidewalk_radius = centers_and_radii(self.sidewalk_quads)
        self.box_center, self.box_radius = centers_and_radii(self.box_quads)
        self.obstacle_center, self.obstacle_radius = centers_and_radii(self.obstacle_polys)

    # Structure ------------------------------------------------------------

    def lane(self, lane_id: int) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise InvalidEpisodeSpecError(f"{self.name}: unknown lane {lane_id}") from None

    def successors(self, lane_id: int) -> list[int]:
        return self._successors[lane_id]

    def node_degree(self, node: int) -> int:
        """Number of distinct neighbouring nodes."""
        neighbours = set()
        for lane in self.lanes.values():
            if lane.start_node == node:
                neighbours.add(lane.end_node)
            if lane.end_node == node:
                neighbours.add(lane.start_node)
        return len(neighbours)

    def pose_at(self, position: LanePosition) -> tuple[np.ndarray, float]:
        lane = self.lane(position.lane)
        if position.s > lane.length + 1e-9:
            raise InvalidEpisodeSpecError(
                f"{self.name}: position s={position.s:.2f} beyond lane {lane.id} length {lane.length:.2f}"
            )
        return lane.pose_at(position.s)

    def nearby(self, centers: np.ndarray, radii: np.ndarray, point: np.ndarray, reach: float) -> np.ndarray:
        """Indices of regions whose bounding circle comes within ``reach`` of ``point``."""
        if len(centers) == 0:
            return np.zeros(0, dtype=np.int64)
        dist = np.linalg.norm(centers - point, axis=1)
        return np.nonzero(dist <= radii + reach)[0]

    # Validation -----------------------------------------------------------

    def validate(self) -> None:
        """Check opposite-lane symmetry, paired-lane disjointness and strong connectivity."""
        for lane in self.lanes.values():
            if lane.opposite is None:
                continue
            other = self.lanes.get(lane.opposite)
            if other is None or other.opposite != lane.id:
                raise MapValidationError(f"{self.name}: lane {lane.id} opposite pairing is not symmetric")
            if (other.start_node, other.end_node) != (lane.end_node, lane.start_node):
                raise MapValidationError(f"{self.name}: lanes {lane.id}/{other.id} do not run between the same nodes")
            if lane.id < other.id:
                overlap = sum(
                    geometry.intersection_area(qa, qb) for qa in lane.quads for qb in other.quads
                )
                if overlap > 1e-6:
                    raise MapValidationError(
                        f"{self.name}: paired lanes {lane.id}/{other.id} overlap by {overlap:.4f} m^2"
                    )

        if not self.lanes:
            raise MapValidationError(f"{self.name}: map has no lanes")
        first = min(self.lanes)
        forward = self._reachable(first, self._successors)
        predecessors: dict[int, list[int]] = {lane_id: [] for lane_id in self.lanes}
        for lane_id, nexts in self._successors.items():
            for nxt in nexts:
                predecessors[nxt].append(lane_id)
        backward = self._reachable(first, predecessors)
        if len(forward) != len(self.lanes) or len(backward) != len(self.lanes):
            raise MapValidationError(f"{self.name}: lane graph is not strongly connected")

    @staticmethod
    def _reachable(start: int, graph: dict[int, list[int]]) -> set[int]:
        seen = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for nxt in graph[current]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    # Serialization --------------------------------------------------------

    def to_record(self) -> MapFile:
        return MapFile(
            format_version=FORMAT_VERSION,
            name=self.name,
            box_half=self.box_half,
            nodes=[NodeRecord(id=k, x=float(v[0]), y=float(v[1])) for k, v in sorted(self.nodes.items())],
            lanes=[
                LaneRecord(
                    id=lane.id,
                    start_node=lane.start_node,
                    end_node=lane.end_node,
                    width=lane.width,
                    sidewalk_width=lane.sidewalk_width,
                    opposite=lane.opposite,
                    centerline=[(float(x), float(y)) for x, y in lane.centerline],
                )
                for lane in sorted(self.lanes.values(), key=lambda item: item.id)
            ],
            static_obstacles=[[(float(x), float(y)) for x, y in poly] for poly in self.static_obstacles],
        )

    @classmethod
    def from_record(cls, record: MapFile) -> "TownMap":
        if record.format_version != FORMAT_VERSION:
            raise MapFormatError(f"unsupported map format version {record.format_version}")
        lanes = [
            Lane(
                id=item.id,
                start_node=item.start_node,
                end_node=item.end_node,
                centerline=np.array(item.centerline),
                width=item.width,
                sidewalk_width=item.sidewalk_width,
                opposite=item.opposite,
            )
            for item in record.lanes
        ]
        return cls(
            name=record.name,
            nodes={n.id: (n.x, n.y) for n in record.nodes},
            lanes=lanes,
            box_half=record.box_half,
            static_obstacles=[np.array(p) for p in record.static_obstacles],
        )


def save_map(town: TownMap, path: Path) -> None:
    atomic_write_json(Path(path), town.to_record().model_dump(mode="json"))


def load_map(path: Path) -> TownMap:
    path = Path(path)
    if not path.exists():
        raise MapFormatError(f"map file not found: {path}")
    try:
        record = MapFile.model_validate(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValidationError) as e:
        raise MapFormatError(f"invalid map file {path}: {e}") from e
    return TownMap.from_record(record)
