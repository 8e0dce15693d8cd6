"""Demonstration dataset storage and its binary file format.

File layout (little-endian): magic ``CIRLDEM1``, u32 format version,
u16-prefixed config hash, u64 generator seed, u32 sample count, u32 raster
height, u32 raster width, u32 episode count, 4 x u32 per-command counts,
then one fixed-width record per sample.
"""

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from src.config.settings import DATASET_MAGIC, FORMAT_VERSION
from src.expert.data_models import DemoSample
from src.expert.exceptions import DatasetFormatError
from src.sim.data_models import COMMAND_ORDER, ActionTriple, CollisionKind, Command, Measurements, Observation
from src.utils.files import atomic_write_bytes
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

COLLISION_CODES: tuple[CollisionKind, ...] = (
    CollisionKind.NONE,
    CollisionKind.VEHICLE_OR_PEDESTRIAN,
    CollisionKind.OTHER,
)


def record_dtype(height: int, width: int) -> np.dtype:
    return np.dtype(
        [
            ("raster", "<f4", (height, width)),
            ("speed", "<f8"),
            ("command", "u1"),
            ("label", "<f8", (3,)),
            ("executed", "<f8", (3,)),
            ("episode", "<u4"),
            ("step", "<u4"),
            ("next_speed_kmh", "<f8"),
            ("next_collision", "u1"),
            ("next_sidewalk", "<f8"),
            ("next_opposite", "<f8"),
            ("next_distance", "<f8"),
            ("terminal", "u1"),
        ]
    )


@dataclass
class DemoDataset:
    """Column-oriented demonstration samples."""

    records: np.ndarray
    seed: int = 0
    config_hash: str = ""

    @classmethod
    def from_samples(
        cls,
        samples: Iterable[DemoSample],
        raster_shape: tuple[int, int],
        seed: int = 0,
        config_hash: str = "",
    ) -> "DemoDataset":
        rows = [
            (
                s.observation.raster,
                s.observation.speed,
                s.command.index,
                s.action.as_array(),
                s.executed.as_array(),
                s.episode,
                s.step,
                s.next_measurements.speed_kmh,
                COLLISION_CODES.index(s.next_measurements.collision_kind),
                s.next_measurements.sidewalk_overlap,
                s.next_measurements.opposite_overlap,
                s.next_measurements.distance_to_goal,
                int(s.terminal),
            )
            for s in samples
        ]
        records = np.array(rows, dtype=record_dtype(*raster_shape))
        return cls(records=records, seed=seed, config_hash=config_hash)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def raster_shape(self) -> tuple[int, int]:
        return tuple(self.records.dtype["raster"].shape)

    @property
    def rasters(self) -> np.ndarray:
        return self.records["raster"]

    @property
    def speeds(self) -> np.ndarray:
        return self.records["speed"]

    @property
    def commands(self) -> np.ndarray:
        return self.records["command"].astype(np.int64)

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"]

    @property
    def episodes(self) -> int:
        return len(np.unique(self.records["episode"])) if len(self) else 0

    def command_counts(self) -> dict[Command, int]:
        counts = np.bincount(self.commands, minlength=len(COMMAND_ORDER))
        return {command: int(counts[command.index]) for command in COMMAND_ORDER}

    def next_indices(self) -> np.ndarray:
        """Index of each sample's successor; terminal samples point to themselves."""
        index = np.arange(len(self))
        nxt = np.minimum(index + 1, max(len(self) - 1, 0))
        same = self.records["episode"][nxt] == self.records["episode"]
        follows = same & (self.records["terminal"] == 0) & (nxt != index)
        return np.where(follows, nxt, index)

    def observation(self, i: int) -> Observation:
        row = self.records[i]
        return Observation(raster=row["raster"], speed=float(row["speed"]), command=COMMAND_ORDER[int(row["command"])])

    def sample(self, i: int) -> DemoSample:
        row = self.records[i]
        return DemoSample(
            observation=self.observation(i),
            action=ActionTriple.from_array(row["label"]),
            executed=ActionTriple.from_array(row["executed"]),
            episode=int(row["episode"]),
            step=int(row["step"]),
            next_measurements=Measurements(
                speed_kmh=float(row["next_speed_kmh"]),
                collision_kind=COLLISION_CODES[int(row["next_collision"])],
                sidewalk_overlap=float(row["next_sidewalk"]),
                opposite_overlap=float(row["next_opposite"]),
                distance_to_goal=float(row["next_distance"]),
            ),
            terminal=bool(row["terminal"]),
        )

    def subset(self, indices: np.ndarray) -> "DemoDataset":
        return DemoDataset(records=self.records[np.asarray(indices)], seed=self.seed, config_hash=self.config_hash)


def _write_str(buffer: io.BytesIO, text: str) -> None:
    raw = text.encode("utf-8")
    buffer.write(struct.pack("<H", len(raw)))
    buffer.write(raw)


def encode_dataset(dataset: DemoDataset) -> bytes:
    buffer = io.BytesIO()
    buffer.write(DATASET_MAGIC)
    buffer.write(struct.pack("<I", FORMAT_VERSION))
    _write_str(buffer, dataset.config_hash)
    height, width = dataset.raster_shape
    buffer.write(struct.pack("<QIIII", dataset.seed, len(dataset), height, width, dataset.episodes))
    counts = dataset.command_counts()
    buffer.write(struct.pack("<4I", *(counts[c] for c in COMMAND_ORDER)))
    buffer.write(dataset.records.tobytes())
    return buffer.getvalue()


def decode_dataset(raw: bytes) -> DemoDataset:
    buffer = io.BytesIO(raw)

    def read(size: int) -> bytes:
        chunk = buffer.read(size)
        if len(chunk) != size:
            raise DatasetFormatError("dataset file is truncated")
        return chunk

    if read(len(DATASET_MAGIC)) != DATASET_MAGIC:
        raise DatasetFormatError("not a demonstration dataset (bad magic bytes)")
    (version,) = struct.unpack("<I", read(4))
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset format version {version}")
    (hash_len,) = struct.unpack("<H", read(2))
    config_hash = read(hash_len).decode("utf-8")
    seed, count, height, width, _episodes = struct.unpack("<QIIII", read(24))
    header_counts = struct.unpack("<4I", read(16))

    dtype = record_dtype(height, width)
    payload = buffer.read()
    if len(payload) != count * dtype.itemsize:
        raise DatasetFormatError(
            f"dataset payload holds {len(payload)} bytes, expected {count} records of {dtype.itemsize}"
        )
    records = np.frombuffer(payload, dtype=dtype).copy()
    dataset = DemoDataset(records=records, seed=seed, config_hash=config_hash)
    counts = dataset.command_counts()
    if tuple(counts[c] for c in COMMAND_ORDER) != header_counts:
        raise DatasetFormatError("per-command counts in the header do not match the records")
    return dataset


def save_dataset(dataset: DemoDataset, path: Path) -> None:
    atomic_write_bytes(Path(path), encode_dataset(dataset))
    logger.info(f"Wrote {len(dataset)} demonstration samples to {path}")


def load_dataset(path: Path) -> DemoDataset:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"dataset file not found: {path}")
    return decode_dataset(path.read_bytes())
