"""Binary checkpoint codec for named network collections.

Layout (little-endian)::

    magic "CIRLNET1" | u32 version | str role | str config_hash | u32 n_networks
    per network: str name | u32 n_layers | per layer: u8 kind, u32 in_dim, u32 out_dim
    payload: per network, per affine layer, weight then bias as f8

``str`` is a u16 byte length followed by UTF-8 bytes.
"""

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from src.config.settings import CHECKPOINT_MAGIC, FORMAT_VERSION
from src.nn.exceptions import CheckpointError
from src.nn.layers import CODE_KINDS, KIND_CODES, LayerSpec
from src.nn.network import Network
from src.utils.files import atomic_write_bytes
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""

    role: str
    config_hash: str
    networks: dict[str, Network]


def _write_str(buffer: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    buffer.write(struct.pack("<H", len(raw)))
    buffer.write(raw)


def _read_exact(buffer: BinaryIO, size: int) -> bytes:
    raw = buffer.read(size)
    if len(raw) != size:
        raise CheckpointError("checkpoint truncated")
    return raw


def _read_str(buffer: BinaryIO) -> str:
    (length,) = struct.unpack("<H", _read_exact(buffer, 2))
    return _read_exact(buffer, length).decode("utf-8")


def encode_checkpoint(networks: Mapping[str, Network], role: str, config_hash: str = "") -> bytes:
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(struct.pack("<I", FORMAT_VERSION))
    _write_str(buffer, role)
    _write_str(buffer, config_hash)
    buffer.write(struct.pack("<I", len(networks)))
    for name, net in networks.items():
        _write_str(buffer, name)
        buffer.write(struct.pack("<I", len(net.specs)))
        for spec in net.specs:
            buffer.write(struct.pack("<BII", KIND_CODES[spec.kind], spec.in_dim, spec.out_dim))
    for net in networks.values():
        for param in net.parameters():
            buffer.write(param.values.astype("<f8").tobytes())
    return buffer.getvalue()


def decode_checkpoint(raw: bytes) -> Checkpoint:
    buffer = io.BytesIO(raw)
    if _read_exact(buffer, len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic: not a network checkpoint")
    (version,) = struct.unpack("<I", _read_exact(buffer, 4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    role = _read_str(buffer)
    config_hash = _read_str(buffer)
    (count,) = struct.unpack("<I", _read_exact(buffer, 4))

    tables: list[tuple[str, list[LayerSpec]]] = []
    for _ in range(count):
        name = _read_str(buffer)
        (n_layers,) = struct.unpack("<I", _read_exact(buffer, 4))
        specs = []
        for _ in range(n_layers):
            code, in_dim, out_dim = struct.unpack("<BII", _read_exact(buffer, 9))
            if code not in CODE_KINDS:
                raise CheckpointError(f"unknown layer kind code {code} in network {name!r}")
            try:
                specs.append(LayerSpec(kind=CODE_KINDS[code], in_dim=in_dim, out_dim=out_dim))
            except ValueError as e:
                raise CheckpointError(f"invalid layer in network {name!r}: {e}") from e
        tables.append((name, specs))

    networks: dict[str, Network] = {}
    for name, specs in tables:
        net = Network(specs, name=name)
        for param in net.parameters():
            payload = _read_exact(buffer, 8 * param.size)
            param.values[:] = np.frombuffer(payload, dtype="<f8")
        networks[name] = net
    if buffer.read(1):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(role=role, config_hash=config_hash, networks=networks)


def save_checkpoint(
    path: Path, networks: Mapping[str, Network], role: str, config_hash: str = ""
) -> None:
    """Write a checkpoint atomically."""
    atomic_write_bytes(Path(path), encode_checkpoint(networks, role, config_hash))
    logger.debug(f"Saved {role} checkpoint ({len(networks)} networks) to {path}")


def read_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def load_into(path: Path, networks: Mapping[str, Network], role: str | None = None) -> Checkpoint:
    """Copy checkpoint parameters into existing networks after shape checks."""
    checkpoint = read_checkpoint(path)
    if role is not None and checkpoint.role != role:
        raise CheckpointError(f"checkpoint role is {checkpoint.role!r}, expected {role!r}")
    if set(checkpoint.networks) != set(networks):
        raise CheckpointError(
            f"checkpoint holds networks {sorted(checkpoint.networks)}, expected {sorted(networks)}"
        )
    for name, target in networks.items():
        source = checkpoint.networks[name]
        if not source.same_architecture(target):
            raise CheckpointError(
                f"shape mismatch in {name!r}: checkpoint "
                f"{[(s.kind.value, s.in_dim, s.out_dim) for s in source.specs]} vs "
                f"{[(s.kind.value, s.in_dim, s.out_dim) for s in target.specs]}"
            )
    for name, target in networks.items():
        target.set_flat_values(checkpoint.networks[name].flat_values())
    return checkpoint


def save_network(net: Network, path: Path, config_hash: str = "") -> None:
    save_checkpoint(path, {net.name: net}, role="net", config_hash=config_hash)


def load_network(path: Path) -> Network:
    checkpoint = read_checkpoint(path)
    if len(checkpoint.networks) != 1:
        raise CheckpointError(f"expected a single-network checkpoint, found {len(checkpoint.networks)}")
    return next(iter(checkpoint.networks.values()))
