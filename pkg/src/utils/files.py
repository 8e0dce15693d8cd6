"""File helpers shared by every artifact writer."""

import hashlib
import json
from pathlib import Path
from typing import Any


def atomic_write_bytes(file_path: Path, data: bytes) -> None:
    """Write data to file atomically using temp file + rename."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = file_path.with_suffix(file_path.suffix + ".tmp")
    temp_file.write_bytes(data)
    temp_file.replace(file_path)


def atomic_write_text(file_path: Path, text: str) -> None:
    atomic_write_bytes(file_path, text.encode("utf-8"))


def atomic_write_json(file_path: Path, data: Any) -> None:
    atomic_write_text(file_path, json.dumps(data, indent=2, sort_keys=True))


def file_sha256(file_path: Path) -> str:
    digest = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
