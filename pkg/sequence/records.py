"""
Line-delimited JSON records: the per-frame track log written by a run and
the ground-truth sidecar written by the synthetic scene generator.
Both are read back by the evaluation harness.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scene.errors import OutputWriteError, SequenceFormatError
from sequence.schema import GROUND_TRUTH_FIELDS, TRACK_LOG_FIELDS

logger = logging.getLogger(__name__)


def _vector(value, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.shape != (3,) or not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must be three finite numbers, got {value!r}")
    return array


@dataclass(frozen=True, eq=False)
class TrackLogEntry:
    """One live track in one frame."""

    timestamp: float
    id: int
    class_id: int
    position: np.ndarray
    velocity: np.ndarray
    label: str
    speed: float
    deformation: float

    @property
    def moving(self) -> bool:
        return self.label == "moving"

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "id": self.id,
            "class_id": self.class_id,
            "position": [float(v) for v in self.position],
            "velocity": [float(v) for v in self.velocity],
            "label": self.label,
            "speed": self.speed,
            "deformation": self.deformation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TrackLogEntry:
        return cls(
            timestamp=float(data["timestamp"]),
            id=int(data["id"]),
            class_id=int(data["class_id"]),
            position=_vector(data["position"], "position"),
            velocity=_vector(data["velocity"], "velocity"),
            label=str(data["label"]),
            speed=float(data["speed"]),
            deformation=float(data["deformation"]),
        )


@dataclass(frozen=True, eq=False)
class GroundTruthEntry:
    """Exact kinematics of one visible object in one rendered frame."""

    timestamp: float
    object: int
    class_id: int
    position: np.ndarray
    velocity: np.ndarray
    camera_position: np.ndarray
    speed: float
    label: str

    @property
    def moving(self) -> bool:
        return self.label == "moving"

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "object": self.object,
            "class_id": self.class_id,
            "position": [float(v) for v in self.position],
            "velocity": [float(v) for v in self.velocity],
            "camera_position": [float(v) for v in self.camera_position],
            "speed": self.speed,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> GroundTruthEntry:
        return cls(
            timestamp=float(data["timestamp"]),
            object=int(data["object"]),
            class_id=int(data["class_id"]),
            position=_vector(data["position"], "position"),
            velocity=_vector(data["velocity"], "velocity"),
            camera_position=_vector(data["camera_position"], "camera_position"),
            speed=float(data["speed"]),
            label=str(data["label"]),
        )


def _read_jsonl(path: str | Path, fields: tuple[str, ...], parse) -> list:
    path = Path(path)
    if not path.is_file():
        raise SequenceFormatError(path, "file not found")
    entries = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                missing = [name for name in fields if name not in data]
                if missing:
                    raise ValueError(f"missing fields: {', '.join(missing)}")
                entries.append(parse(data))
            except json.JSONDecodeError as e:
                raise SequenceFormatError(path, f"invalid JSON: {e.msg}", line_no) from e
            except (TypeError, ValueError) as e:
                raise SequenceFormatError(path, str(e), line_no) from e
    return entries


def read_track_log(path: str | Path) -> list[TrackLogEntry]:
    entries = _read_jsonl(path, TRACK_LOG_FIELDS, TrackLogEntry.from_dict)
    logger.info("Loaded %d track log entries from %s", len(entries), path)
    return entries


def read_ground_truth(path: str | Path) -> list[GroundTruthEntry]:
    entries = _read_jsonl(path, GROUND_TRUTH_FIELDS, GroundTruthEntry.from_dict)
    logger.info("Loaded %d ground-truth entries from %s", len(entries), path)
    return entries


def write_jsonl(path: str | Path, entries) -> Path:
    """Write records with a to_dict() method, one JSON object per line."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as handle:
            for entry in entries:
                handle.write(json.dumps(entry.to_dict()) + "\n")
    except OSError as e:
        raise OutputWriteError(path, e) from e
    return path
