"""
Detection interchange files.

Any instance segmentation network can feed the pipeline by writing one JSON
object per detection per line:

    {"timestamp": 1305031102.175304, "class_id": 1, "score": 0.93,
     "x_min": 210, "y_min": 80, "x_max": 301, "y_max": 420,
     "rle": [[52010, 14], [52650, 17], ...]}

Masks are run-length encoded over the row-major flattened image as
[start, length] pairs with 0-based starts. Runs must be sorted,
non-overlapping and inside the image.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scene.errors import DetectionFormatError, OutputWriteError, ValidationError
from scene.model import BinaryMask, BoundingBox, Detection
from sequence.schema import DETECTION_FIELDS

logger = logging.getLogger(__name__)


def encode_rle(mask: BinaryMask) -> list[list[int]]:
    """Run-length encode the set bits of a mask."""
    pixels = np.concatenate([[False], mask.bits.ravel(), [False]])
    edges = np.flatnonzero(pixels[1:] != pixels[:-1])
    starts, ends = edges[::2], edges[1::2]
    return [[int(start), int(end - start)] for start, end in zip(starts, ends)]


def decode_rle(runs: list, width: int, height: int) -> BinaryMask:
    """Rebuild a width×height mask from [start, length] runs."""
    size = width * height
    flat = np.zeros(size, dtype=bool)
    previous_end = 0
    for index, run in enumerate(runs):
        if not (isinstance(run, (list, tuple)) and len(run) == 2
                and all(isinstance(v, int) and not isinstance(v, bool) for v in run)):
            raise ValidationError(f"Run {index} is not an integer [start, length] pair: {run}")
        start, length = run
        if length <= 0:
            raise ValidationError(f"Run {index} has non-positive length {length}")
        if start < previous_end:
            raise ValidationError(f"Run {index} starts at {start}, before previous run end {previous_end}")
        if start + length > size:
            raise ValidationError(f"Run {index} ends at {start + length}, past image size {size}")
        flat[start:start + length] = True
        previous_end = start + length
    return BinaryMask(flat.reshape(height, width))


@dataclass(frozen=True)
class DetectionRecord:
    """Serialized form of one detection."""

    timestamp: float
    class_id: int
    score: float
    bbox: BoundingBox
    rle: tuple[tuple[int, int], ...]

    @classmethod
    def from_detection(cls, timestamp: float, det: Detection) -> DetectionRecord:
        return cls(
            timestamp=timestamp,
            class_id=det.class_id,
            score=det.score,
            bbox=det.bbox,
            rle=tuple(tuple(run) for run in encode_rle(det.mask)),
        )

    @classmethod
    def from_dict(cls, data: dict) -> DetectionRecord:
        missing = [name for name in DETECTION_FIELDS if name not in data]
        if missing:
            raise ValidationError(f"Missing fields: {', '.join(missing)}")
        return cls(
            timestamp=float(data["timestamp"]),
            class_id=int(data["class_id"]),
            score=float(data["score"]),
            bbox=BoundingBox(int(data["x_min"]), int(data["y_min"]),
                             int(data["x_max"]), int(data["y_max"])),
            rle=tuple(tuple(run) if isinstance(run, list) else run for run in data["rle"]),
        )

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "class_id": self.class_id,
            "score": self.score,
            "x_min": self.bbox.x_min,
            "y_min": self.bbox.y_min,
            "x_max": self.bbox.x_max,
            "y_max": self.bbox.y_max,
            "rle": [list(run) for run in self.rle],
        }

    def to_detection(self, width: int, height: int) -> Detection:
        mask = decode_rle([list(run) for run in self.rle], width, height)
        return Detection(class_id=self.class_id, score=self.score, bbox=self.bbox, mask=mask)


def read_detections(path: str | Path, width: int, height: int) -> dict[float, list[Detection]]:
    """Load a detection file, grouped by frame timestamp in ascending order."""
    path = Path(path)
    if not path.is_file():
        raise DetectionFormatError(path, "detection file not found")

    grouped: dict[float, list[Detection]] = defaultdict(list)
    count = 0
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = DetectionRecord.from_dict(json.loads(line))
                grouped[record.timestamp].append(record.to_detection(width, height))
            except json.JSONDecodeError as e:
                raise DetectionFormatError(path, f"invalid JSON: {e.msg}", line_no) from e
            except (ValidationError, TypeError, ValueError) as e:
                raise DetectionFormatError(path, str(e), line_no) from e
            count += 1

    logger.info("Loaded %d detections over %d frames from %s", count, len(grouped), path)
    return dict(sorted(grouped.items()))


def write_detections(path: str | Path, records: list[DetectionRecord]) -> Path:
    """Write detection records as JSON Lines (an empty list gives an empty file)."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record.to_dict()) + "\n")
    except OSError as e:
        raise OutputWriteError(path, e) from e
    return path
