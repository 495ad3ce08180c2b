"""
Domain types shared by the whole pipeline.

Every type here is an immutable value object: fields are validated on
construction and numpy payloads are stored read-only, so instances can be
shared freely between pipeline stages and threads.

Conventions:
    - Images are row-major (height, width) arrays.
    - Depth is metric (meters); 0 encodes "no reading" and is never treated
      as a measurement.
    - Camera frame is the optical frame: x right, y down, z forward.
    - Euler angles are (roll, pitch, yaw) in radians, Tait-Bryan (x, y, z),
      composed as R = Rz(yaw) · Ry(pitch) · Rx(roll).

Operations:
    filter_detections(dets, score_threshold, max_count): score gate + top-m
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from scene.errors import DimensionMismatchError, ValidationError

logger = logging.getLogger(__name__)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"Focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"Image size must be positive: {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                f"Principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image",
            )

    @classmethod
    def tum_fr3(cls) -> CameraIntrinsics:
        """Factory intrinsics of the TUM freiburg3 Kinect."""
        return cls(fx=535.4, fy=539.2, cx=320.1, cy=247.6, width=640, height=480)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-frame camera position and Tait-Bryan (x, y, z) orientation."""

    position: np.ndarray
    euler: tuple[float, float, float]

    def __post_init__(self):
        position = np.array(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(position)):
            raise ValidationError(f"Camera position must be finite: {position}")
        if len(self.euler) != 3 or not all(math.isfinite(a) for a in self.euler):
            raise ValidationError(f"Euler angles must be three finite values: {self.euler}")
        object.__setattr__(self, "position", _readonly(position))
        object.__setattr__(self, "euler", tuple(normalize_angle(float(a)) for a in self.euler))

    @classmethod
    def identity(cls) -> CameraPose:
        return cls(np.zeros(3), (0.0, 0.0, 0.0))

    def __repr__(self) -> str:
        return f"CameraPose(position={self.position.tolist()}, euler={self.euler})"


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Metric depth grid; 0 marks pixels without a reading."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError(f"Depth image must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("Depth image contains non-finite values")
        if np.any(data < 0):
            raise ValidationError("Depth image contains negative values")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def invalid(self) -> np.ndarray:
        """Boolean grid of pixels without a reading."""
        return self.data == 0

    @classmethod
    def from_raw(cls, raw: np.ndarray, scale_factor: float) -> DepthImage:
        """Convert sensor units (e.g. 5000 per meter) to meters; raw 0 stays invalid."""
        return cls(raw.astype(np.float64) / scale_factor)

    def to_raw(self, scale_factor: float) -> np.ndarray:
        """Convert back to 16-bit sensor units, rounding to the nearest unit."""
        raw = np.rint(self.data * scale_factor)
        return np.clip(raw, 0, np.iinfo(np.uint16).max).astype(np.uint16)

    def __repr__(self) -> str:
        return f"DepthImage({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major {0, 1} grid annotating one object in one frame."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValidationError(f"Mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _readonly(bits))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def tight_bbox(self) -> BoundingBox | None:
        """Smallest box containing every set bit, or None for an empty mask."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        if rows.size == 0:
            return None
        cols = np.flatnonzero(self.bits.any(axis=0))
        return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))

    @classmethod
    def empty(cls, width: int, height: int) -> BinaryMask:
        return cls(np.zeros((height, width), dtype=bool))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, set={self.count()})"


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel bounds."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise ValidationError(f"Bounding box has negative coordinates: {self}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"Bounding box corners are inverted: {self}")

    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def fits(self, width: int, height: int) -> bool:
        return self.x_max < width and self.y_max < height

    def crop(self, grid: np.ndarray) -> np.ndarray:
        """View of the grid restricted to this box."""
        return grid[self.y_min:self.y_max + 1, self.x_min:self.x_max + 1]


@dataclass(frozen=True, eq=False)
class Detection:
    """One object instance from the segmentation network: class, score, box, mask."""

    class_id: int
    score: float
    bbox: BoundingBox
    mask: BinaryMask

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"Detection score must be in [0, 1], got {self.score}")
        if not self.bbox.fits(self.mask.width, self.mask.height):
            raise ValidationError(
                f"Bounding box {self.bbox} exceeds mask size {self.mask.width}x{self.mask.height}",
            )
        # Every set bit must lie inside the box
        if self.bbox.crop(self.mask.bits).sum() != self.mask.count():
            raise ValidationError(f"Mask has set bits outside its bounding box {self.bbox}")

    @classmethod
    def from_mask(cls, class_id: int, score: float, mask: BinaryMask) -> Detection:
        """Detection whose box is the tight bounds of a nonempty mask."""
        bbox = mask.tight_bbox()
        if bbox is None:
            raise ValidationError("Cannot build a detection from an empty mask")
        return cls(class_id=class_id, score=score, bbox=bbox, mask=mask)


@dataclass(frozen=True, eq=False)
class Frame:
    """One synchronized RGB-D frame with its camera pose and detections."""

    timestamp: float
    depth: DepthImage
    pose: CameraPose
    detections: tuple[Detection, ...] = ()
    rgb: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        for det in self.detections:
            if det.mask.shape != self.depth.data.shape:
                raise DimensionMismatchError(
                    f"Detection mask {det.mask.width}x{det.mask.height} does not match "
                    f"depth {self.depth.width}x{self.depth.height} at t={self.timestamp:.6f}",
                )


def filter_detections(
    dets: list[Detection] | tuple[Detection, ...],
    score_threshold: float,
    max_count: int,
) -> list[Detection]:
    """Keep detections scoring above the threshold, best first, at most max_count.

    The sort is stable, so equal scores keep their input order.
    """
    kept = [det for det in dets if det.score > score_threshold]
    kept.sort(key=lambda det: det.score, reverse=True)
    if len(kept) > max_count:
        logger.debug("Truncating %d detections to %d", len(kept), max_count)
    return kept[:max(max_count, 0)]
