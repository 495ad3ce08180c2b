"""
Moving Object Classification (MOC).

Labels every tracked dynamic object moving or idle from three cues: the
speed estimated by its filter, whether its class is rigid, and how much its
mask deformed since the previous frame (1 − IoU of consecutive masks).

An object is moving when its speed exceeds its class velocity threshold, or
when it belongs to a non-rigid class and its mask deformation triggers.

Operations:
    mask_iou(a, b): intersection over union of two masks
    classify(track, current_mask, registry, config): MotionLabel
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from scene.errors import DimensionMismatchError, ValidationError
from scene.model import BinaryMask
from scene.registry import ObjectClassRegistry

if TYPE_CHECKING:
    from tracking.tracker import Track

logger = logging.getLogger(__name__)


class Motion(str, Enum):
    MOVING = "moving"
    IDLE = "idle"


@dataclass(frozen=True)
class MotionLabel:
    """Classification of one object in one frame. track_id is None for untracked detections."""

    track_id: int | None
    label: Motion
    speed: float
    deformation: float

    @property
    def moving(self) -> bool:
        return self.label is Motion.MOVING


@dataclass(frozen=True)
class MocConfig:
    """Deformation rule: low_iou → (1 − IoU) > threshold; high_iou → IoU > threshold."""

    deformation_threshold: float = 0.3
    deformation_trigger: str = "low_iou"

    def __post_init__(self):
        if self.deformation_trigger not in ("low_iou", "high_iou"):
            raise ValidationError(f"Unknown deformation trigger: {self.deformation_trigger}")
        if not 0.0 <= self.deformation_threshold <= 1.0:
            raise ValidationError(
                f"deformation_threshold must be in [0, 1]: {self.deformation_threshold}",
            )

    def deformation_triggers(self, iou: float) -> bool:
        if self.deformation_trigger == "low_iou":
            return (1.0 - iou) > self.deformation_threshold
        return iou > self.deformation_threshold


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a ∩ b| / |a ∪ b|; two empty masks count as identical (1.0)."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Cannot compare masks {a.shape} and {b.shape}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


def classify(
    track: Track,
    current_mask: BinaryMask,
    registry: ObjectClassRegistry,
    config: MocConfig | None = None,
) -> MotionLabel:
    """Label a live track moving or idle given its mask in the current frame."""
    config = config or MocConfig()
    spec = registry.get(track.class_id)

    speed = track.state.speed
    iou = mask_iou(track.last_mask, current_mask)
    deformation = 1.0 - iou

    moving = speed > spec.velocity_threshold
    if not moving and not spec.rigid:
        moving = config.deformation_triggers(iou)

    label = Motion.MOVING if moving else Motion.IDLE
    logger.debug(
        "Track %d (%s): speed %.3f m/s, deformation %.3f → %s",
        track.id, spec.name, speed, deformation, label.value,
    )
    return MotionLabel(track_id=track.id, label=label, speed=speed, deformation=deformation)
