"""
Masked depth image composition.

Produces the two depth images the SLAM back end consumes:
    MDI:    every dynamic object invalidated; used for mapping and loop closure
    MO-MDI: only moving objects invalidated; used for visual odometry

Masked pixels are set to the invalid sentinel 0, so downstream feature
extraction that uses depth as a mask rejects them. Pixels outside every mask
are copied bit-for-bit.

Operations:
    compose(depth, mask_labels, dilation_radius): MaskedFrameOutput
    dilate_mask(mask, radius): square-element dilation
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import cv2
import numpy as np

from masking.moc import MotionLabel
from scene.errors import DimensionMismatchError, ValidationError
from scene.model import BinaryMask, DepthImage

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MaskedFrameOutput:
    mdi: DepthImage
    mo_mdi: DepthImage
    applied_masks: list[tuple[int | None, MotionLabel]] = field(default_factory=list)


def dilate_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Grow a mask by `radius` pixels with a (2r+1)×(2r+1) square element."""
    if radius < 0:
        raise ValidationError(f"Dilation radius must be non-negative, got {radius}")
    if radius == 0:
        return mask
    kernel = np.ones((2 * radius + 1, 2 * radius + 1), dtype=np.uint8)
    grown = cv2.dilate(mask.bits.astype(np.uint8), kernel, iterations=1)
    return BinaryMask(grown.astype(bool))


def compose(
    depth: DepthImage,
    mask_labels: list[tuple[BinaryMask, MotionLabel]],
    dilation_radius: int = 0,
) -> MaskedFrameOutput:
    """Build the MDI and MO-MDI for one frame."""
    shape = depth.data.shape
    all_objects = np.zeros(shape, dtype=bool)
    moving_objects = np.zeros(shape, dtype=bool)

    for mask, label in mask_labels:
        if mask.shape != shape:
            raise DimensionMismatchError(
                f"Mask {mask.width}x{mask.height} does not match depth {depth.width}x{depth.height}",
            )
        bits = dilate_mask(mask, dilation_radius).bits
        all_objects |= bits
        if label.moving:
            moving_objects |= bits

    mdi = np.where(all_objects, 0.0, depth.data)
    mo_mdi = np.where(moving_objects, 0.0, depth.data)

    logger.debug(
        "Composed %d masks: %d px masked in MDI, %d px in MO-MDI",
        len(mask_labels), int(all_objects.sum()), int(moving_objects.sum()),
    )
    return MaskedFrameOutput(
        mdi=DepthImage(mdi),
        mo_mdi=DepthImage(mo_mdi),
        applied_masks=[(label.track_id, label) for _, label in mask_labels],
    )
