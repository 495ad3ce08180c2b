"""
Pinhole geometry for the tracker.

The filter state lives in the world frame; observations are object centroids
in the camera (optical) frame. The observation function is the world-to-camera
rigid transform h(p) = Rᵀ (p − c), where R is the camera orientation and c its
position. h is affine in the state, so its Jacobian only depends on the pose.

Operations:
    backproject_centroid(det, depth, intr): masked-depth centroid, or None
    rotation_from_euler(euler): Tait-Bryan (x, y, z) rotation matrix
    observe_h(p, pose): world point → camera frame
    jacobian_h(pose): 3×6 Jacobian of h with respect to [position, velocity]
    camera_to_world(z, pose): inverse of observe_h
    project_point(z, intr): camera-frame point → pixel
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from scene.errors import DimensionMismatchError, ValidationError
from scene.model import CameraIntrinsics, CameraPose, DepthImage, Detection

logger = logging.getLogger(__name__)

DEFAULT_MIN_VALID_PIXELS = 20


@dataclass(frozen=True, eq=False)
class Observation:
    """Object centroid in the camera frame, plus the pixel it was read at."""

    z: np.ndarray
    pixel: tuple[float, float] = (0.0, 0.0)
    valid_pixels: int = 0

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(3)
        if not np.all(np.isfinite(z)):
            raise ValidationError(f"Observation must be finite: {z}")
        if not z[2] > 0:
            raise ValidationError(f"Observation must lie in front of the camera: z_z={z[2]}")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @property
    def depth(self) -> float:
        return float(self.z[2])


def backproject_centroid(
    det: Detection,
    depth: DepthImage,
    intr: CameraIntrinsics,
    min_valid_pixels: int = DEFAULT_MIN_VALID_PIXELS,
) -> Observation | None:
    """Back-project a detection to a camera-frame centroid.

    Depth is the mean of the valid depth pixels under the mask; the lateral
    coordinates come from the bounding box center. Returns None when fewer
    than min_valid_pixels masked pixels carry depth, so the track coasts.
    """
    if det.mask.shape != depth.data.shape:
        raise DimensionMismatchError(
            f"Mask {det.mask.width}x{det.mask.height} vs depth {depth.width}x{depth.height}",
        )

    # Every set bit is inside the box, so the crop sees the whole mask
    depth_crop = det.bbox.crop(depth.data)
    mask_crop = det.bbox.crop(det.mask.bits)
    samples = depth_crop[mask_crop & (depth_crop > 0)]

    if samples.size < min_valid_pixels:
        logger.debug(
            "Class %d detection has %d valid depth pixels (< %d); no observation",
            det.class_id, samples.size, min_valid_pixels,
        )
        return None

    z_z = float(samples.mean())
    mu_x, mu_y = det.bbox.center()
    z_x = (mu_x - intr.cx) * z_z / intr.fx
    z_y = (mu_y - intr.cy) * z_z / intr.fy
    return Observation(np.array([z_x, z_y, z_z]), pixel=(mu_x, mu_y), valid_pixels=int(samples.size))


def project_point(z: np.ndarray, intr: CameraIntrinsics) -> tuple[float, float]:
    """Pixel coordinates of a camera-frame point (z_z > 0)."""
    return intr.fx * z[0] / z[2] + intr.cx, intr.fy * z[1] / z[2] + intr.cy


def rotation_from_euler(euler) -> np.ndarray:
    """R = Rz(yaw) · Ry(pitch) · Rx(roll) for euler = (roll, pitch, yaw).

    Lowercase "xyz" in scipy means extrinsic rotations about x, then y, then z,
    which composes to exactly this product.
    """
    return Rotation.from_euler("xyz", np.asarray(euler, dtype=float)).as_matrix()


def observe_h(p: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Camera-frame coordinates of world point p."""
    rotation = rotation_from_euler(pose.euler)
    return rotation.T @ (np.asarray(p, dtype=float)[:3] - pose.position)


def camera_to_world(z: np.ndarray, pose: CameraPose) -> np.ndarray:
    """World coordinates of camera-frame point z."""
    rotation = rotation_from_euler(pose.euler)
    return rotation @ np.asarray(z, dtype=float) + pose.position


def jacobian_h(pose: CameraPose) -> np.ndarray:
    """∂h/∂x for the 6-state [p, v]: [Rᵀ | 0₃]."""
    jacobian = np.zeros((3, 6))
    jacobian[:, :3] = rotation_from_euler(pose.euler).T
    return jacobian
