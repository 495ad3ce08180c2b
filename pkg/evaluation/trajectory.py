"""
Absolute trajectory error.

Follows the TUM benchmark protocol: associate estimated and reference poses
by nearest timestamp within max_dt, optionally rigidly align the estimate to
the reference (rotation + translation, no scale), then take the RMSE of the
translational residuals.

Operations:
    read_trajectory(path): TUM trajectory file → Trajectory
    associate_trajectories(est, ref, max_dt): timestamp pairs
    align_trajectories(est, ref, max_dt): least-squares rigid transform
    ate_rmse(est, ref, aligned): meters
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from scene.errors import AlignmentError, ValidationError
from sequence.tum import read_trajectory_arrays

logger = logging.getLogger(__name__)

# Second singular value of the centered points, relative to the first,
# below which the geometry counts as collinear
_COLLINEAR_RATIO = 1e-6


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Timestamped positions and (qx, qy, qz, qw) orientations."""

    timestamps: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray | None = None

    def __post_init__(self):
        timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = timestamps.size
        quaternions = (
            np.tile([0.0, 0.0, 0.0, 1.0], (n, 1)) if self.quaternions is None
            else np.asarray(self.quaternions, dtype=float).reshape(-1, 4)
        )
        if positions.shape[0] != n or quaternions.shape[0] != n:
            raise ValidationError(
                f"Trajectory arrays disagree: {n} timestamps, {positions.shape[0]} positions, "
                f"{quaternions.shape[0]} orientations",
            )
        if np.any(np.diff(timestamps) <= 0):
            raise ValidationError("Trajectory timestamps must be strictly increasing")
        for name, array in (("timestamps", timestamps), ("positions", positions), ("quaternions", quaternions)):
            array.flags.writeable = False
            object.__setattr__(self, name, array)

    def __len__(self) -> int:
        return self.timestamps.size

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> Trajectory:
        """Trajectory with every pose pre-multiplied by the rigid transform."""
        positions = self.positions @ rotation.T + translation
        orientations = Rotation.from_matrix(rotation) * Rotation.from_quat(self.quaternions)
        return Trajectory(self.timestamps, positions, orientations.as_quat())


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x ↦ rotation · x + translation. `degenerate` flags collinear input geometry."""

    rotation: np.ndarray
    translation: np.ndarray
    pairs: int
    degenerate: bool = False

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


def read_trajectory(path: str | Path) -> Trajectory:
    timestamps, positions, quaternions = read_trajectory_arrays(path)
    # Sorted on read; duplicates would break strict ordering
    keep = np.concatenate([[True], np.diff(timestamps) > 0]) if timestamps.size else np.array([], dtype=bool)
    if not np.all(keep):
        logger.warning("%s: dropping %d duplicate timestamps", path, int((~keep).sum()))
    return Trajectory(timestamps[keep], positions[keep], quaternions[keep])


def associate_trajectories(est: Trajectory, ref: Trajectory, max_dt: float = 0.02) -> list[tuple[int, int]]:
    """Greedy one-to-one timestamp pairing, closest pairs first, never beyond max_dt."""
    if len(est) == 0 or len(ref) == 0:
        return []
    diff = np.abs(est.timestamps[:, None] - ref.timestamps[None, :])
    candidates = np.argwhere(diff <= max_dt)
    order = np.lexsort((candidates[:, 1], candidates[:, 0], diff[candidates[:, 0], candidates[:, 1]]))

    used_est: set[int] = set()
    used_ref: set[int] = set()
    pairs = []
    for i, j in candidates[order]:
        if i in used_est or j in used_ref:
            continue
        used_est.add(int(i))
        used_ref.add(int(j))
        pairs.append((int(i), int(j)))
    return sorted(pairs)


def _paired_points(est: Trajectory, ref: Trajectory, max_dt: float) -> tuple[np.ndarray, np.ndarray]:
    pairs = associate_trajectories(est, ref, max_dt)
    if not pairs:
        raise AlignmentError(f"No estimated pose lies within {max_dt} s of a reference pose")
    ei, ri = (np.array(index) for index in zip(*pairs))
    return est.positions[ei], ref.positions[ri]


def fit_rigid_transform(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Closed-form least-squares R, t minimizing Σ‖R·source_i + t − target_i‖²."""
    if source.shape[0] < 3:
        raise AlignmentError(f"Rigid alignment needs at least 3 pairs, got {source.shape[0]}")
    source_mean = source.mean(axis=0)
    target_mean = target.mean(axis=0)
    h = (source - source_mean).T @ (target - target_mean)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = target_mean - rotation @ source_mean

    spread = np.linalg.svd(source - source_mean, compute_uv=False)
    degenerate = bool(spread[0] == 0 or spread[1] / spread[0] < _COLLINEAR_RATIO)
    if degenerate:
        logger.warning("Alignment geometry is collinear; rotation about the line is undetermined")
    return RigidTransform(rotation, translation, source.shape[0], degenerate)


def align_trajectories(est: Trajectory, ref: Trajectory, max_dt: float = 0.02) -> RigidTransform:
    """Rigid transform that best maps the estimate onto the reference."""
    source, target = _paired_points(est, ref, max_dt)
    return fit_rigid_transform(source, target)


def ate_rmse(est: Trajectory, ref: Trajectory, aligned: bool = True, max_dt: float = 0.02) -> float:
    """Translational RMSE in meters, after rigid alignment when `aligned`."""
    source, target = _paired_points(est, ref, max_dt)
    if aligned:
        source = fit_rigid_transform(source, target).apply(source)
    residuals = np.linalg.norm(source - target, axis=1)
    rmse = float(np.sqrt(np.mean(residuals ** 2)))
    logger.debug("ATE over %d pairs (aligned=%s): %.6f m", len(residuals), aligned, rmse)
    return rmse
