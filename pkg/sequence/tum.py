"""
TUM RGB-D sequence ingestion.

A sequence directory holds:
    depth.txt        "timestamp filename" list of 16-bit depth PNGs (required)
    groundtruth.txt  "timestamp tx ty tz qx qy qz qw" camera trajectory (required)
    rgb.txt          "timestamp filename" list of color images (optional)
    detections.jsonl detection records (optional, see sequence.detections)
    intrinsics.json  camera intrinsics (optional; otherwise configured)

The streams are asynchronous. associate_streams() pairs every depth frame
with the nearest rgb image, camera pose and detection group within max_dt;
poses are interpolated between bracketing trajectory entries.

Operations:
    load_sequence(root): parse the list files into a SequenceManifest
    associate_streams(manifest, max_dt): synchronized frame skeletons
    read_depth_png(path, scale_factor): DepthImage in meters
    write_depth_png(path, depth, scale_factor): 16-bit PNG
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from scene.errors import (
    DepthFormatError,
    NoFramesAssociatedError,
    OutputWriteError,
    SequenceFormatError,
)
from scene.model import CameraIntrinsics, CameraPose, DepthImage, Detection
from sequence import schema
from sequence.detections import read_detections

logger = logging.getLogger(__name__)


# ── Pose conversions ─────────────────────────────────────────────


def pose_from_tum(position, quaternion) -> CameraPose:
    """CameraPose from a TUM position and (qx, qy, qz, qw) quaternion."""
    euler = Rotation.from_quat(np.asarray(quaternion, dtype=float)).as_euler("xyz")
    return CameraPose(np.asarray(position, dtype=float), tuple(euler))


def pose_quaternion(pose: CameraPose) -> np.ndarray:
    """(qx, qy, qz, qw) of a pose's orientation."""
    return Rotation.from_euler("xyz", pose.euler).as_quat()


def format_tum_pose(timestamp: float, pose: CameraPose) -> str:
    """One trajectory line: "timestamp tx ty tz qx qy qz qw"."""
    values = [*pose.position.tolist(), *pose_quaternion(pose).tolist()]
    return f"{timestamp:.6f} " + " ".join(f"{v:.9f}" for v in values)


# ── Text list parsing ────────────────────────────────────────────


def read_tum_file(path: str | Path, value_count: int) -> list[tuple[int, float, list[str]]]:
    """Parse a TUM text file into (line number, timestamp, values) rows.

    Comment and blank lines are skipped. Lines with the wrong number of
    fields are reported and skipped; an unparseable timestamp is an error.
    Rows come back sorted by timestamp.
    """
    path = Path(path)
    if not path.is_file():
        raise SequenceFormatError(path, "file not found")

    rows = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                timestamp = float(parts[0])
            except ValueError:
                raise SequenceFormatError(path, f"unparseable timestamp {parts[0]!r}", line_no) from None
            if len(parts) - 1 != value_count:
                logger.warning(
                    "%s:%d: expected %d values after the timestamp, found %d; line skipped",
                    path, line_no, value_count, len(parts) - 1,
                )
                continue
            rows.append((line_no, timestamp, parts[1:]))

    timestamps = [row[1] for row in rows]
    if any(b <= a for a, b in zip(timestamps, timestamps[1:])):
        logger.warning("%s: timestamps are not strictly increasing; sorting", path)
        rows.sort(key=lambda row: row[1])
    return rows


def read_trajectory_arrays(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Timestamps (N,), positions (N, 3) and quaternions (N, 4) of a TUM trajectory."""
    times, positions, quaternions = [], [], []
    for line_no, timestamp, values in read_tum_file(path, 7):
        try:
            numbers = [float(v) for v in values]
        except ValueError:
            logger.warning("%s:%d: non-numeric pose values; line skipped", path, line_no)
            continue
        if np.linalg.norm(numbers[3:]) == 0:
            logger.warning("%s:%d: zero quaternion; line skipped", path, line_no)
            continue
        times.append(timestamp)
        positions.append(numbers[:3])
        quaternions.append(numbers[3:])
    return (
        np.asarray(times, dtype=float),
        np.asarray(positions, dtype=float).reshape(-1, 3),
        np.asarray(quaternions, dtype=float).reshape(-1, 4),
    )


# ── Manifest ─────────────────────────────────────────────────────


@dataclass
class SequenceManifest:
    """Parsed, sorted contents of a sequence directory."""

    root: Path
    depth: list[tuple[float, Path]]
    rgb: list[tuple[float, Path]]
    trajectory_times: np.ndarray
    trajectory_positions: np.ndarray
    trajectory_quaternions: np.ndarray
    intrinsics: CameraIntrinsics
    detections_path: Path | None = None

    @property
    def trajectory(self) -> list[tuple[float, CameraPose]]:
        return [
            (float(t), pose_from_tum(p, q))
            for t, p, q in zip(self.trajectory_times, self.trajectory_positions,
                               self.trajectory_quaternions)
        ]


@dataclass(frozen=True, eq=False)
class FrameSkeleton:
    """A synchronized frame whose images are not loaded yet."""

    timestamp: float
    depth_path: Path
    pose: CameraPose
    rgb_path: Path | None = None
    detections: tuple[Detection, ...] = field(default=())


def _read_image_list(root: Path, name: str) -> list[tuple[float, Path]]:
    return [(t, root / values[0]) for _, t, values in read_tum_file(root / name, 1)]


def load_sequence(
    root: str | Path,
    intrinsics: CameraIntrinsics | None = None,
    detections_path: str | Path | None = None,
) -> SequenceManifest:
    """Parse a TUM-layout sequence directory.

    Intrinsics come from intrinsics.json in the sequence when present,
    otherwise from the argument, otherwise the TUM fr3 defaults.
    """
    root = Path(root)
    if not root.is_dir():
        raise SequenceFormatError(root, "sequence directory not found")

    depth = _read_image_list(root, schema.DEPTH_LIST)
    rgb = _read_image_list(root, schema.RGB_LIST) if (root / schema.RGB_LIST).is_file() else []
    times, positions, quaternions = read_trajectory_arrays(root / schema.GROUNDTRUTH)

    intrinsics_file = root / schema.INTRINSICS
    if intrinsics_file.is_file():
        try:
            intrinsics = CameraIntrinsics(**json.loads(intrinsics_file.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, TypeError) as e:
            raise SequenceFormatError(intrinsics_file, f"invalid intrinsics: {e}") from e
    intrinsics = intrinsics or CameraIntrinsics.tum_fr3()

    if detections_path is None and (root / schema.DETECTIONS).is_file():
        detections_path = root / schema.DETECTIONS

    manifest = SequenceManifest(
        root=root,
        depth=depth,
        rgb=rgb,
        trajectory_times=times,
        trajectory_positions=positions,
        trajectory_quaternions=quaternions,
        intrinsics=intrinsics,
        detections_path=Path(detections_path) if detections_path else None,
    )
    logger.info(
        "Loaded sequence %s: %d depth, %d rgb, %d poses, detections: %s",
        root, len(depth), len(rgb), len(times), manifest.detections_path or "none",
    )
    return manifest


# ── Stream association ───────────────────────────────────────────


def _nearest(times: np.ndarray, t: float) -> int | None:
    """Index of the entry closest to t (earlier wins ties), or None if empty."""
    if times.size == 0:
        return None
    i = int(np.searchsorted(times, t))
    if i == 0:
        return 0
    if i == times.size:
        return times.size - 1
    return i - 1 if t - times[i - 1] <= times[i] - t else i


def interpolate_pose(manifest: SequenceManifest, t: float, max_dt: float) -> CameraPose | None:
    """Camera pose at t, or None when no trajectory entry lies within max_dt.

    With entries within max_dt on both sides, position is interpolated
    linearly and orientation by slerp; otherwise the nearest entry is used.
    """
    times = manifest.trajectory_times
    nearest = _nearest(times, t)
    if nearest is None or abs(times[nearest] - t) > max_dt:
        return None

    i = int(np.searchsorted(times, t))
    if 0 < i < times.size and times[i] != t:
        t0, t1 = times[i - 1], times[i]
        if t - t0 <= max_dt and t1 - t <= max_dt:
            alpha = (t - t0) / (t1 - t0)
            position = (1 - alpha) * manifest.trajectory_positions[i - 1] + alpha * manifest.trajectory_positions[i]
            slerp = Slerp([t0, t1], Rotation.from_quat(manifest.trajectory_quaternions[i - 1:i + 1]))
            return CameraPose(position, tuple(slerp([t]).as_euler("xyz")[0]))

    return pose_from_tum(manifest.trajectory_positions[nearest], manifest.trajectory_quaternions[nearest])


def associate_streams(
    manifest: SequenceManifest,
    max_dt: float = 0.02,
    detections: dict[float, list[Detection]] | None = None,
) -> list[FrameSkeleton]:
    """Synchronize depth frames with poses, rgb images and detections.

    A pose within max_dt is required; frames without one are dropped and
    counted. Rgb images and detections are attached when within max_dt.
    Detections are read from the manifest's detection file when not given.
    """
    if not max_dt > 0:
        raise ValueError(f"max_dt must be positive, got {max_dt}")

    if detections is None and manifest.detections_path is not None:
        detections = read_detections(
            manifest.detections_path, manifest.intrinsics.width, manifest.intrinsics.height,
        )
    detections = detections or {}
    detection_times = np.asarray(sorted(detections), dtype=float)
    rgb_times = np.asarray([t for t, _ in manifest.rgb], dtype=float)

    frames = []
    dropped = 0
    for timestamp, depth_path in manifest.depth:
        pose = interpolate_pose(manifest, timestamp, max_dt)
        if pose is None:
            dropped += 1
            continue

        rgb_path = None
        i = _nearest(rgb_times, timestamp)
        if i is not None and abs(rgb_times[i] - timestamp) <= max_dt:
            rgb_path = manifest.rgb[i][1]

        frame_detections: tuple[Detection, ...] = ()
        i = _nearest(detection_times, timestamp)
        if i is not None and abs(detection_times[i] - timestamp) <= max_dt:
            frame_detections = tuple(detections[float(detection_times[i])])

        frames.append(FrameSkeleton(timestamp, depth_path, pose, rgb_path, frame_detections))

    if dropped:
        logger.warning("Dropped %d of %d depth frames with no pose within %.3f s",
                       dropped, len(manifest.depth), max_dt)
    if not frames:
        raise NoFramesAssociatedError(
            f"No depth frame in {manifest.root} has a pose within {max_dt} s",
        )
    logger.info("Associated %d frames", len(frames))
    return frames


# ── Depth images ─────────────────────────────────────────────────


def read_depth_png(path: str | Path, scale_factor: float = schema.DEPTH_SCALE) -> DepthImage:
    """Read a 16-bit depth PNG; raw / scale_factor gives meters, raw 0 stays invalid."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DepthFormatError(f"Cannot read depth image {path}")
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise DepthFormatError(
            f"Depth image {path} must be 16-bit single channel, got {raw.dtype} with shape {raw.shape}",
        )
    return DepthImage.from_raw(raw, scale_factor)


def write_depth_png(path: str | Path, depth: DepthImage, scale_factor: float = schema.DEPTH_SCALE) -> Path:
    path = Path(path)
    try:
        written = cv2.imwrite(str(path), depth.to_raw(scale_factor))
    except cv2.error as e:
        raise OutputWriteError(path, e) from e
    if not written:
        raise OutputWriteError(path, OSError("encoder refused the image"))
    return path
