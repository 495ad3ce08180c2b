"""
Ray-cast renderer for scene scripts.

Each pixel casts a ray through the pinhole model. The ray direction in the
camera frame is ((u − cx)/fx, (v − cy)/fy, 1), so the ray parameter at a hit
is directly the z-depth the sensor reports. Every shape is intersected
analytically and the nearest hit wins (z-buffer); the background plane only
contributes depth, never a mask.

Frames are pure functions of (script, frame index): the noise generator is
seeded with (seed, index), so frames can be rendered in any order or in
parallel and still produce the same sequence.

Operations:
    render_frame(script, t): Frame plus ground-truth kinematics
    generate_sequence(script, out_dir): write a TUM-layout sequence
"""

from __future__ import annotations

import json
import logging
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from scene.errors import OutputWriteError, ScriptError
from scene.model import BinaryMask, CameraPose, DepthImage, Detection, Frame
from scene.registry import ObjectClassRegistry, default_registry
from sequence import schema
from sequence.detections import DetectionRecord, write_detections
from sequence.records import GroundTruthEntry, write_jsonl
from sequence.tum import format_tum_pose, write_depth_png
from synth.scene_script import ObjectScript, SceneScript
from tracking.geometry import observe_h, rotation_from_euler

logger = logging.getLogger(__name__)

# Flat placeholder colors; object pixels get a per-class gray level
_BACKGROUND_GRAY = 96

# Tolerance on the frame-time range check
_TIME_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class RenderedFrame:
    frame: Frame
    ground_truth: list[GroundTruthEntry] = field(default_factory=list)
    object_ids: np.ndarray | None = field(default=None, repr=False)


# ── Ray intersection ─────────────────────────────────────────────


def camera_rays(script: SceneScript, pose: CameraPose) -> np.ndarray:
    """World-frame ray directions (H, W, 3) with unit camera-frame z component."""
    intr = script.intrinsics
    u, v = np.meshgrid(np.arange(intr.width, dtype=float), np.arange(intr.height, dtype=float))
    rays = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    return rays @ rotation_from_euler(pose.euler).T


def intersect_sphere(origin: np.ndarray, rays: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Nearest positive ray parameter per pixel, inf where the ray misses.

    From inside the sphere the near root is negative and the far root is the hit.
    """
    oc = origin - center
    a = np.einsum("...i,...i->...", rays, rays)
    b = 2.0 * rays @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4.0 * a * c
    hit = np.full(a.shape, np.inf)
    ok = disc >= 0
    root = np.sqrt(disc[ok])
    near = (-b[ok] - root) / (2.0 * a[ok])
    far = (-b[ok] + root) / (2.0 * a[ok])
    hit[ok] = np.where(near > 0, near, np.where(far > 0, far, np.inf))
    return hit


def intersect_box(origin: np.ndarray, rays: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Slab-method intersection with a world-axis-aligned box."""
    safe = np.where(np.abs(rays) < 1e-12, 1e-12, rays)
    t1 = (lo - origin) / safe
    t2 = (hi - origin) / safe
    t_near = np.minimum(t1, t2).max(axis=-1)
    t_far = np.maximum(t1, t2).min(axis=-1)
    return np.where((t_far >= t_near) & (t_near > 0), t_near, np.inf)


def intersect_plane(origin: np.ndarray, rays: np.ndarray, point: np.ndarray, normal: np.ndarray) -> np.ndarray:
    denom = rays @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        s = ((point - origin) @ normal) / denom
    return np.where((np.abs(denom) > 1e-12) & (s > 0), s, np.inf)


def _intersect(obj: ObjectScript, center: np.ndarray, t: float, origin, rays) -> np.ndarray:
    if obj.shape == "sphere":
        return intersect_sphere(origin, rays, center, obj.radius_at(t))
    half = obj.size / 2.0
    return intersect_box(origin, rays, center - half, center + half)


# ── Noise ────────────────────────────────────────────────────────


def shift_mask(bits: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate a mask by whole pixels; bits shifted off the image are lost."""
    shifted = np.zeros_like(bits)
    h, w = bits.shape
    src = bits[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    shifted[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return shifted


# ── Rendering ────────────────────────────────────────────────────


def _check_classes(script: SceneScript, registry: ObjectClassRegistry):
    for i, obj in enumerate(script.objects):
        if obj.class_id not in registry:
            raise ScriptError(f"objects[{i}].class_id", f"class {obj.class_id} is not registered")


def render_frame(
    script: SceneScript,
    t: float,
    index: int = 0,
    registry: ObjectClassRegistry | None = None,
) -> RenderedFrame:
    """Render the scene at time t.

    Objects whose center is behind the camera are left out of the frame
    entirely. Ground truth lists every object with at least one visible
    pixel; an object is labelled moving when its analytic speed exceeds its
    class velocity threshold.
    Raises ScriptError when t lies outside the script duration.
    """
    end = script.start_time + script.duration
    if not script.start_time - _TIME_TOLERANCE <= t <= end + _TIME_TOLERANCE:
        raise ScriptError("t", f"{t} is outside the script duration [{script.start_time}, {end}]")
    registry = registry or default_registry()
    _check_classes(script, registry)
    rng = np.random.default_rng([script.seed, index])
    intr = script.intrinsics
    pose = script.camera_pose(t)
    rays = camera_rays(script, pose)
    origin = pose.position

    zbuffer = np.full((intr.height, intr.width), np.inf)
    owner = np.full((intr.height, intr.width), -1, dtype=int)

    if script.background is not None:
        zbuffer = intersect_plane(origin, rays, script.background.point, script.background.normal)

    centers = []
    for i, obj in enumerate(script.objects):
        center = obj.motion.value(t)
        centers.append(center)
        if observe_h(center, pose)[2] <= 0:
            continue
        hit = _intersect(obj, center, t, origin, rays)
        nearer = hit < zbuffer
        zbuffer[nearer] = hit[nearer]
        owner[nearer] = i

    depth = np.where(np.isfinite(zbuffer), zbuffer, 0.0)
    if script.noise.depth_sigma > 0:
        noisy = depth + rng.normal(0.0, script.noise.depth_sigma, depth.shape)
        depth = np.where(depth > 0, np.maximum(noisy, 0.0), 0.0)

    rgb = np.full((intr.height, intr.width, 3), _BACKGROUND_GRAY, dtype=np.uint8)
    detections = []
    ground_truth = []
    for i, obj in enumerate(script.objects):
        bits = owner == i
        if not bits.any():
            continue
        rgb[bits] = 32 + (obj.class_id * 37) % 200

        velocity = obj.motion.rate(t)
        speed = float(np.linalg.norm(velocity))
        threshold = registry.get(obj.class_id).velocity_threshold
        ground_truth.append(GroundTruthEntry(
            timestamp=t,
            object=i,
            class_id=obj.class_id,
            position=centers[i],
            velocity=velocity,
            camera_position=observe_h(centers[i], pose),
            speed=speed,
            label="moving" if speed > threshold else "idle",
        ))

        if script.noise.dropout > 0 and rng.random() < script.noise.dropout:
            continue
        if script.noise.mask_jitter > 0:
            dx, dy = rng.integers(-script.noise.mask_jitter, script.noise.mask_jitter + 1, size=2)
            bits = shift_mask(bits, int(dx), int(dy))
            if not bits.any():
                continue
        detections.append(Detection.from_mask(obj.class_id, obj.score, BinaryMask(bits)))

    frame = Frame(timestamp=t, depth=DepthImage(depth), pose=pose, detections=tuple(detections), rgb=rgb)
    return RenderedFrame(frame=frame, ground_truth=ground_truth, object_ids=owner)


def render_sequence(script: SceneScript, registry: ObjectClassRegistry | None = None, workers: int = 1):
    """Yield every frame of the script in order, rendered by a thread pool."""
    registry = registry or default_registry()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        yield from pool.map(
            lambda index: render_frame(script, script.time_of(index), index, registry),
            range(script.frames),
        )


# ── Sequence output ──────────────────────────────────────────────


def _write_rendered(root: Path, rendered: RenderedFrame) -> list[DetectionRecord]:
    frame = rendered.frame
    name = schema.frame_filename(frame.timestamp)
    write_depth_png(root / schema.DEPTH_DIR / name, frame.depth)
    rgb_path = root / schema.RGB_DIR / name
    if not cv2.imwrite(str(rgb_path), frame.rgb):
        raise OutputWriteError(rgb_path, OSError("encoder refused the image"))
    return [DetectionRecord.from_detection(frame.timestamp, det) for det in frame.detections]


def generate_sequence(
    script: SceneScript,
    out_dir: str | Path,
    registry: ObjectClassRegistry | None = None,
    workers: int = 1,
    overwrite: bool = False,
) -> Path:
    """Render the script into a sequence directory readable by load_sequence.

    Everything is written into a temporary sibling directory that is renamed
    into place only after the last frame succeeds, so a failure never leaves
    a partial sequence behind.
    """
    out_dir = Path(out_dir)
    registry = registry or default_registry()
    _check_classes(script, registry)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise OutputWriteError(out_dir, FileExistsError("directory is not empty"))

    try:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    except OSError as e:
        raise OutputWriteError(out_dir, e) from e

    try:
        (staging / schema.DEPTH_DIR).mkdir()
        (staging / schema.RGB_DIR).mkdir()
        depth_lines = [schema.image_list_header("depth")]
        rgb_lines = [schema.image_list_header("color")]
        pose_lines = [schema.TRAJECTORY_HEADER]
        records: list[DetectionRecord] = []
        truth: list[GroundTruthEntry] = []

        for rendered in render_sequence(script, registry, workers):
            frame = rendered.frame
            records.extend(_write_rendered(staging, rendered))
            truth.extend(rendered.ground_truth)
            name = schema.frame_filename(frame.timestamp)
            depth_lines.append(f"{frame.timestamp:.6f} {schema.DEPTH_DIR}/{name}")
            rgb_lines.append(f"{frame.timestamp:.6f} {schema.RGB_DIR}/{name}")
            pose_lines.append(format_tum_pose(frame.timestamp, frame.pose))

        (staging / schema.DEPTH_LIST).write_text("\n".join(depth_lines) + "\n", encoding="utf-8")
        (staging / schema.RGB_LIST).write_text("\n".join(rgb_lines) + "\n", encoding="utf-8")
        (staging / schema.GROUNDTRUTH).write_text("\n".join(pose_lines) + "\n", encoding="utf-8")
        (staging / schema.INTRINSICS).write_text(
            json.dumps(script.intrinsics.to_dict(), indent=2) + "\n", encoding="utf-8",
        )
        write_detections(staging / schema.DETECTIONS, records)
        write_jsonl(staging / schema.GROUND_TRUTH_SIDECAR, truth)

        if out_dir.exists():
            shutil.rmtree(out_dir)
        staging.rename(out_dir)
    except OSError as e:
        shutil.rmtree(staging, ignore_errors=True)
        raise OutputWriteError(out_dir, e) from e
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    logger.info(
        "Generated %d frames with %d detections into %s", script.frames, len(records), out_dir,
    )
    return out_dir
