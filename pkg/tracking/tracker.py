"""
Filter bank: one extended Kalman filter per tracked dynamic object.

On every frame:
1. Compute dt from the frame timestamp and predict every live track
2. Gate detections by score and count, back-project them to camera-frame centroids
3. Associate centroids to tracks (same class, world-frame distance under the gate)
4. Update matched tracks, reset their coast counters and classify them
5. Coast unmatched tracks, classifying them from their last mask
6. Birth a new track for every unmatched centroid
7. Retire tracks unseen for max_coast_frames frames

The bank is a single state machine: callers must serialize step() calls.
Track ids are never reused within a run.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from masking.moc import MocConfig, Motion, MotionLabel, classify
from scene.errors import OutOfOrderFrameError, ValidationError
from scene.model import (
    BinaryMask,
    BoundingBox,
    CameraIntrinsics,
    CameraPose,
    Detection,
    Frame,
    filter_detections,
)
from scene.registry import ObjectClassRegistry
from tracking.ekf import (
    NoiseConfig,
    TrackState,
    init_state,
    observation_noise_diag,
    predict,
    update,
)
from tracking.geometry import Observation, backproject_centroid, rotation_from_euler

logger = logging.getLogger(__name__)

# Cost assigned to forbidden pairs in the optimal assignment
_FORBIDDEN = 1e9


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DEAD = "dead"


@dataclass
class Track:
    """A tracked object: its filter plus the bookkeeping the bank needs."""

    id: int
    class_id: int
    state: TrackState
    last_mask: BinaryMask
    last_bbox: BoundingBox
    frames_since_seen: int = 0
    status: TrackStatus = TrackStatus.CONFIRMED
    hits: int = 1
    age: int = 1
    label: MotionLabel | None = None

    @property
    def alive(self) -> bool:
        return self.status is not TrackStatus.DEAD


class TrackSnapshot(NamedTuple):
    """Kinematics of one live track, safe to hand to other stages."""

    id: int
    class_id: int
    position: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True)
class TrackerConfig:
    """Filter-bank tunables. Defaults are the experimental parameters of the original system."""

    max_coast_frames: int = 10
    gate_distance: float = 1.0
    score_threshold: float = 0.1
    max_detections: int = 5
    min_valid_pixels: int = 20
    association: str = "greedy"
    confirm_hits: int = 1
    confirm_window: int = 3
    velocity_sigma: float = 1.0
    init_inflation: float = 4.0
    lateral_sigma: float = 0.02
    depth_noise_quadratic: float = 0.0012
    depth_noise_offset: float = 0.0019
    gamma_velocity_exponent: int = 1

    def __post_init__(self):
        if self.max_coast_frames < 1:
            raise ValidationError(f"max_coast_frames must be >= 1: {self.max_coast_frames}")
        if not self.gate_distance > 0:
            raise ValidationError(f"gate_distance must be positive: {self.gate_distance}")
        if self.association not in ("greedy", "hungarian"):
            raise ValidationError(f"Unknown association method: {self.association}")
        if self.confirm_hits < 1 or self.confirm_window < self.confirm_hits:
            raise ValidationError(
                f"Need 1 <= confirm_hits <= confirm_window, got {self.confirm_hits}/{self.confirm_window}",
            )

    def observation_noise(self, z_z: float) -> tuple[float, float, float]:
        return observation_noise_diag(
            z_z, self.lateral_sigma, self.depth_noise_quadratic, self.depth_noise_offset,
        )


@dataclass(frozen=True)
class Association:
    """Result of matching observations to tracks, by list index."""

    matches: list[tuple[int, int]]
    unmatched_tracks: list[int]
    unmatched_observations: list[int]


@dataclass(frozen=True)
class StepResult:
    """Everything one frame produced for the downstream stages."""

    timestamp: float
    tracks: list[TrackSnapshot]
    labels: list[MotionLabel]
    mask_labels: list[tuple[BinaryMask, MotionLabel]]
    born: list[int] = field(default_factory=list)
    retired: list[int] = field(default_factory=list)


def associate(
    tracks: list[Track],
    observations: list[tuple[Detection, Observation]],
    pose: CameraPose,
    gate_distance: float = 1.0,
    method: str = "greedy",
) -> Association:
    """Match observations to tracks by world-frame distance.

    Only pairs of the same class closer than gate_distance are candidates.
    Greedy picks the closest remaining pair first; ties go to the smaller
    distance, then the lower track id. Hungarian minimizes total distance.
    """
    rotation = rotation_from_euler(pose.euler)
    world = [rotation @ obs.z + pose.position for _, obs in observations]

    candidates = []
    for ti, track in enumerate(tracks):
        for oi, (det, _) in enumerate(observations):
            if det.class_id != track.class_id:
                continue
            distance = float(np.linalg.norm(track.state.position - world[oi]))
            if distance < gate_distance:
                candidates.append((distance, track.id, oi, ti))

    matches: list[tuple[int, int]] = []
    if method == "hungarian" and candidates:
        cost = np.full((len(tracks), len(observations)), _FORBIDDEN)
        for distance, _, oi, ti in candidates:
            cost[ti, oi] = distance
        rows, cols = linear_sum_assignment(cost)
        matches = [(int(ti), int(oi)) for ti, oi in zip(rows, cols) if cost[ti, oi] < _FORBIDDEN]
    else:
        used_tracks: set[int] = set()
        used_obs: set[int] = set()
        for _, _, oi, ti in sorted(candidates):
            if ti in used_tracks or oi in used_obs:
                continue
            matches.append((ti, oi))
            used_tracks.add(ti)
            used_obs.add(oi)

    matched_tracks = {ti for ti, _ in matches}
    matched_obs = {oi for _, oi in matches}
    return Association(
        matches=sorted(matches),
        unmatched_tracks=[ti for ti in range(len(tracks)) if ti not in matched_tracks],
        unmatched_observations=[oi for oi in range(len(observations)) if oi not in matched_obs],
    )


def world_positions(tracks: list[Track]) -> list[TrackSnapshot]:
    """Snapshot of confirmed live tracks for downstream consumers."""
    return [
        TrackSnapshot(
            track.id, track.class_id,
            np.array(track.state.position), np.array(track.state.velocity),
        )
        for track in tracks
        if track.status is TrackStatus.CONFIRMED
    ]


class Tracker:
    """The filter bank. Owns every live track and the id counter."""

    def __init__(
        self,
        registry: ObjectClassRegistry,
        intrinsics: CameraIntrinsics,
        config: TrackerConfig | None = None,
        moc_config: MocConfig | None = None,
    ):
        self.registry = registry
        self.intrinsics = intrinsics
        self.config = config or TrackerConfig()
        self.moc_config = moc_config or MocConfig()
        self.tracks: list[Track] = []
        self.last_timings: dict[str, float] = {"tracking": 0.0, "moc": 0.0}
        self._next_id = 0
        self._last_timestamp: float | None = None

    def _noise(self, class_id: int, z_z: float = 1.0) -> NoiseConfig:
        return NoiseConfig(
            accel_sigma=self.registry.get(class_id).accel_sigma,
            r_diag=self.config.observation_noise(z_z),
            gamma_velocity_exponent=self.config.gamma_velocity_exponent,
        )

    def _classify(self, track: Track, mask: BinaryMask) -> tuple[MotionLabel, float]:
        started = time.perf_counter()
        label = classify(track, mask, self.registry, self.moc_config)
        track.label = label
        return label, time.perf_counter() - started

    def step(self, frame: Frame) -> StepResult:
        """Advance the bank by one frame. Rejects non-increasing timestamps."""
        timestamp = frame.timestamp
        if self._last_timestamp is not None and timestamp <= self._last_timestamp:
            raise OutOfOrderFrameError(
                f"Frame t={timestamp:.6f} does not follow t={self._last_timestamp:.6f}",
            )
        dt = 0.0 if self._last_timestamp is None else timestamp - self._last_timestamp
        self._last_timestamp = timestamp

        started = time.perf_counter()
        moc_seconds = 0.0
        cfg = self.config

        # 1. Predict
        for track in self.tracks:
            track.state = predict(track.state, dt, self._noise(track.class_id))
            if track.state.divergent:
                track.status = TrackStatus.DEAD
        live = [track for track in self.tracks if track.alive]

        # 2. Gate and back-project detections
        observed: list[tuple[Detection, Observation]] = []
        unobservable: list[Detection] = []
        for det in filter_detections(frame.detections, cfg.score_threshold, cfg.max_detections):
            if det.class_id not in self.registry:
                logger.warning("Dropping detection of unregistered class %d", det.class_id)
                continue
            obs = backproject_centroid(det, frame.depth, self.intrinsics, cfg.min_valid_pixels)
            if obs is None:
                unobservable.append(det)
            else:
                observed.append((det, obs))

        # 3. Associate
        association = associate(live, observed, frame.pose, cfg.gate_distance, cfg.association)

        mask_labels: list[tuple[BinaryMask, MotionLabel]] = []

        # 4. Update matched tracks
        for ti, oi in association.matches:
            track = live[ti]
            det, obs = observed[oi]
            skipped_before = track.state.skipped_updates
            track.state = update(track.state, obs, frame.pose, self._noise(track.class_id, obs.depth))
            if track.state.divergent:
                track.status = TrackStatus.DEAD
                mask_labels.append((det.mask, MotionLabel(None, Motion.MOVING, 0.0, 0.0)))
                continue
            if track.state.skipped_updates > skipped_before:
                # No measurement was applied: the track coasts, the detection is still masked.
                track.frames_since_seen += 1
                label, seconds = self._classify(track, track.last_mask)
                moc_seconds += seconds
                mask_labels.append((det.mask, label))
                continue
            track.frames_since_seen = 0
            track.hits += 1
            if track.status is TrackStatus.TENTATIVE and track.hits >= cfg.confirm_hits:
                track.status = TrackStatus.CONFIRMED
            label, seconds = self._classify(track, det.mask)
            moc_seconds += seconds
            track.last_mask = det.mask
            track.last_bbox = det.bbox
            mask_labels.append((det.mask, label))

        # 5. Coast unmatched tracks
        for ti in association.unmatched_tracks:
            track = live[ti]
            track.frames_since_seen += 1
            _, seconds = self._classify(track, track.last_mask)
            moc_seconds += seconds

        for track in live:
            track.age += 1

        # 6. Birth
        born = []
        rotation = rotation_from_euler(frame.pose.euler)
        for oi in association.unmatched_observations:
            det, obs = observed[oi]
            state = init_state(
                rotation @ obs.z + frame.pose.position, timestamp,
                cfg.observation_noise(obs.depth), cfg.velocity_sigma, cfg.init_inflation,
            )
            track = Track(
                id=self._next_id,
                class_id=det.class_id,
                state=state,
                last_mask=det.mask,
                last_bbox=det.bbox,
                status=TrackStatus.CONFIRMED if cfg.confirm_hits <= 1 else TrackStatus.TENTATIVE,
            )
            self._next_id += 1
            label, seconds = self._classify(track, det.mask)
            moc_seconds += seconds
            mask_labels.append((det.mask, label))
            live.append(track)
            born.append(track.id)
            logger.info(
                "Track %d born (class %d) at %s", track.id, track.class_id,
                np.round(track.state.position, 3).tolist(),
            )

        # Detections without usable depth are still dynamic objects
        for det in unobservable:
            mask_labels.append((det.mask, MotionLabel(None, Motion.MOVING, 0.0, 0.0)))

        # 7. Retire
        for track in live:
            if not track.alive:
                continue
            if track.frames_since_seen >= cfg.max_coast_frames:
                track.status = TrackStatus.DEAD
                logger.info("Track %d retired after %d unseen frames", track.id, track.frames_since_seen)
            elif (track.status is TrackStatus.TENTATIVE
                  and track.age >= cfg.confirm_window and track.hits < cfg.confirm_hits):
                track.status = TrackStatus.DEAD
                logger.info("Tentative track %d dropped before confirmation", track.id)
        retired = sorted({track.id for track in self.tracks + live if not track.alive})

        self.tracks = [track for track in live if track.alive]

        elapsed = time.perf_counter() - started
        self.last_timings = {"tracking": elapsed - moc_seconds, "moc": moc_seconds}

        return StepResult(
            timestamp=timestamp,
            tracks=world_positions(self.tracks),
            labels=[track.label for track in self.tracks if track.label is not None],
            mask_labels=mask_labels,
            born=born,
            retired=retired,
        )

    def world_positions(self) -> list[TrackSnapshot]:
        return world_positions(self.tracks)

    def live_tracks(self) -> list[Track]:
        return list(self.tracks)
