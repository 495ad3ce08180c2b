"""
Filter bank tests.

Tests:
- Association (greedy and optimal, class and distance gates)
- Track birth, ids, ordering of frames, unregistered classes
- Coasting and retirement after ten unseen frames
- Tentative confirmation
- Moving detection of a rendered object that starts moving mid-sequence
- Skipped filter updates count as unseen frames
- Bit-identical track histories across runs
"""

import numpy as np
import pytest

from masking.moc import Motion
from scene.errors import OutOfOrderFrameError, ValidationError
from scene.model import BinaryMask, CameraIntrinsics, CameraPose, DepthImage, Detection, Frame
from scene.registry import CHAIR, CUP, default_registry
from synth.renderer import render_frame
from synth.scene_script import NoiseModel, ObjectScript, ParametricMotion, SceneScript
from tracking import ekf
from tracking.ekf import init_state
from tracking.geometry import Observation
from tracking.tracker import (
    Track,
    TrackerConfig,
    Tracker,
    TrackStatus,
    associate,
)

INTR = CameraIntrinsics(fx=200.0, fy=200.0, cx=80.0, cy=60.0, width=160, height=120)
FPS = 30.0
R_DIAG = (0.0004, 0.0004, 0.0001)
ONSET_FRAME = 15
ONSET_SPEED = 0.5


def _rect_mask(u: int, v: int, half: int = 6) -> BinaryMask:
    bits = np.zeros((INTR.height, INTR.width), dtype=bool)
    bits[v - half:v + half + 1, u - half:u + half + 1] = True
    return BinaryMask(bits)


def _frame(t: float, items=(), pose: CameraPose | None = None, score: float = 0.9) -> Frame:
    """Frame with one square patch per (class_id, u, v, depth) item; 0 depth elsewhere."""
    depth = np.zeros((INTR.height, INTR.width))
    detections = []
    for class_id, u, v, d in items:
        mask = _rect_mask(u, v)
        depth[mask.bits] = d
        detections.append(Detection.from_mask(class_id, score, mask))
    return Frame(t, DepthImage(depth), pose or CameraPose.identity(), tuple(detections))


def _track(track_id: int, x: float, class_id: int = CHAIR) -> Track:
    mask = _rect_mask(80, 60)
    return Track(
        id=track_id,
        class_id=class_id,
        state=init_state(np.array([x, 0.0, 2.0]), 0.0, R_DIAG),
        last_mask=mask,
        last_bbox=mask.tight_bbox(),
    )


def _observation(x: float, class_id: int = CHAIR):
    return Detection.from_mask(class_id, 0.9, _rect_mask(80, 60)), Observation([x, 0.0, 2.0])


def _onset_script(noise: NoiseModel | None = None, seed: int = 0) -> SceneScript:
    """A chair box at rest until ONSET_FRAME, then sliding right at ONSET_SPEED."""
    chair = ObjectScript(
        class_id=CHAIR,
        shape="box",
        size=np.array([0.45, 0.5, 0.05]),
        motion=ParametricMotion(
            np.array([-0.4, 0.1, 2.2]), np.array([ONSET_SPEED, 0.0, 0.0]), onset=ONSET_FRAME / FPS,
        ),
    )
    return SceneScript(
        fps=FPS, frames=ONSET_FRAME + 31, objects=(chair,), noise=noise or NoiseModel(), seed=seed,
    )


@pytest.fixture
def tracker():
    """Tracker over the default classes and a small camera."""
    return Tracker(default_registry().freeze(), INTR)


# ═══════════════════════════════════════════════════════════════════
# Association
# ═══════════════════════════════════════════════════════════════════


class TestAssociation:
    """Matching observations to tracks."""

    def test_nearest_pairs_match(self):
        """Each observation goes to the closest track."""
        tracks = [_track(0, 0.0), _track(1, 0.5)]
        result = associate(tracks, [_observation(0.45), _observation(0.05)], CameraPose.identity())
        assert result.matches == [(0, 1), (1, 0)]
        assert result.unmatched_tracks == [] and result.unmatched_observations == []

    def test_class_gate(self):
        """Observations never match a track of another class."""
        result = associate([_track(0, 0.0)], [_observation(0.01, CUP)], CameraPose.identity())
        assert result.matches == []
        assert result.unmatched_observations == [0]

    def test_distance_gate(self):
        """Pairs at or beyond the gate distance are not candidates."""
        result = associate([_track(0, 0.0)], [_observation(1.0)], CameraPose.identity(), gate_distance=1.0)
        assert result.matches == []
        assert result.unmatched_tracks == [0]

    def test_gate_uses_world_frame(self):
        """The camera pose maps observations into the world before gating."""
        pose = CameraPose(np.array([2.0, 0.0, 0.0]), (0.0, 0.0, 0.0))
        result = associate([_track(0, 2.0)], [_observation(0.0)], pose)
        assert result.matches == [(0, 0)]

    def test_greedy_tie_goes_to_lower_id(self):
        """Equidistant tracks: the lower track id wins."""
        tracks = [_track(7, 0.2), _track(3, -0.2)]
        result = associate(tracks, [_observation(0.0)], CameraPose.identity())
        assert result.matches == [(1, 0)]

    def test_greedy_versus_optimal(self):
        """Greedy takes the closest pair first; the optimal assignment maximizes matches."""
        tracks = [_track(0, 0.0), _track(1, 0.4)]
        observations = [_observation(0.1), _observation(-0.2)]
        greedy = associate(tracks, observations, CameraPose.identity(), 0.5, "greedy")
        optimal = associate(tracks, observations, CameraPose.identity(), 0.5, "hungarian")
        assert greedy.matches == [(0, 0)]
        assert greedy.unmatched_tracks == [1]
        assert optimal.matches == [(0, 1), (1, 0)]

    def test_config_rejects_unknown_method(self):
        """Only greedy and hungarian association exist."""
        with pytest.raises(ValidationError):
            TrackerConfig(association="auction")


# ═══════════════════════════════════════════════════════════════════
# Lifecycle
# ═══════════════════════════════════════════════════════════════════


class TestLifecycle:
    """Birth, coasting, retirement and ordering."""

    def test_birth(self, tracker):
        """An unmatched detection starts a track at its back-projected centroid."""
        step = tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        assert step.born == [0]
        assert len(step.tracks) == 1
        assert np.allclose(step.tracks[0].position, [(100 - 80) * 2.0 / 200.0, 0.0, 2.0])
        assert np.array_equal(step.tracks[0].velocity, np.zeros(3))
        assert step.labels[0].label is Motion.IDLE
        assert len(step.mask_labels) == 1

    def test_matched_detection_keeps_id(self, tracker):
        """A detection close to a live track updates it instead of starting a new one."""
        tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        step = tracker.step(_frame(1 / FPS, [(CHAIR, 101, 60, 2.0)]))
        assert step.born == []
        assert [t.id for t in step.tracks] == [0]

    def test_out_of_order_frame(self, tracker):
        """A frame not later than the previous one is an error."""
        tracker.step(_frame(1.0))
        with pytest.raises(OutOfOrderFrameError):
            tracker.step(_frame(1.0))
        with pytest.raises(OutOfOrderFrameError):
            tracker.step(_frame(0.5))

    def test_unregistered_class_dropped(self, tracker):
        """Detections of unknown classes neither start tracks nor get masked."""
        step = tracker.step(_frame(0.0, [(999, 100, 60, 2.0)]))
        assert step.tracks == []
        assert step.mask_labels == []

    def test_detection_without_depth_is_masked_moving(self, tracker):
        """Too few valid depth pixels: no track, but the mask is still treated as moving."""
        frame = _frame(0.0, [(CHAIR, 100, 60, 0.0)])
        step = tracker.step(frame)
        assert step.tracks == []
        assert len(step.mask_labels) == 1
        mask, label = step.mask_labels[0]
        assert label.track_id is None and label.moving

    def test_coasting_track_keeps_label(self, tracker):
        """Unmatched tracks coast and are classified against their last mask."""
        tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        step = tracker.step(_frame(1 / FPS))
        assert [t.id for t in step.tracks] == [0]
        assert step.labels[0].deformation == 0.0
        assert step.mask_labels == []
        assert tracker.live_tracks()[0].frames_since_seen == 1

    def test_retired_after_ten_unseen_frames(self, tracker):
        """Last seen at frame k: still live at k+9, retired at k+10."""
        k = 2
        for i in range(k + 1):
            tracker.step(_frame(i / FPS, [(CHAIR, 100, 60, 2.0)]))
        for i in range(k + 1, k + 10):
            step = tracker.step(_frame(i / FPS))
        assert [t.id for t in step.tracks] == [0]
        step = tracker.step(_frame((k + 10) / FPS))
        assert step.tracks == []
        assert step.retired == [0]
        assert tracker.live_tracks() == []

    def test_ids_never_reused(self, tracker):
        """A new object after a retirement gets a fresh id."""
        tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        for i in range(1, 11):
            tracker.step(_frame(i / FPS))
        step = tracker.step(_frame(11 / FPS, [(CHAIR, 100, 60, 2.0)]))
        assert step.born == [1]

    def test_tentative_track_hidden_until_confirmed(self):
        """With confirm_hits=2 a track is reported only after its second hit."""
        tracker = Tracker(default_registry(), INTR, TrackerConfig(confirm_hits=2))
        first = tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        assert first.born == [0] and first.tracks == []
        second = tracker.step(_frame(1 / FPS, [(CHAIR, 100, 60, 2.0)]))
        assert [t.id for t in second.tracks] == [0]
        assert tracker.live_tracks()[0].status is TrackStatus.CONFIRMED

    def test_unconfirmed_track_dropped(self):
        """A tentative track without enough hits inside the window dies."""
        tracker = Tracker(default_registry(), INTR, TrackerConfig(confirm_hits=2, confirm_window=3))
        tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        tracker.step(_frame(1 / FPS))
        step = tracker.step(_frame(2 / FPS))
        assert tracker.live_tracks() == []
        assert step.retired == [0]

    def test_skipped_update_counts_as_unseen(self, monkeypatch):
        """A match whose update is skipped neither resets the unseen count nor confirms the track."""
        tracker = Tracker(default_registry(), INTR, TrackerConfig(confirm_hits=2, confirm_window=3))
        tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        monkeypatch.setattr(ekf, "MAX_INNOVATION_CONDITION", 0.5)

        step = tracker.step(_frame(1 / FPS, [(CHAIR, 100, 60, 2.0)]))
        (track,) = tracker.live_tracks()
        assert step.born == []
        assert track.state.skipped_updates == 1
        assert track.frames_since_seen == 1
        assert track.hits == 1
        assert track.status is TrackStatus.TENTATIVE
        assert len(step.mask_labels) == 1

    def test_timings_recorded(self, tracker):
        """Each step records tracking and MOC durations."""
        tracker.step(_frame(0.0, [(CHAIR, 100, 60, 2.0)]))
        assert set(tracker.last_timings) == {"tracking", "moc"}
        assert all(v >= 0 for v in tracker.last_timings.values())


# ═══════════════════════════════════════════════════════════════════
# Motion onset
# ═══════════════════════════════════════════════════════════════════


class TestMotionOnset:
    """A rendered chair idle for half a second, then moving at 0.5 m/s."""

    def test_idle_then_moving(self):
        """Idle before onset, moving within five frames of it, speed within 0.05 m/s thirty frames later."""
        script = _onset_script()
        tracker = Tracker(default_registry().freeze(), script.intrinsics)
        steps = [
            tracker.step(render_frame(script, script.time_of(i), i).frame)
            for i in range(script.frames)
        ]
        assert all(len(s.tracks) == 1 for s in steps)
        assert all(s.labels[0].label is Motion.IDLE for s in steps[:ONSET_FRAME + 1])

        first_moving = next(
            i for i, s in enumerate(steps) if s.labels[0].label is Motion.MOVING
        )
        assert first_moving - ONSET_FRAME <= 5
        assert all(s.labels[0].moving for s in steps[first_moving:])

        final = steps[ONSET_FRAME + 30].tracks[0]
        assert float(np.linalg.norm(final.velocity)) == pytest.approx(ONSET_SPEED, abs=0.05)
        assert final.velocity[0] > 0


# ═══════════════════════════════════════════════════════════════════
# Determinism
# ═══════════════════════════════════════════════════════════════════


class TestDeterminism:
    """Same frames in, same track history out."""

    def test_bit_identical_histories(self):
        """Two trackers fed the same noisy frames agree to the last bit."""
        script = _onset_script(NoiseModel(depth_sigma=0.01, dropout=0.1, mask_jitter=1), seed=9)
        frames = [render_frame(script, script.time_of(i), i).frame for i in range(script.frames)]

        histories = []
        for _ in range(2):
            tracker = Tracker(default_registry().freeze(), script.intrinsics)
            history = []
            for frame in frames:
                step = tracker.step(frame)
                history.append((
                    [(t.id, t.position.tobytes(), t.velocity.tobytes()) for t in step.tracks],
                    [(label.track_id, label.label, label.speed, label.deformation) for label in step.labels],
                    [track.state.P.tobytes() for track in tracker.live_tracks()],
                ))
            histories.append(history)
        assert histories[0] == histories[1]
