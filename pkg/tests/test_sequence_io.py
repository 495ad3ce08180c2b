"""
Sequence ingestion and output tests.

Tests:
- Run-length mask encoding and its error cases
- Detection files
- TUM list and trajectory parsing
- Stream association and pose interpolation
- 16-bit depth PNGs
- Run outputs (image lists, track log, trajectory)
"""

import json
import logging
import math

import cv2
import numpy as np
import pytest

from masking.compositor import compose
from masking.moc import Motion, MotionLabel
from scene.errors import (
    DepthFormatError,
    DetectionFormatError,
    NoFramesAssociatedError,
    SequenceFormatError,
    ValidationError,
)
from scene.model import BinaryMask, CameraIntrinsics, CameraPose, DepthImage, Detection
from scene.registry import CHAIR, PERSON
from sequence import schema
from sequence.detections import (
    DetectionRecord,
    decode_rle,
    encode_rle,
    read_detections,
    write_detections,
)
from sequence.records import TrackLogEntry, read_track_log, write_jsonl
from sequence.tum import (
    SequenceManifest,
    associate_streams,
    format_tum_pose,
    load_sequence,
    read_depth_png,
    read_tum_file,
    write_depth_png,
)
from sequence.writers import write_outputs
from tracking.tracker import StepResult, TrackSnapshot


def _manifest(tmp_path, depth_times, pose_times, yaws=None, positions=None) -> SequenceManifest:
    yaws = yaws if yaws is not None else [0.0] * len(pose_times)
    positions = positions if positions is not None else [[0.0, 0.0, 0.0]] * len(pose_times)
    quaternions = [[0.0, 0.0, math.sin(y / 2), math.cos(y / 2)] for y in yaws]
    return SequenceManifest(
        root=tmp_path,
        depth=[(t, tmp_path / f"{t:.6f}.png") for t in depth_times],
        rgb=[],
        trajectory_times=np.asarray(pose_times, dtype=float),
        trajectory_positions=np.asarray(positions, dtype=float).reshape(-1, 3),
        trajectory_quaternions=np.asarray(quaternions, dtype=float).reshape(-1, 4),
        intrinsics=CameraIntrinsics.tum_fr3(),
    )


def _small_detection(class_id=CHAIR, score=0.8) -> Detection:
    bits = np.zeros((6, 8), dtype=bool)
    bits[2:4, 1:6] = True
    return Detection.from_mask(class_id, score, BinaryMask(bits))


# ═══════════════════════════════════════════════════════════════════
# Run-length encoding
# ═══════════════════════════════════════════════════════════════════


class TestRunLength:
    """[start, length] runs over the row-major image."""

    def test_known_encoding(self):
        """Runs are 0-based and may cross row boundaries."""
        mask = BinaryMask(np.array([[0, 1, 1], [1, 0, 0], [0, 0, 1]], dtype=bool))
        assert encode_rle(mask) == [[1, 3], [8, 1]]

    def test_random_masks_survive_encoding(self):
        """1000 random masks decode back to themselves."""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            height, width = rng.integers(1, 20, 2)
            bits = rng.random((height, width)) < rng.uniform(0, 1)
            decoded = decode_rle(encode_rle(BinaryMask(bits)), int(width), int(height))
            assert np.array_equal(decoded.bits, bits)

    def test_empty_mask(self):
        """An empty mask has no runs."""
        assert encode_rle(BinaryMask.empty(4, 4)) == []
        assert decode_rle([], 4, 4).count() == 0

    @pytest.mark.parametrize("runs", [
        [[0, 0]],
        [[3, 2], [4, 1]],
        [[5, 2], [1, 1]],
        [[10, 7]],
        [[1.5, 2]],
        [[1, 2, 3]],
    ])
    def test_invalid_runs(self, runs):
        """Zero lengths, overlaps, unsorted runs, overflow and non-integer pairs are rejected."""
        with pytest.raises(ValidationError):
            decode_rle(runs, 4, 4)


# ═══════════════════════════════════════════════════════════════════
# Detection files
# ═══════════════════════════════════════════════════════════════════


class TestDetectionFiles:
    """JSON Lines detection records."""

    def test_grouped_by_timestamp(self, tmp_path):
        """Detections come back grouped by frame, earliest first."""
        path = tmp_path / "dets.jsonl"
        write_detections(path, [
            DetectionRecord.from_detection(2.0, _small_detection(PERSON)),
            DetectionRecord.from_detection(1.0, _small_detection(CHAIR, 0.6)),
            DetectionRecord.from_detection(2.0, _small_detection(CHAIR)),
        ])
        grouped = read_detections(path, 8, 6)
        assert list(grouped) == [1.0, 2.0]
        assert [d.class_id for d in grouped[2.0]] == [PERSON, CHAIR]
        assert grouped[1.0][0].score == 0.6
        assert np.array_equal(grouped[1.0][0].mask.bits, _small_detection().mask.bits)

    def test_bad_line_reported_with_number(self, tmp_path):
        """A malformed record names its line."""
        path = tmp_path / "dets.jsonl"
        good = json.dumps(DetectionRecord.from_detection(1.0, _small_detection()).to_dict())
        path.write_text(good + "\n" + '{"timestamp": 1.0, "class_id": 62}\n')
        with pytest.raises(DetectionFormatError, match=r"dets\.jsonl:2"):
            read_detections(path, 8, 6)

    def test_invalid_json(self, tmp_path):
        """Broken JSON is a format error, not a crash."""
        path = tmp_path / "dets.jsonl"
        path.write_text("{not json\n")
        with pytest.raises(DetectionFormatError, match=":1"):
            read_detections(path, 8, 6)

    def test_box_must_contain_mask(self, tmp_path):
        """Records whose mask escapes the box are rejected."""
        record = DetectionRecord.from_detection(1.0, _small_detection()).to_dict()
        record["x_max"] = 2
        path = tmp_path / "dets.jsonl"
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(DetectionFormatError):
            read_detections(path, 8, 6)

    def test_missing_file(self, tmp_path):
        """A missing detection file is a format error."""
        with pytest.raises(DetectionFormatError):
            read_detections(tmp_path / "absent.jsonl", 8, 6)


# ═══════════════════════════════════════════════════════════════════
# TUM text files
# ═══════════════════════════════════════════════════════════════════


class TestTumFiles:
    """List and trajectory parsing."""

    def test_comments_and_bad_lines(self, tmp_path, caplog):
        """Comments are skipped; lines with the wrong field count are warned about and skipped."""
        path = tmp_path / "depth.txt"
        path.write_text("# depth maps\n\n1.0 depth/1.png\n2.0 depth/2.png extra\n3.0 depth/3.png\n")
        with caplog.at_level(logging.WARNING):
            rows = read_tum_file(path, 1)
        assert [(n, t) for n, t, _ in rows] == [(3, 1.0), (5, 3.0)]
        assert "depth.txt:4" in caplog.text

    def test_unparseable_timestamp(self, tmp_path):
        """A timestamp that is not a number is an error naming the line."""
        path = tmp_path / "depth.txt"
        path.write_text("1.0 a.png\nabc b.png\n")
        with pytest.raises(SequenceFormatError, match="depth.txt:2"):
            read_tum_file(path, 1)

    def test_unsorted_rows_are_sorted(self, tmp_path):
        """Out-of-order lines come back sorted by timestamp."""
        path = tmp_path / "rgb.txt"
        path.write_text("2.0 b.png\n1.0 a.png\n")
        assert [t for _, t, _ in read_tum_file(path, 1)] == [1.0, 2.0]

    def test_identity_pose_line(self):
        """The identity pose is written with quaternion (0, 0, 0, 1)."""
        line = format_tum_pose(1.5, CameraPose.identity())
        assert line.split() == ["1.500000"] + ["0.000000000"] * 6 + ["1.000000000"]

    def test_load_sequence_intrinsics(self, tmp_path):
        """intrinsics.json in the sequence wins; otherwise the TUM calibration is used."""
        (tmp_path / schema.DEPTH_LIST).write_text("1.0 depth/1.png\n")
        (tmp_path / schema.GROUNDTRUTH).write_text("1.0 0 0 0 0 0 0 1\n")
        assert load_sequence(tmp_path).intrinsics == CameraIntrinsics.tum_fr3()

        custom = CameraIntrinsics(100.0, 100.0, 32.0, 24.0, 64, 48)
        (tmp_path / schema.INTRINSICS).write_text(json.dumps(custom.to_dict()))
        manifest = load_sequence(tmp_path)
        assert manifest.intrinsics == custom
        assert manifest.detections_path is None

    def test_load_sequence_requires_trajectory(self, tmp_path):
        """A sequence without groundtruth.txt cannot be loaded."""
        (tmp_path / schema.DEPTH_LIST).write_text("1.0 depth/1.png\n")
        with pytest.raises(SequenceFormatError):
            load_sequence(tmp_path)

    def test_track_log_bad_line(self, tmp_path):
        """A track log line missing fields is reported with its number."""
        path = tmp_path / "tracks.jsonl"
        entry = TrackLogEntry(1.0, 0, CHAIR, np.zeros(3), np.zeros(3), "idle", 0.0, 0.0)
        write_jsonl(path, [entry])
        path.write_text(path.read_text() + '{"timestamp": 2.0}\n')
        with pytest.raises(SequenceFormatError, match="tracks.jsonl:2"):
            read_track_log(path)


# ═══════════════════════════════════════════════════════════════════
# Stream association
# ═══════════════════════════════════════════════════════════════════


class TestAssociateStreams:
    """Depth frames paired with camera poses and detections."""

    def test_one_to_one(self, tmp_path):
        """Identical timestamps associate one-to-one with the exact poses."""
        manifest = _manifest(tmp_path, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0],
                             positions=[[1, 0, 0], [2, 0, 0], [3, 0, 0]])
        frames = associate_streams(manifest)
        assert [f.timestamp for f in frames] == [1.0, 2.0, 3.0]
        assert [f.pose.position[0] for f in frames] == [1.0, 2.0, 3.0]

    def test_midpoint_interpolation(self, tmp_path):
        """Halfway between two poses: mean position and half the rotation."""
        manifest = _manifest(tmp_path, [1.1], [1.0, 1.2], yaws=[0.0, 0.4],
                             positions=[[0, 0, 0], [0.2, 0.4, 0]])
        (frame,) = associate_streams(manifest, max_dt=0.15)
        assert np.allclose(frame.pose.position, [0.1, 0.2, 0.0])
        assert frame.pose.euler[2] == pytest.approx(0.2)
        assert frame.pose.euler[0] == pytest.approx(0.0, abs=1e-12)

    def test_nearest_pose_when_one_side_is_far(self, tmp_path):
        """Only one bracketing pose within max_dt: that pose is used as is."""
        manifest = _manifest(tmp_path, [1.01], [1.0, 2.0], positions=[[1, 0, 0], [5, 0, 0]])
        (frame,) = associate_streams(manifest)
        assert frame.pose.position[0] == 1.0

    def test_frames_without_pose_dropped(self, tmp_path, caplog):
        """Depth frames with no pose in reach are dropped and counted."""
        manifest = _manifest(tmp_path, [1.0, 5.0], [1.0])
        with caplog.at_level(logging.WARNING):
            frames = associate_streams(manifest)
        assert [f.timestamp for f in frames] == [1.0]
        assert "Dropped 1 of 2" in caplog.text

    def test_no_frames_is_distinct_error(self, tmp_path):
        """Nothing associated raises its own error."""
        with pytest.raises(NoFramesAssociatedError):
            associate_streams(_manifest(tmp_path, [5.0], [1.0]))

    def test_max_dt_must_be_positive(self, tmp_path):
        """A non-positive tolerance is a usage error."""
        with pytest.raises(ValueError):
            associate_streams(_manifest(tmp_path, [1.0], [1.0]), max_dt=0.0)

    def test_detections_attached_within_tolerance(self, tmp_path):
        """Detection groups attach to the nearest depth frame within max_dt."""
        manifest = _manifest(tmp_path, [1.0, 2.0], [1.0, 2.0])
        det = _small_detection()
        frames = associate_streams(manifest, detections={1.005: [det], 1.5: [det]})
        assert frames[0].detections == (det,)
        assert frames[1].detections == ()


# ═══════════════════════════════════════════════════════════════════
# Depth images
# ═══════════════════════════════════════════════════════════════════


class TestDepthPng:
    """16-bit depth images."""

    def test_raw_values_scaled(self, tmp_path):
        """Raw 5000 reads as 1 m and raw 0 stays invalid."""
        path = tmp_path / "d.png"
        cv2.imwrite(str(path), np.array([[5000, 0], [12500, 65535]], dtype=np.uint16))
        depth = read_depth_png(path)
        assert depth.data[0, 0] == 1.0
        assert depth.data[0, 1] == 0.0
        assert depth.data[1, 0] == 2.5

    def test_write_then_read(self, tmp_path):
        """Written depth reads back to within one sensor unit."""
        rng = np.random.default_rng(12)
        data = rng.uniform(0.0, 6.0, (24, 32))
        data[0, :] = 0.0
        path = write_depth_png(tmp_path / "d.png", DepthImage(data))
        back = read_depth_png(path)
        assert np.abs(back.data - data).max() <= 0.5 / schema.DEPTH_SCALE + 1e-12
        assert np.all(back.data[0] == 0.0)

    def test_eight_bit_rejected(self, tmp_path):
        """An 8-bit image is not a depth map."""
        path = tmp_path / "d.png"
        cv2.imwrite(str(path), np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(DepthFormatError):
            read_depth_png(path)

    def test_missing_image(self, tmp_path):
        """A missing file is a depth format error."""
        with pytest.raises(DepthFormatError):
            read_depth_png(tmp_path / "absent.png")


# ═══════════════════════════════════════════════════════════════════
# Outputs
# ═══════════════════════════════════════════════════════════════════


class TestOutputs:
    """Output directory layout."""

    def test_empty_run(self, tmp_path):
        """No frames still produces valid files: headers only, empty track log."""
        paths = write_outputs([], tmp_path / "out")
        assert paths["tracks"].read_text() == ""
        assert all(line.startswith("#") for line in paths["mdi_list"].read_text().splitlines())
        assert paths["trajectory"].read_text().strip() == schema.TRAJECTORY_HEADER
        assert paths["mdi"].is_dir() and paths["mo_mdi"].is_dir()

    def test_one_frame(self, tmp_path):
        """A frame writes both images, list lines, a pose line and its track log."""
        data = np.full((6, 8), 2.0)
        bits = np.zeros((6, 8), dtype=bool)
        bits[2:4, 1:6] = True
        label = MotionLabel(0, Motion.MOVING, 0.4, 0.1)
        output = compose(DepthImage(data), [(BinaryMask(bits), label)])
        step = StepResult(
            timestamp=1.0,
            tracks=[TrackSnapshot(0, CHAIR, np.array([0.1, 0.2, 2.0]), np.array([0.4, 0.0, 0.0]))],
            labels=[label],
            mask_labels=[(BinaryMask(bits), label)],
        )
        paths = write_outputs([(1.0, CameraPose.identity(), output, step)], tmp_path / "out")

        assert "1.000000 mdi/1.000000.png" in paths["mdi_list"].read_text()
        assert "1.000000 mo_mdi/1.000000.png" in paths["mo_mdi_list"].read_text()
        mdi = read_depth_png(paths["mdi"] / "1.000000.png")
        assert np.all(mdi.data[bits] == 0) and np.all(mdi.data[~bits] == 2.0)

        (entry,) = read_track_log(paths["tracks"])
        assert entry.id == 0 and entry.moving
        assert entry.speed == pytest.approx(0.4)
        assert np.allclose(entry.position, [0.1, 0.2, 2.0])

        pose_line = paths["trajectory"].read_text().splitlines()[-1]
        assert pose_line.split()[-4:] == ["0.000000000", "0.000000000", "0.000000000", "1.000000000"]
