"""
Run outputs.

Layout of an output directory:
    mdi/<timestamp>.png     masked depth images (all dynamic objects removed)
    mo_mdi/<timestamp>.png  moving-object masked depth images
    mdi.txt, mo_mdi.txt     TUM image lists for the two streams
    tracks.jsonl            one record per confirmed live track per frame
    trajectory.txt          camera pose used for every processed frame (TUM)

The MDI/MO-MDI directories stand in for the depth directory of the original
sequence, so a vSLAM front end can read them unchanged.

Each stream is written sequentially; OutputWriter must be fed frames in order.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TextIO

import numpy as np

from masking.compositor import MaskedFrameOutput
from scene.errors import OutputWriteError
from scene.model import CameraPose
from sequence import schema
from sequence.records import TrackLogEntry
from sequence.tum import format_tum_pose, write_depth_png
from tracking.tracker import StepResult

logger = logging.getLogger(__name__)


def track_log_entries(step: StepResult) -> list[TrackLogEntry]:
    """Track log lines for one frame: every reported track with its label."""
    labels = {label.track_id: label for label in step.labels}
    entries = []
    for snapshot in step.tracks:
        label = labels.get(snapshot.id)
        entries.append(TrackLogEntry(
            timestamp=step.timestamp,
            id=snapshot.id,
            class_id=snapshot.class_id,
            position=snapshot.position,
            velocity=snapshot.velocity,
            label=label.label.value if label else "idle",
            speed=label.speed if label else float(np.linalg.norm(snapshot.velocity)),
            deformation=label.deformation if label else 0.0,
        ))
    return entries


class OutputWriter:
    """Sequential writer for every output stream of a run."""

    def __init__(self, out_dir: str | Path, depth_scale: float = schema.DEPTH_SCALE):
        self.out_dir = Path(out_dir)
        self.depth_scale = depth_scale
        self.frames_written = 0
        self._streams: dict[str, TextIO] = {}

    @property
    def paths(self) -> dict[str, Path]:
        return {
            "mdi": self.out_dir / schema.MDI_DIR,
            "mo_mdi": self.out_dir / schema.MO_MDI_DIR,
            "mdi_list": self.out_dir / schema.MDI_LIST,
            "mo_mdi_list": self.out_dir / schema.MO_MDI_LIST,
            "tracks": self.out_dir / schema.TRACK_LOG,
            "trajectory": self.out_dir / schema.TRAJECTORY,
        }

    def open(self) -> OutputWriter:
        paths = self.paths
        try:
            paths["mdi"].mkdir(parents=True, exist_ok=True)
            paths["mo_mdi"].mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputWriteError(self.out_dir, e) from e

        for key, header in (
            ("mdi_list", schema.image_list_header("masked depth")),
            ("mo_mdi_list", schema.image_list_header("moving-object masked depth")),
            ("tracks", None),
            ("trajectory", schema.TRAJECTORY_HEADER),
        ):
            try:
                stream = paths[key].open("w", encoding="utf-8")
            except OSError as e:
                self.close()
                raise OutputWriteError(paths[key], e) from e
            if header:
                stream.write(header + "\n")
            self._streams[key] = stream
        logger.info("Writing outputs to %s", self.out_dir)
        return self

    def _write_line(self, key: str, line: str):
        try:
            self._streams[key].write(line + "\n")
        except OSError as e:
            raise OutputWriteError(self.paths[key], e) from e

    def write_frame(
        self,
        timestamp: float,
        pose: CameraPose,
        output: MaskedFrameOutput,
        step: StepResult | None = None,
    ) -> dict[str, Path]:
        """Write one frame to every stream; returns the two image paths."""
        if not self._streams:
            raise RuntimeError("OutputWriter.write_frame() called before open()")

        name = schema.frame_filename(timestamp)
        mdi_path = write_depth_png(self.paths["mdi"] / name, output.mdi, self.depth_scale)
        mo_mdi_path = write_depth_png(self.paths["mo_mdi"] / name, output.mo_mdi, self.depth_scale)

        self._write_line("mdi_list", f"{timestamp:.6f} {schema.MDI_DIR}/{name}")
        self._write_line("mo_mdi_list", f"{timestamp:.6f} {schema.MO_MDI_DIR}/{name}")
        self._write_line("trajectory", format_tum_pose(timestamp, pose))
        if step is not None:
            for entry in track_log_entries(step):
                self._write_line("tracks", json.dumps(entry.to_dict()))

        self.frames_written += 1
        return {"mdi": mdi_path, "mo_mdi": mo_mdi_path}

    def close(self):
        for stream in self._streams.values():
            stream.close()
        self._streams.clear()

    def __enter__(self) -> OutputWriter:
        return self.open()

    def __exit__(self, *exc):
        self.close()
        logger.info("Wrote %d frames to %s", self.frames_written, self.out_dir)


def write_outputs(
    frame_outputs: list[tuple[float, CameraPose, MaskedFrameOutput, StepResult | None]],
    out_dir: str | Path,
    depth_scale: float = schema.DEPTH_SCALE,
) -> dict[str, Path]:
    """Write a whole run at once. An empty run still produces valid, empty files."""
    with OutputWriter(out_dir, depth_scale) as writer:
        for timestamp, pose, output, step in frame_outputs:
            writer.write_frame(timestamp, pose, output, step)
    return writer.paths
