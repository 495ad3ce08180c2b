"""
Frame pipeline: the bounded-queue chain that drives a run.

    ingest ──▶ track ──▶ compose ──▶ write

1. Ingest: read the depth image of each synchronized frame skeleton
2. Track: filter bank step: association, EKF updates, births, retirement, MOC
3. Compose: build the MDI and MO-MDI from the step's mask labels
4. Write: depth images, image lists, track log, trajectory

Each stage is one asyncio task with a single consumer, and the queues between
them are FIFO and bounded to queue_size frames, so frame order is preserved
end to end and at most queue_size frames wait in front of any stage. File
I/O and the numpy work run in worker threads via asyncio.to_thread; the
tracker is only ever touched by the track stage.

A frame that fails with a data error is logged with its timestamp, counted
and skipped. Output write failures abort the run.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from evaluation.metrics import LatencyStats
from masking.compositor import MaskedFrameOutput, compose
from pipeline.config import RunConfig
from scene.errors import ChhayaError, OutputWriteError
from scene.model import CameraIntrinsics, Frame
from scene.registry import ObjectClassRegistry
from sequence.tum import FrameSkeleton, read_depth_png
from sequence.writers import OutputWriter
from tracking.tracker import StepResult, Tracker

logger = logging.getLogger(__name__)

# Stages counted in the processing total; segmentation runs offline and is excluded
PROCESSING_STAGES = ("tracking", "moc", "compose")

_DONE = object()


@dataclass
class FrameTiming:
    """Seconds spent on one frame, per stage."""

    ingest: float = 0.0
    tracking: float = 0.0
    moc: float = 0.0
    compose: float = 0.0
    write: float = 0.0
    total: float = 0.0


@dataclass
class RunSummary:
    frames_processed: int = 0
    frames_skipped: int = 0
    tracks_born: int = 0
    timings: list[FrameTiming] = field(default_factory=list)
    out_dir: Path | None = None

    def latency(self) -> dict[str, LatencyStats]:
        """Per-stage statistics; "total" is tracking + MOC + compositing wall time."""
        stages = (*PROCESSING_STAGES, "total", "ingest", "write")
        return {
            stage: LatencyStats.from_samples(getattr(t, stage) for t in self.timings)
            for stage in stages
        }


class Pipeline:
    """Runs one sequence through the tracker and compositor into an output directory."""

    def __init__(
        self,
        config: RunConfig,
        registry: ObjectClassRegistry,
        intrinsics: CameraIntrinsics,
    ):
        self.config = config
        self.tracker = Tracker(registry, intrinsics, config.tracker_config(), config.moc_config())
        self.summary = RunSummary()

    def _skip(self, stage: str, timestamp: float, error: Exception):
        self.summary.frames_skipped += 1
        logger.error("Skipping frame t=%.6f in %s: %s", timestamp, stage, error)

    # ── Stage bodies (run in worker threads) ──

    def _load(self, skeleton: FrameSkeleton) -> Frame:
        depth = read_depth_png(skeleton.depth_path, self.config.depth_scale)
        return Frame(skeleton.timestamp, depth, skeleton.pose, skeleton.detections)

    def _track(self, frame: Frame) -> tuple[StepResult, float]:
        started = time.perf_counter()
        step = self.tracker.step(frame)
        return step, time.perf_counter() - started

    def _compose(self, frame: Frame, step: StepResult) -> tuple[MaskedFrameOutput, float]:
        started = time.perf_counter()
        output = compose(frame.depth, step.mask_labels, self.config.dilation_radius)
        return output, time.perf_counter() - started

    # ── Stages ──

    async def _ingest(self, skeletons: list[FrameSkeleton], out: asyncio.Queue):
        for skeleton in skeletons:
            started = time.perf_counter()
            try:
                frame = await asyncio.to_thread(self._load, skeleton)
            except ChhayaError as e:
                self._skip("ingest", skeleton.timestamp, e)
                continue
            await out.put((frame, FrameTiming(ingest=time.perf_counter() - started)))
        await out.put(_DONE)

    async def _track_stage(self, inbox: asyncio.Queue, out: asyncio.Queue):
        while (item := await inbox.get()) is not _DONE:
            frame, timing = item
            try:
                step, wall = await asyncio.to_thread(self._track, frame)
            except ChhayaError as e:
                self._skip("track", frame.timestamp, e)
                continue
            timing.tracking = self.tracker.last_timings["tracking"]
            timing.moc = self.tracker.last_timings["moc"]
            timing.total = wall
            self.summary.tracks_born += len(step.born)
            logger.debug(
                "t=%.6f: %d tracks, born %s, retired %s",
                frame.timestamp, len(step.tracks), step.born, step.retired,
            )
            await out.put((frame, step, timing))
        await out.put(_DONE)

    async def _compose_stage(self, inbox: asyncio.Queue, out: asyncio.Queue):
        while (item := await inbox.get()) is not _DONE:
            frame, step, timing = item
            try:
                output, wall = await asyncio.to_thread(self._compose, frame, step)
            except ChhayaError as e:
                self._skip("compose", frame.timestamp, e)
                continue
            timing.compose = wall
            timing.total += wall
            await out.put((frame, step, output, timing))
        await out.put(_DONE)

    async def _write_stage(self, inbox: asyncio.Queue, writer: OutputWriter):
        while (item := await inbox.get()) is not _DONE:
            frame, step, output, timing = item
            started = time.perf_counter()
            await asyncio.to_thread(writer.write_frame, frame.timestamp, frame.pose, output, step)
            timing.write = time.perf_counter() - started
            self.summary.timings.append(timing)
            self.summary.frames_processed += 1

    async def run(self, skeletons: list[FrameSkeleton], out_dir: str | Path) -> RunSummary:
        """Process every frame skeleton in order. Raises OutputWriteError on write failure."""
        size = self.config.queue_size
        loaded: asyncio.Queue = asyncio.Queue(maxsize=size)
        tracked: asyncio.Queue = asyncio.Queue(maxsize=size)
        composed: asyncio.Queue = asyncio.Queue(maxsize=size)
        self.summary.out_dir = Path(out_dir)

        logger.info("Pipeline started: %d frames, queue size %d", len(skeletons), size)
        with OutputWriter(out_dir, self.config.depth_scale) as writer:
            try:
                async with asyncio.TaskGroup() as group:
                    group.create_task(self._ingest(skeletons, loaded))
                    group.create_task(self._track_stage(loaded, tracked))
                    group.create_task(self._compose_stage(tracked, composed))
                    group.create_task(self._write_stage(composed, writer))
            except* OutputWriteError as group_error:
                raise group_error.exceptions[0] from None

        logger.info(
            "Pipeline finished: %d frames processed, %d skipped, %d tracks born",
            self.summary.frames_processed, self.summary.frames_skipped, self.summary.tracks_born,
        )
        return self.summary
