"""
In-memory latency benchmark for the per-frame processing path.

Renders a 640×480 scene with five moving objects, then times tracker step
(association, EKF, MOC) and compositing per frame. No file I/O and no
segmentation network is involved.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from evaluation.metrics import LatencyStats
from masking.compositor import compose
from scene.registry import BOTTLE, CHAIR, CUP, PERSON, default_registry
from synth.renderer import render_sequence
from synth.scene_script import ObjectScript, ParametricMotion, SceneScript
from tracking.tracker import Tracker

logger = logging.getLogger(__name__)

BENCHMARK_TARGET_MS = 15.0


def benchmark_script(frames: int = 120) -> SceneScript:
    """Five objects crossing the view of a slowly translating camera."""
    layout = [
        (PERSON, "sphere", [-0.9, 0.0, 3.0], [0.3, 0.0, 0.0]),
        (CHAIR, "box", [0.6, 0.3, 2.5], [0.0, 0.0, -0.2]),
        (CUP, "box", [-0.2, 0.4, 1.8], [0.0, 0.0, 0.0]),
        (BOTTLE, "box", [0.3, -0.3, 2.0], [-0.2, 0.1, 0.0]),
        (PERSON, "sphere", [1.0, -0.2, 3.5], [-0.4, 0.0, 0.0]),
    ]
    objects = tuple(
        ObjectScript(
            class_id=class_id,
            shape=shape,
            motion=ParametricMotion(np.array(start, dtype=float), np.array(velocity, dtype=float)),
            radius=0.3 if shape == "sphere" else 0.0,
            size=np.array([0.3, 0.4, 0.05]) if shape == "box" else np.zeros(3),
        )
        for class_id, shape, start, velocity in layout
    )
    return SceneScript(
        fps=30.0,
        frames=frames,
        objects=objects,
        camera_position=ParametricMotion(np.zeros(3), np.array([0.05, 0.0, 0.0])),
    )


def measure_frame_latency(frames: int = 120, dilation_radius: int = 2, workers: int = 4) -> dict[str, LatencyStats]:
    """Per-stage latency over a rendered scene; keys tracking, moc, compose, total."""
    script = benchmark_script(frames)
    registry = default_registry().freeze()
    rendered = list(render_sequence(script, registry, workers))
    tracker = Tracker(registry, script.intrinsics)

    samples: dict[str, list[float]] = {"tracking": [], "moc": [], "compose": [], "total": []}
    for item in rendered:
        started = time.perf_counter()
        step = tracker.step(item.frame)
        stepped = time.perf_counter()
        compose(item.frame.depth, step.mask_labels, dilation_radius)
        finished = time.perf_counter()

        samples["tracking"].append(tracker.last_timings["tracking"])
        samples["moc"].append(tracker.last_timings["moc"])
        samples["compose"].append(finished - stepped)
        samples["total"].append(finished - started)

    logger.info("Benchmarked %d frames with %d live tracks at the end", frames, len(tracker.live_tracks()))
    return {stage: LatencyStats.from_samples(values) for stage, values in samples.items()}
