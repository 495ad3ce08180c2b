"""
Tracking, classification and latency metrics, and their CSV form.

Tracks are matched to ground-truth objects by temporal overlap: in every
frame a track votes for the nearest same-class ground-truth object within
match_radius, and the object with the most votes is the track's match. A tie
between the top two objects is reported as ambiguous and the track is left
out of the error figures.

Operations:
    track_metrics(track_log, ground_truth): per-track RMSE + MOC confusion
    LatencyStats.from_samples(seconds): mean/median/p99 in ms
    emit_csv(report, path): "metric,value" rows in a fixed order
"""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scene.errors import OutputWriteError
from sequence.records import GroundTruthEntry, TrackLogEntry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    median_ms: float
    p99_ms: float
    frames: int

    @classmethod
    def from_samples(cls, seconds) -> LatencyStats:
        samples = np.asarray(list(seconds), dtype=float) * 1000.0
        if samples.size == 0:
            return cls(0.0, 0.0, 0.0, 0)
        return cls(
            mean_ms=float(samples.mean()),
            median_ms=float(np.median(samples)),
            p99_ms=float(np.percentile(samples, 99)),
            frames=int(samples.size),
        )


@dataclass
class MocConfusion:
    """Moving is the positive class."""

    true_moving: int = 0
    false_moving: int = 0
    missed_moving: int = 0
    true_idle: int = 0

    @property
    def total(self) -> int:
        return self.true_moving + self.false_moving + self.missed_moving + self.true_idle

    @property
    def precision(self) -> float:
        predicted = self.true_moving + self.false_moving
        return self.true_moving / predicted if predicted else 1.0

    @property
    def recall(self) -> float:
        actual = self.true_moving + self.missed_moving
        return self.true_moving / actual if actual else 1.0

    def add(self, predicted_moving: bool, actual_moving: bool):
        if predicted_moving and actual_moving:
            self.true_moving += 1
        elif predicted_moving:
            self.false_moving += 1
        elif actual_moving:
            self.missed_moving += 1
        else:
            self.true_idle += 1


@dataclass
class MetricsReport:
    ate_rmse: float | None = None
    ate_aligned: bool = True
    track_matches: dict[int, int] = field(default_factory=dict)
    position_rmse: dict[int, float] = field(default_factory=dict)
    velocity_rmse: dict[int, float] = field(default_factory=dict)
    ambiguous_tracks: list[int] = field(default_factory=list)
    moc: MocConfusion = field(default_factory=MocConfusion)
    latency: dict[str, LatencyStats] = field(default_factory=dict)

    @property
    def has_tracking(self) -> bool:
        return bool(self.track_matches) or self.moc.total > 0

    def rows(self) -> list[tuple[str, float | int]]:
        """Metric rows in emission order; sections without data are left out."""
        rows: list[tuple[str, float | int]] = []
        if self.ate_rmse is not None:
            rows.append(("ate_rmse_m", self.ate_rmse))
        if self.has_tracking:
            rows += [
                ("moc_true_moving", self.moc.true_moving),
                ("moc_false_moving", self.moc.false_moving),
                ("moc_missed_moving", self.moc.missed_moving),
                ("moc_true_idle", self.moc.true_idle),
                ("moc_precision", self.moc.precision),
                ("moc_recall", self.moc.recall),
                ("ambiguous_tracks", len(self.ambiguous_tracks)),
            ]
        for track_id in sorted(self.track_matches):
            rows.append((f"track_{track_id}_object", self.track_matches[track_id]))
            rows.append((f"track_{track_id}_position_rmse_m", self.position_rmse[track_id]))
            rows.append((f"track_{track_id}_velocity_rmse_mps", self.velocity_rmse[track_id]))
        for stage, stats in self.latency.items():
            rows += [
                (f"latency_{stage}_mean_ms", stats.mean_ms),
                (f"latency_{stage}_median_ms", stats.median_ms),
                (f"latency_{stage}_p99_ms", stats.p99_ms),
            ]
        return rows


def _frame_lookup(times: np.ndarray, t: float, max_dt: float) -> float | None:
    if times.size == 0:
        return None
    i = int(np.argmin(np.abs(times - t)))
    return float(times[i]) if abs(times[i] - t) <= max_dt else None


def track_metrics(
    track_log: list[TrackLogEntry],
    ground_truth: list[GroundTruthEntry],
    match_radius: float = 0.5,
    max_dt: float = 0.02,
) -> MetricsReport:
    """Per-track position/velocity RMSE and the moving/idle confusion counts."""
    report = MetricsReport()
    by_frame: dict[float, dict[int, GroundTruthEntry]] = defaultdict(dict)
    for entry in ground_truth:
        by_frame[entry.timestamp][entry.object] = entry
    times = np.asarray(sorted(by_frame), dtype=float)

    # Each log entry paired with its ground-truth frame
    framed: list[tuple[TrackLogEntry, dict[int, GroundTruthEntry]]] = []
    votes: dict[int, Counter] = defaultdict(Counter)
    for entry in track_log:
        t = _frame_lookup(times, entry.timestamp, max_dt)
        if t is None:
            continue
        objects = by_frame[t]
        framed.append((entry, objects))
        candidates = [
            (float(np.linalg.norm(entry.position - truth.position)), truth.object)
            for truth in objects.values()
            if truth.class_id == entry.class_id
        ]
        candidates = [c for c in candidates if c[0] <= match_radius]
        if candidates:
            votes[entry.id][min(candidates)[1]] += 1

    for track_id in sorted(votes):
        ranked = votes[track_id].most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            report.ambiguous_tracks.append(track_id)
            logger.warning(
                "Track %d overlaps objects %s equally often; left unmatched",
                track_id, sorted(obj for obj, n in ranked if n == ranked[0][1]),
            )
            continue
        report.track_matches[track_id] = ranked[0][0]

    if not report.track_matches:
        logger.warning("No track overlaps a ground-truth object; tracking metrics are empty")
        return report

    position_errors: dict[int, list[float]] = defaultdict(list)
    velocity_errors: dict[int, list[float]] = defaultdict(list)
    for entry, objects in framed:
        obj = report.track_matches.get(entry.id)
        truth = objects.get(obj) if obj is not None else None
        if truth is None:
            continue
        position_errors[entry.id].append(float(np.sum((entry.position - truth.position) ** 2)))
        velocity_errors[entry.id].append(float(np.sum((entry.velocity - truth.velocity) ** 2)))
        report.moc.add(entry.moving, truth.moving)

    for track_id in report.track_matches:
        report.position_rmse[track_id] = float(np.sqrt(np.mean(position_errors[track_id])))
        report.velocity_rmse[track_id] = float(np.sqrt(np.mean(velocity_errors[track_id])))

    logger.info(
        "Matched %d tracks (%d ambiguous); MOC precision %.3f recall %.3f",
        len(report.track_matches), len(report.ambiguous_tracks),
        report.moc.precision, report.moc.recall,
    )
    return report


def _format(value: float | int) -> str:
    if isinstance(value, int):
        return str(value)
    return f"{value:.10g}"


def emit_csv(report: MetricsReport, path: str | Path) -> Path:
    """Write one "metric,value" row per metric under a header row."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["metric", "value"])
            for name, value in report.rows():
                writer.writerow([name, _format(value)])
    except OSError as e:
        raise OutputWriteError(path, e) from e
    logger.info("Wrote metrics to %s", path)
    return path
