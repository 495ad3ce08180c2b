"""
Subcommands: run, synth, eval.

Each command takes a resolved RunConfig and returns a process exit code:
0 on success, 1 for usage or configuration errors, 2 for data errors
(unreadable sequences, malformed files, failed writes).
"""

from __future__ import annotations

import asyncio
import logging
from pathlib import Path

from rich.console import Console
from rich.table import Table
from rich.text import Text

from evaluation.metrics import MetricsReport, emit_csv, track_metrics
from evaluation.trajectory import ate_rmse, read_trajectory
from pipeline.config import RunConfig
from pipeline.runner import PROCESSING_STAGES, Pipeline, RunSummary
from scene.errors import ChhayaError, ConfigError, OutputWriteError
from sequence import schema
from sequence.records import read_ground_truth, read_track_log
from sequence.tum import associate_streams, load_sequence
from synth.renderer import generate_sequence
from synth.scene_script import load_script

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# Reference full-system time per 640×480 frame, segmentation network included
REFERENCE_FRAME_MS = 70.0

METRICS_CSV = "metrics.csv"

console = Console()


def _require(value, flag: str, command: str):
    if value is None:
        raise ConfigError(f"{command} needs {flag}")
    return value


def guarded(command):
    """Map exceptions to exit codes with an actionable log line."""

    def wrapper(config: RunConfig) -> int:
        try:
            return command(config)
        except ConfigError as e:
            logger.error("Configuration error: %s", e)
            return EXIT_USAGE
        except ChhayaError as e:
            logger.error("%s", e)
            return EXIT_DATA
        except OSError as e:
            logger.error("I/O error: %s", e)
            return EXIT_DATA

    wrapper.__name__ = command.__name__
    wrapper.__doc__ = command.__doc__
    return wrapper


# ── run ──


def latency_table(summary: RunSummary) -> Table:
    table = Table(title="Per-frame latency (ms), segmentation excluded")
    table.add_column("stage")
    for column in ("mean", "median", "p99"):
        table.add_column(column, justify="right")
    for stage, stats in summary.latency().items():
        style = "bold" if stage == "total" else None
        table.add_row(stage, f"{stats.mean_ms:.2f}", f"{stats.median_ms:.2f}", f"{stats.p99_ms:.2f}",
                      style=style)
    return table


@guarded
def cmd_run(config: RunConfig) -> int:
    """Track and mask every frame of a sequence; write MDI/MO-MDI, track log and latency."""
    sequence = _require(config.sequence, "--sequence", "run")
    registry = config.registry()
    manifest = load_sequence(sequence, config.camera_intrinsics(), config.detections)
    skeletons = associate_streams(manifest, config.max_dt)

    pipeline = Pipeline(config, registry, manifest.intrinsics)
    summary = asyncio.run(pipeline.run(skeletons, config.out))

    latency = summary.latency()
    emit_csv(MetricsReport(ate_rmse=None, latency=latency), Path(config.out) / schema.LATENCY_CSV)

    console.print(latency_table(summary))
    total = latency["total"].mean_ms
    note = Text()
    note.append(f"{summary.frames_processed} frames processed", style="bold green")
    note.append(f", {summary.frames_skipped} skipped. ")
    note.append(
        f"Mean {total:.2f} ms per frame for {' + '.join(PROCESSING_STAGES)}; the reference "
        f"{REFERENCE_FRAME_MS:.0f} ms per 640×480 frame includes the segmentation network, "
        f"which runs offline here and is not measured.",
    )
    console.print(note)

    if summary.frames_processed == 0:
        logger.error("No frame could be processed")
        return EXIT_DATA
    return EXIT_OK


# ── synth ──


@guarded
def cmd_synth(config: RunConfig) -> int:
    """Render a scene script into a TUM-layout sequence with ground truth."""
    script = load_script(_require(config.script, "--script", "synth"))
    if config.seed is not None:
        script = script.with_seed(config.seed)
    out_dir = generate_sequence(
        script, config.out, config.registry(), config.workers, config.overwrite,
    )
    console.print(Text.assemble(
        ("Sequence written", "bold green"), f"  {out_dir} ({script.frames} frames, seed {script.seed})",
    ))
    return EXIT_OK


# ── eval ──


def metrics_table(report: MetricsReport) -> Table:
    table = Table(title="Metrics")
    table.add_column("metric")
    table.add_column("value", justify="right")
    for name, value in report.rows():
        table.add_row(name, str(value) if isinstance(value, int) else f"{value:.6g}")
    return table


@guarded
def cmd_eval(config: RunConfig) -> int:
    """ATE between trajectories and tracking metrics against ground truth, written as CSV."""
    has_trajectories = config.estimate is not None and config.reference is not None
    if not has_trajectories and config.track_log is None:
        raise ConfigError("eval needs --estimate and --reference, or --track-log with --ground-truth")

    report = MetricsReport(ate_aligned=config.ate_aligned)
    if config.track_log is not None:
        if config.ground_truth is None:
            logger.warning("No ground truth given; reporting trajectory metrics only")
        else:
            report = track_metrics(
                read_track_log(config.track_log), read_ground_truth(config.ground_truth),
                config.match_radius, config.max_dt,
            )
            report.ate_aligned = config.ate_aligned
    if has_trajectories:
        report.ate_rmse = ate_rmse(
            read_trajectory(config.estimate), read_trajectory(config.reference),
            config.ate_aligned, config.max_dt,
        )

    out_dir = Path(config.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputWriteError(out_dir, e) from e
    emit_csv(report, out_dir / METRICS_CSV)
    console.print(metrics_table(report))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "synth": cmd_synth,
    "eval": cmd_eval,
}
