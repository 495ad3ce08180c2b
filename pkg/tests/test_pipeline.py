"""
Run pipeline, configuration and command-line tests.

Tests:
- Configuration precedence, coercion and validation
- The asynchronous frame pipeline end to end on a generated sequence
- Skipped frames and output failures
- Subcommand exit codes
- Per-frame latency budget (opt-in, CHHAYA_RUN_PERF=1)
"""

import asyncio
import json
import logging
import os
from pathlib import Path

import pytest

from main import main
from pipeline.benchmark import BENCHMARK_TARGET_MS, measure_frame_latency
from pipeline.commands import EXIT_DATA, EXIT_OK, EXIT_USAGE, METRICS_CSV
from pipeline.config import RunConfig, coerce, load_config
from pipeline.runner import Pipeline
from scene.errors import ConfigError, OutputWriteError
from scene.registry import PERSON
from sequence import schema
from sequence.records import read_track_log
from sequence.tum import associate_streams, load_sequence, read_depth_png
from synth.renderer import generate_sequence
from synth.scene_script import parse_script

SCENE = {
    "fps": 30, "frames": 24, "seed": 5,
    "intrinsics": {"fx": 100.0, "fy": 100.0, "cx": 32.0, "cy": 24.0, "width": 64, "height": 48},
    "noise": {"depth_sigma": 0.002},
    "objects": [
        {"class_id": 62, "shape": "box", "size": [0.4, 0.4, 0.02],
         "motion": {"start": [-0.3, -0.15, 2.0], "velocity": [0.3, 0.0, 0.0]}},
        {"class_id": 1, "shape": "sphere", "radius": 0.15, "motion": {"start": [0.3, 0.25, 2.5]}},
    ],
}


@pytest.fixture
def sequence_dir(tmp_path):
    """A small noise-free sequence with a moving chair and a still person."""
    return generate_sequence(parse_script({**SCENE, "noise": {"depth_sigma": 0.0}}), tmp_path / "seq")


@pytest.fixture
def script_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(SCENE))
    return path


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Keep the developer's CHHAYA_* settings out of the tests."""
    for key in list(os.environ):
        if key.startswith("CHHAYA_") and key != "CHHAYA_RUN_PERF":
            monkeypatch.delenv(key)


async def _run(sequence_dir: Path, out_dir: Path, config: RunConfig | None = None):
    config = config or RunConfig()
    manifest = load_sequence(sequence_dir)
    skeletons = associate_streams(manifest, config.max_dt)
    pipeline = Pipeline(config, config.registry(), manifest.intrinsics)
    return await pipeline.run(skeletons, out_dir)


# ═══════════════════════════════════════════════════════════════════
# Configuration
# ═══════════════════════════════════════════════════════════════════


class TestConfig:
    """Defaults, sources and coercion."""

    def test_defaults_are_experimental_parameters(self):
        """Defaults are the reference experimental parameters."""
        config = load_config(environ={})
        assert config.max_coast_frames == 10
        assert config.score_threshold == 0.1
        assert config.max_detections == 5
        assert config.person_velocity_threshold == 0.01
        assert config.person_accel_sigma == 0.62
        assert config.object_velocity_threshold == 0.1
        assert config.object_accel_sigma == 1.0

    def test_precedence(self, tmp_path):
        """Flags beat the environment, which beats the config file, which beats defaults."""
        path = tmp_path / "chhaya.env"
        path.write_text("CHHAYA_MAX_COAST_FRAMES=12\nCHHAYA_GATE_DISTANCE=0.8\nCHHAYA_WORKERS=3\n")
        environ = {"CHHAYA_MAX_COAST_FRAMES": "14", "CHHAYA_GATE_DISTANCE": "0.7"}
        config = load_config(path, environ, {"max_coast_frames": "16"})
        assert config.max_coast_frames == 16
        assert config.gate_distance == 0.7
        assert config.workers == 3
        assert config.dilation_radius == 2

    def test_coercion(self):
        """Strings convert to each field's type."""
        assert coerce("overwrite", "yes") is True
        assert coerce("ate_aligned", "off") is False
        assert coerce("intrinsics", "100,100,32,24,64,48") == (100.0, 100.0, 32.0, 24.0, 64.0, 48.0)
        assert coerce("sequence", "data/seq") == Path("data/seq")
        assert coerce("seed", "") is None
        assert coerce("association", "hungarian") == "hungarian"

    def test_bad_value(self):
        """An unparseable value names its environment key."""
        with pytest.raises(ConfigError, match="CHHAYA_MAX_DETECTIONS"):
            load_config(environ={"CHHAYA_MAX_DETECTIONS": "many"})

    def test_invalid_combination(self):
        """Out-of-range values are configuration errors."""
        with pytest.raises(ConfigError):
            load_config(environ={"CHHAYA_QUEUE_SIZE": "0"})
        with pytest.raises(ConfigError):
            RunConfig(association="nearest").tracker_config()

    def test_unknown_key_warns(self, caplog):
        """Misspelled CHHAYA_* keys are reported, other variables are ignored."""
        with caplog.at_level(logging.WARNING):
            load_config(environ={"CHHAYA_MAX_COAST": "3", "HOME": "/root"})
        assert "CHHAYA_MAX_COAST" in caplog.text
        assert "HOME" not in caplog.text

    def test_missing_config_file(self, tmp_path):
        """A --config path that does not exist is an error."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.env", environ={})

    def test_registry_uses_configured_priors(self):
        """Class priors follow the configuration and the registry comes back frozen."""
        registry = RunConfig(person_velocity_threshold=0.05).registry()
        assert registry.get(PERSON).velocity_threshold == 0.05
        assert registry.frozen

    def test_env_form_reloads(self):
        """A configuration written as CHHAYA_* keys loads back unchanged."""
        config = RunConfig(seed=3, intrinsics=(100.0, 100.0, 32.0, 24.0, 64.0, 48.0), overwrite=True)
        assert load_config(environ=config.to_env()) == config


# ═══════════════════════════════════════════════════════════════════
# Pipeline
# ═══════════════════════════════════════════════════════════════════


class TestPipeline:
    """ingest → track → compose → write."""

    @pytest.mark.asyncio
    async def test_processes_every_frame(self, sequence_dir, tmp_path):
        """Every frame produces both masked images, list lines and a pose line."""
        out = tmp_path / "out"
        summary = await _run(sequence_dir, out)
        assert summary.frames_processed == 24
        assert summary.frames_skipped == 0
        assert summary.tracks_born == 2
        assert len(list((out / schema.MDI_DIR).iterdir())) == 24
        assert len(list((out / schema.MO_MDI_DIR).iterdir())) == 24
        lines = (out / schema.TRAJECTORY).read_text().splitlines()
        assert len(lines) == 25 and lines[0].startswith("#")

    @pytest.mark.asyncio
    async def test_moving_chair_masked_in_both_streams(self, sequence_dir, tmp_path):
        """Late in the run the chair is moving and the person idle."""
        out = tmp_path / "out"
        await _run(sequence_dir, out)
        log = read_track_log(out / schema.TRACK_LOG)
        last_t = max(entry.timestamp for entry in log)
        last = {entry.class_id: entry for entry in log if entry.timestamp == last_t}
        assert last[62].moving
        assert not last[PERSON].moving

        name = schema.frame_filename(last_t)
        mdi = read_depth_png(out / schema.MDI_DIR / name)
        mo_mdi = read_depth_png(out / schema.MO_MDI_DIR / name)
        assert (mdi.data == 0).sum() > (mo_mdi.data == 0).sum() > 0

    @pytest.mark.asyncio
    async def test_deterministic(self, sequence_dir, tmp_path):
        """Two runs over the same sequence write identical track logs."""
        await _run(sequence_dir, tmp_path / "a")
        await _run(sequence_dir, tmp_path / "b", RunConfig(queue_size=1))
        assert (tmp_path / "a" / schema.TRACK_LOG).read_text() == (tmp_path / "b" / schema.TRACK_LOG).read_text()

    @pytest.mark.asyncio
    async def test_unreadable_frame_skipped(self, sequence_dir, tmp_path):
        """A missing depth image skips that frame and the run carries on."""
        first = sorted((sequence_dir / schema.DEPTH_DIR).iterdir())[5]
        first.unlink()
        summary = await _run(sequence_dir, tmp_path / "out")
        assert summary.frames_skipped == 1
        assert summary.frames_processed == 23

    @pytest.mark.asyncio
    async def test_output_failure_aborts(self, sequence_dir, tmp_path):
        """An output directory that cannot be created aborts the run."""
        blocker = tmp_path / "out"
        blocker.write_text("not a directory")
        with pytest.raises(OutputWriteError):
            await _run(sequence_dir, blocker)

    @pytest.mark.asyncio
    async def test_latency_recorded(self, sequence_dir, tmp_path):
        """Every processed frame carries stage timings; total covers tracking and compositing."""
        summary = await _run(sequence_dir, tmp_path / "out")
        latency = summary.latency()
        assert set(latency) == {"tracking", "moc", "compose", "total", "ingest", "write"}
        assert latency["total"].frames == 24
        for timing in summary.timings:
            assert timing.total >= timing.compose
            assert timing.total + 1e-9 >= timing.tracking + timing.moc


# ═══════════════════════════════════════════════════════════════════
# Command line
# ═══════════════════════════════════════════════════════════════════


class TestCommandLine:
    """Subcommands and exit codes."""

    def test_synth_run_eval(self, script_file, tmp_path):
        """synth, then run, then eval all succeed and write their files."""
        seq = tmp_path / "seq"
        out = tmp_path / "out"
        assert main(["synth", str(script_file), "--out", str(seq)]) == EXIT_OK
        assert (seq / schema.DEPTH_LIST).is_file()

        assert main(["run", str(seq), "--out", str(out)]) == EXIT_OK
        latency = (out / schema.LATENCY_CSV).read_text()
        assert latency.startswith("metric,value\n")
        assert "latency_total_mean_ms" in latency

        assert main([
            "eval",
            "--estimate", str(out / schema.TRAJECTORY),
            "--reference", str(seq / schema.GROUNDTRUTH),
            "--track-log", str(out / schema.TRACK_LOG),
            "--ground-truth", str(seq / schema.GROUND_TRUTH_SIDECAR),
            "--out", str(out),
        ]) == EXIT_OK
        rows = dict(line.split(",") for line in (out / METRICS_CSV).read_text().splitlines()[1:])
        assert float(rows["ate_rmse_m"]) < 1e-6
        assert "moc_precision" in rows

    def test_synth_seed_override(self, script_file, tmp_path):
        """--seed changes the noise but not the geometry."""
        assert main(["synth", str(script_file), "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["synth", str(script_file), "--out", str(tmp_path / "b"), "--seed", "99"]) == EXIT_OK
        name = sorted((tmp_path / "a" / schema.DEPTH_DIR).iterdir())[0].name
        a = read_depth_png(tmp_path / "a" / schema.DEPTH_DIR / name).data
        b = read_depth_png(tmp_path / "b" / schema.DEPTH_DIR / name).data
        assert (a > 0).sum() == (b > 0).sum()
        assert not (a == b).all()

    def test_eval_without_ground_truth(self, sequence_dir, tmp_path):
        """A track log without ground truth still succeeds, with a warning."""
        out = tmp_path / "out"
        asyncio.run(_run(sequence_dir, out))
        code = main(["eval", "--track-log", str(out / schema.TRACK_LOG), "--out", str(out)])
        assert code == EXIT_OK
        assert (out / METRICS_CSV).read_text() == "metric,value\n"

    def test_eval_needs_inputs(self, tmp_path):
        """eval with nothing to evaluate is a usage error."""
        assert main(["eval", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_bad_flag_value(self, tmp_path):
        """An unparseable flag value is a usage error."""
        assert main(["run", str(tmp_path), "--max-coast-frames", "ten"]) == EXIT_USAGE

    def test_unknown_subcommand(self):
        """An unknown subcommand exits with the usage code, not the data code."""
        with pytest.raises(SystemExit) as exc:
            main(["bogus"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_flag(self, tmp_path):
        """An unknown flag exits with the usage code."""
        with pytest.raises(SystemExit) as exc:
            main(["run", str(tmp_path), "--no-such-flag"])
        assert exc.value.code == EXIT_USAGE

    def test_missing_subcommand(self):
        """No subcommand at all is a usage error."""
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE

    def test_missing_sequence(self, tmp_path):
        """A sequence directory that does not exist is a data error."""
        assert main(["run", str(tmp_path / "absent"), "--out", str(tmp_path / "out")]) == EXIT_DATA

    def test_run_needs_sequence(self):
        """run without a sequence is a usage error."""
        assert main(["run"]) == EXIT_USAGE

    def test_synth_refuses_existing_output(self, script_file, tmp_path):
        """synth will not overwrite a non-empty directory without --overwrite."""
        out = tmp_path / "seq"
        out.mkdir()
        (out / "keep").write_text("x")
        assert main(["synth", str(script_file), "--out", str(out)]) == EXIT_DATA
        assert main(["synth", str(script_file), "--out", str(out), "--overwrite"]) == EXIT_OK


# ═══════════════════════════════════════════════════════════════════
# Latency budget
# ═══════════════════════════════════════════════════════════════════


@pytest.mark.perf
@pytest.mark.skipif(os.environ.get("CHHAYA_RUN_PERF") != "1", reason="set CHHAYA_RUN_PERF=1 to run")
class TestLatencyBudget:
    """Tracking, classification and compositing on 640×480 frames with five objects."""

    def test_mean_frame_within_budget(self):
        """Mean per-frame processing time stays under the budget."""
        stats = measure_frame_latency(frames=120)
        assert stats["total"].frames == 120
        assert stats["total"].mean_ms < BENCHMARK_TARGET_MS
