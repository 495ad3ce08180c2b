"""
Run configuration.

Every tunable of a run is a RunConfig field. A field `foo_bar` is read from
the environment key CHHAYA_FOO_BAR and set on the command line with
--foo-bar. Sources, lowest precedence first:

    1. field default
    2. --config <path>  (dotenv syntax: CHHAYA_FOO_BAR=value)
    3. process environment (including a local .env loaded at startup)
    4. explicit command-line flags

Defaults are the reference experimental parameters: 10 frames to
terminate a track, detection score threshold 0.1, at most 5 detections,
person velocity threshold 0.01 m/s and accel sigma 0.62 m/s², other objects
0.1 m/s and 1.0 m/s².
"""

from __future__ import annotations

import argparse
import logging
import os
import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from dotenv import dotenv_values

from masking.moc import MocConfig
from scene.errors import ChhayaError, ConfigError
from scene.model import CameraIntrinsics
from scene.registry import ObjectClassRegistry, default_registry
from tracking.tracker import TrackerConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "CHHAYA_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    # Paths
    sequence: Path | None = None
    detections: Path | None = None
    out: Path = Path("chhaya_out")
    script: Path | None = None
    estimate: Path | None = None
    reference: Path | None = None
    track_log: Path | None = None
    ground_truth: Path | None = None
    class_specs_path: Path | None = None

    # Experimental parameters
    max_coast_frames: int = 10
    score_threshold: float = 0.1
    max_detections: int = 5
    person_velocity_threshold: float = 0.01
    object_velocity_threshold: float = 0.1
    person_accel_sigma: float = 0.62
    object_accel_sigma: float = 1.0

    # Tracking
    gate_distance: float = 1.0
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

    # Motion classification and masking
    deformation_threshold: float = 0.3
    deformation_trigger: str = "low_iou"
    dilation_radius: int = 2

    # Sequence I/O
    depth_scale: float = 5000.0
    max_dt: float = 0.02
    intrinsics: tuple[float, ...] | None = None
    queue_size: int = 8

    # Synthesis and evaluation
    seed: int | None = None
    workers: int = 1
    overwrite: bool = False
    match_radius: float = 0.5
    ate_aligned: bool = True

    log_level: str = "INFO"

    def __post_init__(self):
        if self.queue_size < 1:
            raise ConfigError(f"queue_size must be >= 1, got {self.queue_size}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if not self.max_dt > 0:
            raise ConfigError(f"max_dt must be positive, got {self.max_dt}")
        if not self.depth_scale > 0:
            raise ConfigError(f"depth_scale must be positive, got {self.depth_scale}")
        if self.dilation_radius < 0:
            raise ConfigError(f"dilation_radius must be non-negative, got {self.dilation_radius}")
        if self.intrinsics is not None and len(self.intrinsics) != 6:
            raise ConfigError("intrinsics must be fx,fy,cx,cy,width,height")

    # ── Component configuration ──

    def tracker_config(self) -> TrackerConfig:
        try:
            return TrackerConfig(
                max_coast_frames=self.max_coast_frames,
                gate_distance=self.gate_distance,
                score_threshold=self.score_threshold,
                max_detections=self.max_detections,
                min_valid_pixels=self.min_valid_pixels,
                association=self.association,
                confirm_hits=self.confirm_hits,
                confirm_window=self.confirm_window,
                velocity_sigma=self.velocity_sigma,
                init_inflation=self.init_inflation,
                lateral_sigma=self.lateral_sigma,
                depth_noise_quadratic=self.depth_noise_quadratic,
                depth_noise_offset=self.depth_noise_offset,
                gamma_velocity_exponent=self.gamma_velocity_exponent,
            )
        except ChhayaError as e:
            raise ConfigError(str(e)) from e

    def moc_config(self) -> MocConfig:
        try:
            return MocConfig(self.deformation_threshold, self.deformation_trigger)
        except ChhayaError as e:
            raise ConfigError(str(e)) from e

    def registry(self) -> ObjectClassRegistry:
        """Default classes with the configured priors, plus any extra class file; frozen."""
        registry = default_registry(
            person_accel_sigma=self.person_accel_sigma,
            person_velocity_threshold=self.person_velocity_threshold,
            object_accel_sigma=self.object_accel_sigma,
            object_velocity_threshold=self.object_velocity_threshold,
        )
        if self.class_specs_path is not None:
            registry.load_json(self.class_specs_path)
        registry.freeze()
        return registry

    def camera_intrinsics(self) -> CameraIntrinsics | None:
        if self.intrinsics is None:
            return None
        fx, fy, cx, cy, width, height = self.intrinsics
        try:
            return CameraIntrinsics(fx, fy, cx, cy, int(width), int(height))
        except ChhayaError as e:
            raise ConfigError(str(e)) from e

    def to_env(self) -> dict[str, str]:
        """The configuration as CHHAYA_* keys, in field order."""
        env = {}
        for name, value in asdict(self).items():
            if value is None:
                text = ""
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            else:
                text = str(value)
            env[env_key(name)] = text
        return env


# ── Coercion ─────────────────────────────────────────────────────

_HINTS = typing.get_type_hints(RunConfig)
FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def env_key(name: str) -> str:
    return ENV_PREFIX + name.upper()


def flag_name(name: str) -> str:
    return "--" + name.replace("_", "-")


def coerce(name: str, value):
    """Convert a raw (usually string) value to the type of field `name`."""
    hint = _HINTS[name]
    optional = type(None) in typing.get_args(hint)
    base = next((a for a in typing.get_args(hint) if a is not type(None)), hint) if optional else hint

    if not isinstance(value, str):
        return value
    text = value.strip()
    if optional and text in ("", "none", "None"):
        return None

    try:
        if base is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError("expected true or false")
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is Path:
            return Path(text).expanduser()
        if typing.get_origin(base) is tuple:
            return tuple(float(part) for part in text.split(","))
        return text
    except ValueError as e:
        raise ConfigError(f"{env_key(name)}={value!r}: {e}") from e


def values_from_env(environ: typing.Mapping[str, str | None], source: str) -> dict:
    """Pick the CHHAYA_* keys out of a mapping; unknown CHHAYA_* keys are reported."""
    known = {env_key(name): name for name in FIELD_NAMES}
    values = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        if key not in known:
            logger.warning("Ignoring unknown setting %s in %s", key, source)
            continue
        if raw is None:
            continue
        values[known[key]] = coerce(known[key], raw)
    return values


def load_config(
    config_path: str | Path | None = None,
    environ: typing.Mapping[str, str] | None = None,
    overrides: dict | None = None,
) -> RunConfig:
    """Resolve a RunConfig from defaults, a config file, the environment and flags."""
    values: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        values.update(values_from_env(dotenv_values(path), str(path)))

    environ = os.environ if environ is None else environ
    # Only CHHAYA_* keys matter; other process variables are not ours to judge
    values.update(values_from_env(
        {k: v for k, v in environ.items() if k.startswith(ENV_PREFIX) and k != env_key("config")},
        "environment",
    ))

    for name, value in (overrides or {}).items():
        values[name] = coerce(name, value)

    try:
        config = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    logger.debug("Resolved configuration: %s", config)
    return config


def add_config_arguments(parser: argparse.ArgumentParser):
    """One flag per RunConfig field. Unset flags stay out of the namespace."""
    parser.add_argument("--config", type=Path, default=None, help="dotenv-style configuration file")
    for name in FIELD_NAMES:
        hint = _HINTS[name]
        if hint is bool:
            parser.add_argument(flag_name(name), dest=name, action=argparse.BooleanOptionalAction,
                                default=argparse.SUPPRESS)
        else:
            parser.add_argument(flag_name(name), dest=name, default=argparse.SUPPRESS,
                                metavar=name.upper(), help=f"(env {env_key(name)})")


def overrides_from_args(args: argparse.Namespace) -> dict:
    return {name: getattr(args, name) for name in FIELD_NAMES if hasattr(args, name)}
