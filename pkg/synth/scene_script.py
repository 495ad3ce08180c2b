"""
Synthetic scene scripts.

A script is a JSON document describing a camera, a set of analytic shapes and
their motion over time, and the sensor noise to apply:

    {
      "fps": 30, "frames": 100, "start_time": 0.0, "seed": 7,
      "intrinsics": {"fx": 535.4, "fy": 539.2, "cx": 320.1, "cy": 247.6,
                     "width": 640, "height": 480},
      "camera": {"position": {"start": [0, 0, 0], "velocity": [0.1, 0, 0]},
                 "euler": {"start": [0, 0, 0]}},
      "background": {"point": [0, 0, 5], "normal": [0, 0, -1]},
      "noise": {"depth_sigma": 0.0, "dropout": 0.0, "mask_jitter": 0},
      "objects": [
        {"class_id": 62, "shape": "box", "size": [0.4, 0.4, 0.02],
         "motion": {"start": [0, 0, 2], "velocity": [0.5, 0, 0], "onset": 0.5}},
        {"class_id": 1, "shape": "sphere", "radius": 0.25,
         "radius_amplitude": 0.05, "radius_frequency": 1.0,
         "motion": {"start": [-0.5, 0, 2.5]}}
      ]
    }

Every trajectory (object position, camera position, camera Euler angles) is
parametric per axis:

    value(t) = start + velocity · max(0, t − onset) + amplitude · sin(2π·frequency·t + phase)

Only "fps", "frames" and "objects" are required.

Operations:
    load_script(path): parse and validate a script file
    parse_script(data): validate an already-decoded document
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scene.errors import ScriptError, ValidationError
from scene.model import CameraIntrinsics, CameraPose

logger = logging.getLogger(__name__)

SHAPES = ("sphere", "box")


@dataclass(frozen=True, eq=False)
class ParametricMotion:
    """Per-axis drift after an onset time plus a sinusoid."""

    start: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    onset: float = 0.0
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frequency: float = 0.0
    phase: float = 0.0

    def value(self, t: float) -> np.ndarray:
        drift = self.velocity * max(0.0, t - self.onset)
        wave = self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)
        return self.start + drift + wave

    def rate(self, t: float) -> np.ndarray:
        """Analytic time derivative of value(t)."""
        drift = self.velocity if t > self.onset else np.zeros(3)
        omega = 2.0 * math.pi * self.frequency
        return drift + self.amplitude * omega * math.cos(omega * t + self.phase)

    @classmethod
    def fixed(cls, value) -> ParametricMotion:
        return cls(start=np.asarray(value, dtype=float))


@dataclass(frozen=True, eq=False)
class ObjectScript:
    class_id: int
    shape: str
    motion: ParametricMotion
    radius: float = 0.0
    radius_amplitude: float = 0.0
    radius_frequency: float = 0.0
    size: np.ndarray = field(default_factory=lambda: np.zeros(3))
    score: float = 0.9

    def radius_at(self, t: float) -> float:
        return self.radius + self.radius_amplitude * math.sin(2.0 * math.pi * self.radius_frequency * t)


@dataclass(frozen=True, eq=False)
class BackgroundPlane:
    point: np.ndarray
    normal: np.ndarray


def default_background() -> BackgroundPlane:
    """A wall 5 m in front of the world origin, facing the camera."""
    return BackgroundPlane(np.array([0.0, 0.0, 5.0]), np.array([0.0, 0.0, -1.0]))


@dataclass(frozen=True)
class NoiseModel:
    depth_sigma: float = 0.0
    dropout: float = 0.0
    mask_jitter: int = 0


@dataclass(frozen=True, eq=False)
class SceneScript:
    fps: float
    frames: int
    objects: tuple[ObjectScript, ...]
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics.tum_fr3)
    camera_position: ParametricMotion = field(default_factory=lambda: ParametricMotion.fixed([0, 0, 0]))
    camera_euler: ParametricMotion = field(default_factory=lambda: ParametricMotion.fixed([0, 0, 0]))
    background: BackgroundPlane | None = field(default_factory=default_background)
    noise: NoiseModel = field(default_factory=NoiseModel)
    start_time: float = 0.0
    seed: int = 0

    @property
    def duration(self) -> float:
        return (self.frames - 1) / self.fps

    def time_of(self, index: int) -> float:
        return self.start_time + index / self.fps

    def camera_pose(self, t: float) -> CameraPose:
        return CameraPose(self.camera_position.value(t), tuple(self.camera_euler.value(t)))

    def with_seed(self, seed: int) -> SceneScript:
        """Same geometry, different noise realization."""
        return SceneScript(
            fps=self.fps, frames=self.frames, objects=self.objects, intrinsics=self.intrinsics,
            camera_position=self.camera_position, camera_euler=self.camera_euler,
            background=self.background, noise=self.noise, start_time=self.start_time, seed=seed,
        )


# ── Parsing ──────────────────────────────────────────────────────


class _Reader:
    """Typed access to a decoded document that reports the key path on errors."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, message: str):
        raise ScriptError(f"{self.source}: {where}" if where else self.source, message)

    def mapping(self, value, where: str) -> dict:
        if not isinstance(value, dict):
            self.fail(where, f"expected an object, got {type(value).__name__}")
        return value

    def number(self, data: dict, key: str, where: str, default=None, minimum=None,
               exclusive=False) -> float:
        path = f"{where}.{key}" if where else key
        if key not in data:
            if default is None:
                self.fail(path, "required value missing")
            return float(default)
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, f"expected a finite number, got {value!r}")
        if minimum is not None and (value <= minimum if exclusive else value < minimum):
            self.fail(path, f"must be {'>' if exclusive else '>='} {minimum}, got {value}")
        return float(value)

    def integer(self, data: dict, key: str, where: str, default=None, minimum=None) -> int:
        value = self.number(data, key, where, default, minimum)
        if value != int(value):
            self.fail(f"{where}.{key}" if where else key, f"expected an integer, got {value}")
        return int(value)

    def vector(self, data: dict, key: str, where: str, default=None) -> np.ndarray:
        path = f"{where}.{key}" if where else key
        if key not in data:
            if default is None:
                self.fail(path, "required value missing")
            return np.asarray(default, dtype=float)
        value = data[key]
        if (not isinstance(value, list) or len(value) != 3
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
                or not all(math.isfinite(v) for v in value)):
            self.fail(path, f"expected three finite numbers, got {value!r}")
        return np.asarray(value, dtype=float)

    def motion(self, data: dict, key: str, where: str, default_start) -> ParametricMotion:
        path = f"{where}.{key}" if where else key
        spec = self.mapping(data.get(key, {}), path)
        return ParametricMotion(
            start=self.vector(spec, "start", path, default_start),
            velocity=self.vector(spec, "velocity", path, [0, 0, 0]),
            onset=self.number(spec, "onset", path, 0.0),
            amplitude=self.vector(spec, "amplitude", path, [0, 0, 0]),
            frequency=self.number(spec, "frequency", path, 0.0, minimum=0.0),
            phase=self.number(spec, "phase", path, 0.0),
        )


def _parse_object(reader: _Reader, data, where: str) -> ObjectScript:
    data = reader.mapping(data, where)
    shape = data.get("shape")
    if shape not in SHAPES:
        reader.fail(f"{where}.shape", f"expected one of {', '.join(SHAPES)}, got {shape!r}")

    radius = radius_amplitude = radius_frequency = 0.0
    size = np.zeros(3)
    if shape == "sphere":
        radius = reader.number(data, "radius", where, minimum=0.0, exclusive=True)
        radius_amplitude = reader.number(data, "radius_amplitude", where, 0.0, minimum=0.0)
        radius_frequency = reader.number(data, "radius_frequency", where, 0.0, minimum=0.0)
        if radius_amplitude >= radius:
            reader.fail(f"{where}.radius_amplitude", "must be smaller than radius")
    else:
        size = reader.vector(data, "size", where)
        if np.any(size <= 0):
            reader.fail(f"{where}.size", f"box dimensions must be positive, got {size.tolist()}")

    score = reader.number(data, "score", where, 0.9, minimum=0.0)
    if score > 1.0:
        reader.fail(f"{where}.score", f"must be <= 1, got {score}")

    return ObjectScript(
        class_id=reader.integer(data, "class_id", where, minimum=0),
        shape=shape,
        motion=reader.motion(data, "motion", where, None),
        radius=radius,
        radius_amplitude=radius_amplitude,
        radius_frequency=radius_frequency,
        size=size,
        score=score,
    )


def parse_script(data, source: str = "<script>") -> SceneScript:
    """Validate a decoded script document. Errors name the offending key path."""
    reader = _Reader(source)
    data = reader.mapping(data, "")

    objects = data.get("objects")
    if not isinstance(objects, list):
        reader.fail("objects", "expected a list of objects")

    intrinsics = CameraIntrinsics.tum_fr3()
    if "intrinsics" in data:
        spec = reader.mapping(data["intrinsics"], "intrinsics")
        try:
            intrinsics = CameraIntrinsics(
                fx=reader.number(spec, "fx", "intrinsics"),
                fy=reader.number(spec, "fy", "intrinsics"),
                cx=reader.number(spec, "cx", "intrinsics"),
                cy=reader.number(spec, "cy", "intrinsics"),
                width=reader.integer(spec, "width", "intrinsics", minimum=1),
                height=reader.integer(spec, "height", "intrinsics", minimum=1),
            )
        except ValidationError as e:
            reader.fail("intrinsics", str(e))

    camera = reader.mapping(data.get("camera", {}), "camera")

    background = default_background()
    if "background" in data:
        if data["background"] is None:
            background = None
        else:
            spec = reader.mapping(data["background"], "background")
            normal = reader.vector(spec, "normal", "background", [0, 0, -1])
            if np.linalg.norm(normal) == 0:
                reader.fail("background.normal", "must be non-zero")
            background = BackgroundPlane(
                reader.vector(spec, "point", "background", [0, 0, 5]),
                normal / np.linalg.norm(normal),
            )

    noise_spec = reader.mapping(data.get("noise", {}), "noise")
    dropout = reader.number(noise_spec, "dropout", "noise", 0.0, minimum=0.0)
    if dropout > 1.0:
        reader.fail("noise.dropout", f"must be <= 1, got {dropout}")
    noise = NoiseModel(
        depth_sigma=reader.number(noise_spec, "depth_sigma", "noise", 0.0, minimum=0.0),
        dropout=dropout,
        mask_jitter=reader.integer(noise_spec, "mask_jitter", "noise", 0, minimum=0),
    )

    return SceneScript(
        fps=reader.number(data, "fps", "", minimum=0.0, exclusive=True),
        frames=reader.integer(data, "frames", "", minimum=1),
        objects=tuple(_parse_object(reader, obj, f"objects[{i}]") for i, obj in enumerate(objects)),
        intrinsics=intrinsics,
        camera_position=reader.motion(camera, "position", "camera", [0, 0, 0]),
        camera_euler=reader.motion(camera, "euler", "camera", [0, 0, 0]),
        background=background,
        noise=noise,
        start_time=reader.number(data, "start_time", "", 0.0),
        seed=reader.integer(data, "seed", "", 0, minimum=0),
    )


def load_script(path: str | Path) -> SceneScript:
    """Read a script file. JSON syntax errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScriptError(str(path), f"cannot read script: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScriptError(f"{path}:{e.lineno}:{e.colno}", e.msg) from e

    script = parse_script(data, str(path))
    logger.info(
        "Loaded scene script %s: %d objects, %d frames at %.1f fps",
        path, len(script.objects), script.frames, script.fps,
    )
    return script
