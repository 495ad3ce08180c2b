"""
Dynamic-object class registry.

Holds the a-priori knowledge about each object of interest: whether it is
rigid, how hard it can accelerate, and how fast it must move before it is
considered moving. Class ids are COCO category ids.

Written once at startup, then frozen and read-only for the rest of the run.

Operations:
    register(spec): add a class; duplicate ids are rejected
    get(class_id): look up a class spec
    load_json(path): register extra classes from a JSON list
    default_registry(): person, bottle, cup, chair
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

from scene.errors import DuplicateClassError, UnknownClassError, ValidationError

logger = logging.getLogger(__name__)

PERSON = 1
BOTTLE = 44
CUP = 47
CHAIR = 62


@dataclass(frozen=True)
class ObjectClassSpec:
    """Per-class priors used by the tracker and the motion classifier."""

    class_id: int
    name: str
    rigid: bool
    accel_sigma: float
    velocity_threshold: float

    def __post_init__(self):
        if not self.accel_sigma > 0:
            raise ValidationError(f"accel_sigma must be positive for {self.name}: {self.accel_sigma}")
        if not self.velocity_threshold >= 0:
            raise ValidationError(
                f"velocity_threshold must be non-negative for {self.name}: {self.velocity_threshold}",
            )


class ObjectClassRegistry:
    """Lookup table of ObjectClassSpec by class id."""

    def __init__(self):
        self._specs: dict[int, ObjectClassSpec] = {}
        self._frozen = False

    def register(self, spec: ObjectClassSpec) -> ObjectClassSpec:
        """Register a class and return its spec as the handle."""
        if self._frozen:
            raise ValidationError("Class registry is frozen; register classes at startup")
        if spec.class_id in self._specs:
            raise DuplicateClassError(f"Class id {spec.class_id} ({spec.name}) already registered")
        self._specs[spec.class_id] = spec
        logger.debug("Registered class %d (%s)", spec.class_id, spec.name)
        return spec

    def get(self, class_id: int) -> ObjectClassSpec:
        try:
            return self._specs[class_id]
        except KeyError:
            raise UnknownClassError(f"Class id {class_id} is not registered") from None

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._specs

    def __len__(self) -> int:
        return len(self._specs)

    def class_ids(self) -> list[int]:
        return sorted(self._specs)

    def freeze(self) -> ObjectClassRegistry:
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def load_json(self, path: str | Path) -> int:
        """Register every class spec listed in a JSON file; returns the count added.

        The file holds a list of objects with the ObjectClassSpec field names.
        """
        try:
            entries = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e
        if not isinstance(entries, list):
            raise ValidationError(f"{path}: expected a list of class specs")

        for index, entry in enumerate(entries):
            try:
                self.register(ObjectClassSpec(**entry))
            except TypeError as e:
                raise ValidationError(f"{path}[{index}]: {e}") from e

        logger.info("Loaded %d class specs from %s", len(entries), path)
        return len(entries)

    def to_list(self) -> list[dict]:
        return [asdict(self._specs[class_id]) for class_id in self.class_ids()]


def default_registry(person_accel_sigma: float = 0.62,
                     person_velocity_threshold: float = 0.01,
                     object_accel_sigma: float = 1.0,
                     object_velocity_threshold: float = 0.1) -> ObjectClassRegistry:
    """Registry holding the four objects of interest with their tuned priors."""
    registry = ObjectClassRegistry()
    registry.register(ObjectClassSpec(
        PERSON, "person", rigid=False,
        accel_sigma=person_accel_sigma, velocity_threshold=person_velocity_threshold,
    ))
    for class_id, name in ((BOTTLE, "bottle"), (CUP, "cup"), (CHAIR, "chair")):
        registry.register(ObjectClassSpec(
            class_id, name, rigid=True,
            accel_sigma=object_accel_sigma, velocity_threshold=object_velocity_threshold,
        ))
    return registry
