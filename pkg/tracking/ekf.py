"""
Single-object extended Kalman filter.

State x = [p_x, p_y, p_z, v_x, v_y, v_z] in the world frame. Prediction uses a
constant-velocity model driven by a random acceleration whose strength is set
per object class; the update uses the camera-frame centroid observation
through the nonlinear (pose-dependent) observation function.

The time step is recomputed from frame timestamps before every cycle.

Numerical hygiene:
    - P is symmetrized after every predict and update.
    - A step producing non-finite values returns the state flagged divergent;
      the owner is expected to discard the filter.
    - An update with a numerically singular innovation covariance is skipped
      and counted on the returned state.

Operations:
    make_transition(dt): F
    make_process_noise(dt, accel_sigma): Q = Γ Σ Γᵀ
    predict(state, dt, noise): a priori estimate
    update(state, z, pose, noise): a posteriori estimate
    init_state(position, timestamp, r_diag): birth state
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from scene.errors import ValidationError
from scene.model import CameraPose
from tracking.geometry import Observation, jacobian_h, observe_h

logger = logging.getLogger(__name__)

MAX_INNOVATION_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class TrackState:
    """Filter mean and covariance at a point in time."""

    x: np.ndarray
    P: np.ndarray = field(repr=False)
    timestamp: float = 0.0
    last_update: float = 0.0
    divergent: bool = False
    skipped_updates: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(6)
        P = np.array(self.P, dtype=float).reshape(6, 6)
        x.flags.writeable = False
        P.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:]

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.x[3:]))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.P)))


@dataclass(frozen=True)
class NoiseConfig:
    """Process and observation noise for one filter step."""

    accel_sigma: float
    r_diag: tuple[float, float, float]
    gamma_velocity_exponent: int = 1

    def __post_init__(self):
        if not self.accel_sigma > 0:
            raise ValidationError(f"accel_sigma must be positive: {self.accel_sigma}")
        if len(self.r_diag) != 3 or not all(r > 0 for r in self.r_diag):
            raise ValidationError(f"r_diag must hold three positive variances: {self.r_diag}")
        if self.gamma_velocity_exponent not in (1, 2):
            raise ValidationError(
                f"gamma_velocity_exponent must be 1 or 2: {self.gamma_velocity_exponent}",
            )


def observation_noise_diag(
    z_z: float,
    lateral_sigma: float = 0.02,
    depth_quadratic: float = 0.0012,
    depth_offset: float = 0.0019,
) -> tuple[float, float, float]:
    """Variances of a centroid observation at depth z_z (m²).

    Lateral error is constant; depth error grows quadratically with range,
    as for structured-light and stereo-IR sensors.
    """
    depth_sigma = depth_quadratic * z_z * z_z + depth_offset
    return lateral_sigma ** 2, lateral_sigma ** 2, depth_sigma ** 2


def make_transition(dt: float) -> np.ndarray:
    """Constant-velocity transition F = [[I, dt·I], [0, I]]."""
    if dt < 0:
        raise ValidationError(f"Time step must be non-negative, got {dt}")
    transition = np.eye(6)
    transition[:3, 3:] = dt * np.eye(3)
    return transition


def make_process_noise(dt: float, accel_sigma: float, gamma_velocity_exponent: int = 1) -> np.ndarray:
    """Random-acceleration process noise Q = Γ Σ Γᵀ with Σ = σ² I₃.

    Γ = [dt²/2 · I₃ ; dt^k · I₃] with k = gamma_velocity_exponent; k = 1 is the
    standard model, k = 2 reproduces the alternative printed form.
    """
    if dt < 0:
        raise ValidationError(f"Time step must be non-negative, got {dt}")
    gamma = np.vstack([
        (dt * dt / 2.0) * np.eye(3),
        (dt ** gamma_velocity_exponent) * np.eye(3),
    ])
    return (accel_sigma ** 2) * (gamma @ gamma.T)


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def init_state(
    position: np.ndarray,
    timestamp: float,
    r_diag: tuple[float, float, float],
    velocity_sigma: float = 1.0,
    inflation: float = 4.0,
) -> TrackState:
    """Birth state: observed position, zero velocity, wide covariance.

    Position variance is the observation noise inflated by `inflation`;
    velocity variance is velocity_sigma² on every axis.
    """
    x = np.zeros(6)
    x[:3] = position
    covariance = np.zeros((6, 6))
    covariance[:3, :3] = inflation * np.diag(r_diag)
    covariance[3:, 3:] = (velocity_sigma ** 2) * np.eye(3)
    return TrackState(x=x, P=covariance, timestamp=timestamp, last_update=timestamp)


def predict(state: TrackState, dt: float, noise: NoiseConfig) -> TrackState:
    """A priori estimate dt seconds ahead: x ← F x, P ← F P Fᵀ + Q."""
    transition = make_transition(dt)
    process_noise = make_process_noise(dt, noise.accel_sigma, noise.gamma_velocity_exponent)

    x = transition @ state.x
    covariance = _symmetrize(transition @ state.P @ transition.T + process_noise)

    predicted = replace(state, x=x, P=covariance, timestamp=state.timestamp + dt)
    if not predicted.is_finite():
        logger.warning("Prediction produced non-finite values; filter marked divergent")
        return replace(state, divergent=True)
    return predicted


def update(state: TrackState, z: Observation, pose: CameraPose, noise: NoiseConfig) -> TrackState:
    """A posteriori estimate from one camera-frame observation."""
    jacobian = jacobian_h(pose)
    innovation = z.z - observe_h(state.position, pose)
    innovation_cov = jacobian @ state.P @ jacobian.T + np.diag(noise.r_diag)

    if np.linalg.cond(innovation_cov) > MAX_INNOVATION_CONDITION:
        logger.warning("Innovation covariance is numerically singular; update skipped")
        return replace(state, skipped_updates=state.skipped_updates + 1)

    # K = P Hᵀ S⁻¹, computed as a solve against the symmetric S
    gain = np.linalg.solve(innovation_cov, jacobian @ state.P).T
    x = state.x + gain @ innovation
    covariance = _symmetrize((np.eye(6) - gain @ jacobian) @ state.P)

    updated = replace(state, x=x, P=covariance, last_update=state.timestamp)
    if not updated.is_finite():
        logger.warning("Update produced non-finite values; filter marked divergent")
        return replace(state, divergent=True)
    return updated
