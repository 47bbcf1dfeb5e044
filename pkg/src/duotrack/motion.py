"""Constant-velocity Kalman filter over box states.

The 8-dimensional state (cx, cy, a, h, vcx, vcy, va, vh) holds the box center,
aspect ratio w/h, height, and their per-frame velocities. The box location
(cx, cy, a, h) is observed directly. Process and measurement noise scale with
the current height so behavior is consistent across object sizes; the four
scale coefficients are configurable through :class:`MotionNoise`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import BoundingBox, TrackerConfig
from .errors import DegenerateStateError, NumericalError

_NDIM = 4

# aspect ratio is nearly scale-free; its uncertainties are small constants
_ASPECT_STD = 1e-2
_ASPECT_VEL_STD = 1e-5
_ASPECT_MEAS_STD = 1e-1

_TRANSITION = np.eye(2 * _NDIM)
for _i in range(_NDIM):
    _TRANSITION[_i, _NDIM + _i] = 1.0
_TRANSITION.flags.writeable = False


@dataclass(frozen=True)
class MotionNoise:
    """Height-proportional noise coefficients of the filter."""

    pos_std: float = 1.0 / 20.0
    vel_std: float = 1.0 / 160.0
    meas_std: float = 1.0 / 20.0
    init_vel_std: float = 1.0 / 16.0

    @classmethod
    def from_config(cls, cfg: TrackerConfig) -> "MotionNoise":
        return cls(
            pos_std=cfg.kf_pos_std,
            vel_std=cfg.kf_vel_std,
            meas_std=cfg.kf_meas_std,
            init_vel_std=cfg.kf_init_vel_std,
        )


DEFAULT_NOISE = MotionNoise()


@dataclass(eq=False)
class MotionState:
    """Filter state: mean (8,) and covariance (8, 8). Treated as a value."""

    mean: np.ndarray
    covariance: np.ndarray


def _measurement(box: BoundingBox) -> np.ndarray:
    return np.array([box.cx, box.cy, box.aspect, box.h], dtype=np.float64)


def kf_init(box: BoundingBox, noise: MotionNoise = DEFAULT_NOISE) -> MotionState:
    """Start a filter at a box with zero velocity.

    Position uncertainty scales with the box height; velocity uncertainty is
    larger since no motion has been observed yet.
    """
    z = _measurement(box)
    mean = np.concatenate([z, np.zeros(_NDIM)])
    h = box.h
    std = np.array(
        [
            2.0 * noise.pos_std * h,
            2.0 * noise.pos_std * h,
            _ASPECT_STD,
            2.0 * noise.pos_std * h,
            noise.init_vel_std * h,
            noise.init_vel_std * h,
            _ASPECT_VEL_STD,
            noise.init_vel_std * h,
        ]
    )
    return MotionState(mean=mean, covariance=np.diag(std**2))


def _process_noise(h: float, noise: MotionNoise) -> np.ndarray:
    std = np.array(
        [
            noise.pos_std * h,
            noise.pos_std * h,
            _ASPECT_STD,
            noise.pos_std * h,
            noise.vel_std * h,
            noise.vel_std * h,
            _ASPECT_VEL_STD,
            noise.vel_std * h,
        ]
    )
    return np.diag(std**2)


def kf_predict(state: MotionState, noise: MotionNoise = DEFAULT_NOISE) -> MotionState:
    """Advance one frame under the constant-velocity model."""
    mean = _TRANSITION @ state.mean
    covariance = _TRANSITION @ state.covariance @ _TRANSITION.T + _process_noise(state.mean[3], noise)
    return MotionState(mean=mean, covariance=covariance)


def kf_update(state: MotionState, measurement: BoundingBox, noise: MotionNoise = DEFAULT_NOISE) -> MotionState:
    """Correct the state with an observed box.

    Uses the Joseph form for the posterior covariance so symmetry and positive
    semidefiniteness survive long predict/update chains.
    """
    z = _measurement(measurement)
    h = state.mean[3]
    r_std = np.array([noise.meas_std * h, noise.meas_std * h, _ASPECT_MEAS_STD, noise.meas_std * h])
    measurement_cov = np.diag(r_std**2)

    projected_mean = state.mean[:_NDIM]
    projected_cov = state.covariance[:_NDIM, :_NDIM] + measurement_cov
    try:
        chol = scipy.linalg.cho_factor(projected_cov, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"singular innovation covariance: {exc}") from exc
    gain = scipy.linalg.cho_solve(chol, state.covariance[:, :_NDIM].T, check_finite=False).T

    mean = state.mean + gain @ (z - projected_mean)
    identity_kh = np.eye(2 * _NDIM)
    identity_kh[:, :_NDIM] -= gain  # H picks the first four state dims
    # Joseph form: (I - KH) P (I - KH)^T + K R K^T
    covariance = identity_kh @ state.covariance @ identity_kh.T + gain @ measurement_cov @ gain.T
    covariance = (covariance + covariance.T) / 2.0
    return MotionState(mean=mean, covariance=covariance)


def to_box(state: MotionState) -> BoundingBox:
    """Invert the (cx, cy, a, h) parameterization back to a box."""
    cx, cy, a, h = state.mean[:_NDIM]
    if a <= 0 or h <= 0:
        raise DegenerateStateError(f"state has non-positive aspect or height: a={a}, h={h}")
    w = a * h
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)
