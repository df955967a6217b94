"""BEV motion smoothing: speed, heading, and angle-bounce rectification.

Positions mapped into the bird's-eye frame are smoothed by a constant-
acceleration Kalman filter observed on position only.  Speed comes from the
smoothed velocity, converted through the ground scale.  Headings from
frame-to-frame displacement can flip wildly when a vehicle is nearly
stationary; the rectification weight passes small corrections and full
reversals but suppresses near-perpendicular bounces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BufferExceeded, DegenerateDisplacement
from .geometry import BEV, GroundScale, PixelPoint
from .kalman import kf_predict_step, kf_update_step

MPH_PER_MPS = 2.236936

PROCESS_SPECTRAL_DENSITY = 10.0  # px^2 / s^5
MEASUREMENT_VARIANCE = 4.0       # px^2 per axis
OCCLUSION_BUFFER_LIMIT = 25      # frames

# state layout: [x, y, vx, vy, ax, ay]
_AXIS = {"x": (0, 2, 4), "y": (1, 3, 5)}
_H = np.zeros((2, 6))
_H[0, 0] = _H[1, 1] = 1.0
_R = np.eye(2) * MEASUREMENT_VARIANCE


@dataclass(frozen=True)
class BevKalmanState:
    """Smoothed BEV kinematic state with its covariance."""

    x: np.ndarray          # (6,) [x, y, vx, vy, ax, ay]
    p: np.ndarray          # (6, 6)

    def __post_init__(self):
        if not np.all(np.isfinite(self.x)):
            raise ValueError("state vector must be finite")

    @staticmethod
    def initial(x: float, y: float) -> "BevKalmanState":
        state = np.array([x, y, 0.0, 0.0, 0.0, 0.0])
        p = np.diag([MEASUREMENT_VARIANCE, MEASUREMENT_VARIANCE,
                     1e6, 1e6, 1e4, 1e4])
        return BevKalmanState(state, p)

    @property
    def position(self) -> PixelPoint:
        return PixelPoint(float(self.x[0]), float(self.x[1]), BEV)

    @property
    def velocity(self) -> tuple[float, float]:
        return (float(self.x[2]), float(self.x[3]))


def _transition(t_w: float) -> np.ndarray:
    f = np.eye(6)
    for _, (pi, vi, ai) in _AXIS.items():
        f[pi, vi] = t_w
        f[pi, ai] = 0.5 * t_w * t_w
        f[vi, ai] = t_w
    return f


def _process_noise(t_w: float, q: float) -> np.ndarray:
    t2 = t_w * t_w
    t3 = t2 * t_w
    t4 = t3 * t_w
    t5 = t4 * t_w
    block = q * np.array([
        [t5 / 20.0, t4 / 8.0, t3 / 6.0],
        [t4 / 8.0, t3 / 3.0, t2 / 2.0],
        [t3 / 6.0, t2 / 2.0, t_w],
    ])
    out = np.zeros((6, 6))
    for _, idx in _AXIS.items():
        for a, ia in enumerate(idx):
            for b, ib in enumerate(idx):
                out[ia, ib] = block[a, b]
    return out


def kf_predict(state: BevKalmanState, t_w: float,
               q: float = PROCESS_SPECTRAL_DENSITY) -> BevKalmanState:
    """Propagate the constant-acceleration model by t_w seconds."""
    if t_w <= 0:
        raise ValueError(f"t_w must be > 0, got {t_w}")
    x, p = kf_predict_step(state.x, state.p, _transition(t_w),
                           _process_noise(t_w, q))
    return BevKalmanState(x, p)


def kf_update(state: BevKalmanState,
              observation: tuple[float, float]) -> BevKalmanState:
    """Fold in one BEV position observation."""
    z = np.asarray(observation, dtype=np.float64)
    if not np.all(np.isfinite(z)) or z.shape != (2,):
        raise ValueError("observation must be a finite (x, y) pair")
    x, p = kf_update_step(state.x, state.p, z, _H, _R)
    return BevKalmanState(x, p)


def raw_speed(l_t: PixelPoint, l_prev: PixelPoint, dt: float,
              scale: GroundScale) -> float:
    """Instantaneous displacement speed in meters per second."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    d = math.hypot(l_t.x - l_prev.x, l_t.y - l_prev.y)
    return d * scale.iota / dt


def speed_mph(state: BevKalmanState, scale: GroundScale,
              speed_axis: str = "planar") -> float:
    """Smoothed speed in miles per hour.

    speed_axis "planar" uses the velocity norm; "x_only" uses |vx| alone
    for scenes where motion is rectified to the x axis.
    """
    vx, vy = state.velocity
    if speed_axis == "x_only":
        pixels_per_s = abs(vx)
    elif speed_axis == "planar":
        pixels_per_s = math.hypot(vx, vy)
    else:
        raise ValueError(f"unknown speed_axis {speed_axis!r}")
    return pixels_per_s * scale.iota * MPH_PER_MPS


def heading(l_t: PixelPoint, l_prev: PixelPoint) -> float:
    """Displacement direction in degrees, full quadrant (-180, 180]."""
    dx = l_t.x - l_prev.x
    dy = l_t.y - l_prev.y
    if dx == 0.0 and dy == 0.0:
        raise DegenerateDisplacement("coincident points define no direction")
    return math.degrees(math.atan2(dy, dx))


def wrap_angle(theta: float) -> float:
    """Wrap degrees into (-180, 180]."""
    r = (theta + 180.0) % 360.0 - 180.0
    return 180.0 if r == -180.0 else r


def bounce_weight(delta: float) -> float:
    """Rectification weight for a heading change wrapped to [-180, 180].

    1 at 0 and +/-180 (keep the full change), 0 at +/-90 (suppress the
    bounce entirely), cosine-shaped in between.
    """
    normalized = (delta + 180.0) / 360.0
    return (math.cos(4.0 * math.pi * normalized) + 1.0) / 2.0


def abf(theta_prev: float, theta_now: float) -> float:
    """Angle-bounce filtering: damp implausible heading jumps.

    The raw change is wrapped to [-180, 180], scaled by the bounce weight
    and added back onto the previous heading.
    """
    delta = (theta_now - theta_prev + 180.0) % 360.0 - 180.0
    w = bounce_weight(delta)
    return wrap_angle(theta_prev + w * delta)


def predict_gap(state: BevKalmanState, n_frames: int, t_w: float,
                limit: int = OCCLUSION_BUFFER_LIMIT) -> list[PixelPoint]:
    """Dead-reckon positions across a detection gap, up to the buffer limit."""
    if n_frames > limit:
        raise BufferExceeded(
            f"gap of {n_frames} frames exceeds buffer limit {limit}")
    out = []
    current = state
    for _ in range(max(0, n_frames)):
        current = kf_predict(current, t_w)
        out.append(current.position)
    return out


@dataclass(frozen=True)
class MotionEstimate:
    """Per-frame motion readout attached to a track."""

    position: PixelPoint
    speed: float
    heading: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
