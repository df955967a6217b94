"""Long-horizon traffic analytics over tracked BEV positions.

Each frame, tracks are classified into behavioural sets (parked, speeding,
collision-risk pedestrians, congested vehicles) and deposited into per-kind
heat maps.  A heat map cell accumulates unit-mass 3x3 kernel deposits, so
its total mass always equals the number of recorded events; that identity
is kept exact by backing the map with integers in units of 1/144 (the
smallest cell weight after renormalizing clipped border kernels), which
also makes sharded accumulation merge associatively without float drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyHeatMap, MissingCalibration
from .geometry import (
    BEV,
    PERSPECTIVE,
    GroundScale,
    Homography,
    PixelPoint,
    apply_many,
    invert,
)
from .imaging import ImageBuffer
from .roadmodel import BoundarySet
from .tracking import CLASS_NAMES

PEDESTRIAN_INDEX = CLASS_NAMES.index("pedestrian")

# one bump deposits this many integer units (mass 1.0)
_BUMP_UNITS = 144
# binomial 3x3 kernel, mass 16 before renormalization
_KERNEL = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.int64)

HEAT_KINDS = ("pedestrian", "vehicle", "speeding", "congestion", "proximity")

GRADIENT_ANCHORS = (
    (0.00, (0, 0, 255)),
    (0.25, (0, 255, 255)),
    (0.50, (0, 255, 0)),
    (0.75, (255, 255, 0)),
    (1.00, (255, 0, 0)),
)


@dataclass(frozen=True)
class AnalyticsConfig:
    speed_limit_mph: float = 30.0
    parking_speed_mph: float = 0.5
    parking_border_m: float = 1.0
    parking_duration_s: float = 60.0
    proximity_risk_m: float = 1.0
    congestion_distance_m: float = 2.0
    congestion_speed_mph: float = 5.0

    def __post_init__(self):
        for name in ("speed_limit_mph", "parking_border_m",
                     "parking_duration_s", "proximity_risk_m",
                     "congestion_distance_m", "congestion_speed_mph"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.parking_speed_mph < 0:
            raise ValueError("parking_speed_mph must be non-negative")


@dataclass(frozen=True)
class TrackObservation:
    """One track's state at one frame, as the analytics layer sees it."""

    track_id: int
    class_index: int
    position: PixelPoint  # bev
    speed_mph: float

    def __post_init__(self):
        if self.position.frame != BEV:
            raise ValueError(f"analytics positions must be bev points, "
                             f"got '{self.position.frame}'")
        if not (math.isfinite(self.speed_mph) and self.speed_mph >= 0):
            raise ValueError(f"speed must be finite and non-negative, "
                             f"got {self.speed_mph}")

    @property
    def is_pedestrian(self) -> bool:
        return self.class_index == PEDESTRIAN_INDEX


@dataclass(frozen=True)
class StateSets:
    """Track-id sets for one frame; parked vehicles never count as
    congested (they are excluded from all moving-vehicle analytics)."""

    frame: int
    parking: frozenset[int]
    speeding: frozenset[int]
    collision_risk: frozenset[int]
    congestion: frozenset[int]

    def __post_init__(self):
        if self.parking & self.congestion:
            raise ValueError("parking and congestion sets must be disjoint")


@dataclass(frozen=True)
class FrameStats:
    frame: int
    vehicle_count: int
    pedestrian_count: int
    avg_speed_mph: float | None

    def __post_init__(self):
        if self.vehicle_count < 0 or self.pedestrian_count < 0:
            raise ValueError("counts must be non-negative")


class HeatMap:
    """Accumulated unit-mass deposits on a BEV-sized grid."""

    def __init__(self, shape: tuple[int, int], kind: str):
        if kind not in HEAT_KINDS:
            raise ValueError(f"unknown heat map kind '{kind}'")
        h, w = shape
        if h <= 0 or w <= 0:
            raise ValueError(f"heat map shape must be positive, got {shape}")
        self.kind = kind
        self.events = 0
        self._units = np.zeros((h, w), dtype=np.int64)

    @classmethod
    def from_units(cls, units: np.ndarray, events: int,
                   kind: str) -> "HeatMap":
        """Rebuild a map from serialized integer units."""
        arr = np.asarray(units, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError(f"units must be 2-d, got shape {arr.shape}")
        if events < 0:
            raise ValueError(f"events must be >= 0, got {events}")
        heat = cls(arr.shape, kind)
        heat._units = arr.copy()
        heat.events = int(events)
        return heat

    @property
    def shape(self) -> tuple[int, int]:
        return self._units.shape

    @property
    def h(self) -> np.ndarray:
        """Real-valued view; sums to exactly `events`."""
        return self._units / _BUMP_UNITS

    def units(self) -> np.ndarray:
        return self._units.copy()

    def merge(self, other: "HeatMap") -> "HeatMap":
        """Element-wise addition; exact, so sharded runs equal one pass."""
        if other.kind != self.kind:
            raise ValueError(f"cannot merge '{other.kind}' into "
                             f"'{self.kind}'")
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch: {other.shape} vs {self.shape}")
        self._units += other._units
        self.events += other.events
        return self


def bump(heat: HeatMap, p: PixelPoint) -> HeatMap:
    """Deposit one unit of mass around a BEV position.

    The 3x3 kernel is clipped at the borders and renormalized so each
    event adds exactly 1.0 regardless of position; out-of-bounds centers
    are clamped to the nearest cell.
    """
    if p.frame != BEV:
        raise ValueError(f"heat positions must be bev points, got "
                         f"'{p.frame}'")
    h, w = heat.shape
    cx = min(max(int(math.floor(p.x + 0.5)), 0), w - 1)
    cy = min(max(int(math.floor(p.y + 0.5)), 0), h - 1)
    y0, y1 = max(cy - 1, 0), min(cy + 2, h)
    x0, x1 = max(cx - 1, 0), min(cx + 2, w)
    patch = _KERNEL[y0 - cy + 1:y1 - cy + 1, x0 - cx + 1:x1 - cx + 1]
    # clipped kernel sums always divide 144, so the deposit stays integral
    heat._units[y0:y1, x0:x1] += patch * (_BUMP_UNITS // int(patch.sum()))
    heat.events += 1
    return heat


class StateClassifier:
    """Per-frame behavioural classification with parking memory.

    Parking needs more than `parking_duration_s` of consecutive frames
    near the road border at near-zero speed; membership drops on the
    first frame either condition breaks.
    """

    def __init__(self, boundary: BoundarySet | None, scale: GroundScale,
                 cfg: AnalyticsConfig, fps: float):
        if scale is None:
            raise MissingCalibration("analytics needs a ground scale")
        if fps <= 0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.scale = scale
        self.cfg = cfg
        self.fps = fps
        self._border = (np.unique(boundary.points(), axis=0).astype(float)
                        if boundary is not None else None)
        self._still_frames: dict[int, int] = {}

    def _near_border(self, p: PixelPoint) -> bool:
        if self._border is None or len(self._border) == 0:
            return False
        d = np.hypot(self._border[:, 0] - p.x, self._border[:, 1] - p.y)
        return self.scale.to_meters(float(d.min())) < self.cfg.parking_border_m

    def step(self, frame: int,
             observations: Sequence[TrackObservation]) -> StateSets:
        cfg = self.cfg
        vehicles = [o for o in observations if not o.is_pedestrian]
        pedestrians = [o for o in observations if o.is_pedestrian]

        parked = set()
        needed = int(math.ceil(cfg.parking_duration_s * self.fps))
        seen_ids = set()
        for v in vehicles:
            seen_ids.add(v.track_id)
            if v.speed_mph < cfg.parking_speed_mph \
                    and self._near_border(v.position):
                run = self._still_frames.get(v.track_id, 0) + 1
                self._still_frames[v.track_id] = run
                if run >= needed:
                    parked.add(v.track_id)
            else:
                self._still_frames.pop(v.track_id, None)
        for track_id in list(self._still_frames):
            if track_id not in seen_ids:
                del self._still_frames[track_id]

        speeding = {v.track_id for v in vehicles
                    if v.speed_mph > cfg.speed_limit_mph}

        moving = [v for v in vehicles if v.track_id not in parked]
        risk_m = cfg.proximity_risk_m
        at_risk = set()
        for p in pedestrians:
            for v in moving:
                d = math.hypot(v.position.x - p.position.x,
                               v.position.y - p.position.y)
                if self.scale.to_meters(d) < risk_m:
                    at_risk.add(p.track_id)
                    break

        congested = set()
        limit_px = self.scale.to_pixels(cfg.congestion_distance_m)
        for i, v in enumerate(moving):
            if v.speed_mph >= cfg.congestion_speed_mph:
                continue
            for j, other in enumerate(moving):
                if i == j:
                    continue
                d = math.hypot(other.position.x - v.position.x,
                               other.position.y - v.position.y)
                if d < limit_px:
                    congested.add(v.track_id)
                    break

        return StateSets(frame=frame, parking=frozenset(parked),
                         speeding=frozenset(speeding),
                         collision_risk=frozenset(at_risk),
                         congestion=frozenset(congested))


def classify_states(frames: Iterable[tuple[int, Sequence[TrackObservation]]],
                    boundary: BoundarySet | None, scale: GroundScale,
                    cfg: AnalyticsConfig = AnalyticsConfig(),
                    fps: float = 25.0) -> list[StateSets]:
    classifier = StateClassifier(boundary, scale, cfg, fps)
    return [classifier.step(frame, obs) for frame, obs in frames]


def update_heatmaps(maps: Mapping[str, HeatMap],
                    observations: Sequence[TrackObservation],
                    states: StateSets) -> Mapping[str, HeatMap]:
    """Deposit one frame of classified positions into the five maps:
    all pedestrians, non-parked vehicles, and the speeding, congestion
    and collision-risk sets."""
    by_id = {o.track_id: o for o in observations}
    for o in observations:
        if o.is_pedestrian:
            bump(maps["pedestrian"], o.position)
        elif o.track_id not in states.parking:
            bump(maps["vehicle"], o.position)
    for kind, ids in (("speeding", states.speeding),
                      ("congestion", states.congestion),
                      ("proximity", states.collision_risk)):
        for track_id in sorted(ids):
            bump(maps[kind], by_id[track_id].position)
    return maps


def make_heatmaps(shape: tuple[int, int]) -> dict[str, HeatMap]:
    return {kind: HeatMap(shape, kind) for kind in HEAT_KINDS}


def average_speed(observations: Sequence[TrackObservation],
                  states: StateSets) -> float | None:
    """Mean speed over non-parked vehicles; None when there are none."""
    speeds = [o.speed_mph for o in observations
              if not o.is_pedestrian and o.track_id not in states.parking]
    if not speeds:
        return None
    return sum(speeds) / len(speeds)


def frame_stats(frame: int, observations: Sequence[TrackObservation],
                states: StateSets) -> FrameStats:
    pedestrians = sum(1 for o in observations if o.is_pedestrian)
    return FrameStats(frame=frame,
                      vehicle_count=len(observations) - pedestrians,
                      pedestrian_count=pedestrians,
                      avg_speed_mph=average_speed(observations, states))


def _colorize(norm: np.ndarray) -> np.ndarray:
    """Map normalized [0,255] values through the blue-to-red gradient."""
    v = norm.astype(float) / 255.0
    positions = np.array([p for p, _ in GRADIENT_ANCHORS])
    out = np.empty(norm.shape + (3,), dtype=np.uint8)
    for ch in range(3):
        levels = np.array([c[ch] for _, c in GRADIENT_ANCHORS], dtype=float)
        out[..., ch] = np.floor(
            np.interp(v, positions, levels) + 0.5).astype(np.uint8)
    return out


def render(heat: HeatMap, base: ImageBuffer | None = None,
           h_inv: Homography | None = None,
           floor: int = 5, alpha: float = 0.6) -> ImageBuffer:
    """Color-coded heat image: min-max normalize, drop faint cells, map
    through the blue-to-red gradient, optionally blend over a base image
    and re-project to the camera view.

    With `h_inv` (the BEV-to-perspective mapping) each output pixel is
    carried back to BEV by the forward mapping and sampled nearest-
    neighbor, so the output grid matches `base` (or the map size).
    """
    values = heat.h
    vmax = float(values.max())
    vmin = float(values.min())
    if heat.events == 0 or vmax <= 0:
        raise EmptyHeatMap(f"'{heat.kind}' heat map has no mass to render")
    if vmax == vmin:
        norm = np.full(values.shape, 255.0)
    else:
        norm = (values - vmin) / (vmax - vmin) * 255.0

    if h_inv is not None:
        out_h, out_w = base.pixels.shape[:2] if base is not None \
            else values.shape
        g = invert(h_inv)  # perspective -> bev
        if g.source != PERSPECTIVE:
            raise ValueError("h_inv must map bev to perspective")
        xs, ys = np.meshgrid(np.arange(out_w), np.arange(out_h))
        grid = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
        src = apply_many(g, grid)
        sx = np.floor(src[:, 0] + 0.5).astype(np.int64)
        sy = np.floor(src[:, 1] + 0.5).astype(np.int64)
        inside = ((sx >= 0) & (sx < values.shape[1])
                  & (sy >= 0) & (sy < values.shape[0])
                  & np.isfinite(src).all(axis=1))
        sampled = np.zeros(len(grid))
        sampled[inside] = norm[sy[inside], sx[inside]]
        norm = sampled.reshape(out_h, out_w)

    visible = norm >= floor
    color = _colorize(norm)

    if base is not None:
        base_px = base.pixels
        if base_px.ndim == 2:
            base_rgb = np.repeat(base_px[:, :, None], 3, axis=2)
        else:
            base_rgb = base_px
        if base_rgb.shape[:2] != norm.shape:
            raise ValueError(f"base shape {base_rgb.shape[:2]} does not "
                             f"match output {norm.shape}")
        blended = np.floor(alpha * color + (1 - alpha) * base_rgb + 0.5)
        out = np.where(visible[:, :, None], blended, base_rgb)
    else:
        out = np.where(visible[:, :, None], color, 0)
    return ImageBuffer(out.astype(np.uint8))
