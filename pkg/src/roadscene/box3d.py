"""2D detections to 3D cuboids via ground-plane footprints.

A tracked box only fixes where an object touches the ground, so the
occupied space is reconstructed the other way around: a real-world size
prior for the class gives a rectangle on the ground plane, the rectangle
is rotated to the heading, its corners are carried back to the camera
image, and the box is extruded upward by a fraction of the detected
pixel height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import MissingPrior
from .geometry import BEV, GroundScale, Homography, PixelPoint, apply

HEIGHT_COEFFICIENT = 0.6  # fraction of detected pixel height kept for roofs

PEDESTRIAN_CLASS = "pedestrian"


@dataclass(frozen=True)
class DimensionPrior:
    """Real-world footprint of a class, length along travel, in meters."""

    length_m: float
    width_m: float

    def __post_init__(self):
        if not (self.length_m > 0 and self.width_m > 0):
            raise ValueError(f"prior dimensions must be positive, got "
                             f"{self.length_m}x{self.width_m}")


# Only the bus size is a measured reference value (UK double-decker);
# the rest are operator-tunable defaults.
DEFAULT_PRIORS: Mapping[str, DimensionPrior] = {
    "articulated_truck": DimensionPrior(10.0, 2.5),
    "bicycle": DimensionPrior(2.0, 0.8),
    "bus": DimensionPrior(5.8, 2.9),
    "car": DimensionPrior(4.5, 1.8),
    "motorcycle": DimensionPrior(2.0, 0.8),
    "motorized_vehicle": DimensionPrior(4.0, 1.8),
    "non_motorized_vehicle": DimensionPrior(4.0, 1.8),
    "pedestrian": DimensionPrior(0.6, 0.6),
    "pickup_truck": DimensionPrior(5.3, 2.0),
    "single_unit_truck": DimensionPrior(7.0, 2.4),
    "work_van": DimensionPrior(5.0, 2.0),
}


@dataclass(frozen=True)
class Cuboid:
    """8 perspective-image corners, floor 4 then roof 4, i+4 above i."""

    corners: tuple[PixelPoint, ...]

    def __post_init__(self):
        if len(self.corners) != 8:
            raise ValueError(f"cuboid needs 8 corners, got "
                             f"{len(self.corners)}")
        for floor_c, roof_c in zip(self.corners[:4], self.corners[4:]):
            if roof_c.y > floor_c.y:
                raise ValueError("roof corners must not lie below the floor")

    @property
    def floor(self) -> tuple[PixelPoint, ...]:
        return self.corners[:4]

    @property
    def roof(self) -> tuple[PixelPoint, ...]:
        return self.corners[4:]

    def as_lists(self) -> list[list[float]]:
        return [[c.x, c.y] for c in self.corners]


def make_footprint(center_bev: PixelPoint, class_name: str,
                   heading_deg: float,
                   priors: Mapping[str, DimensionPrior],
                   scale: GroundScale) -> tuple[PixelPoint, ...]:
    """Ground rectangle for a class at a position, aligned to the heading.

    Returns 4 BEV corners counter-clockwise starting front-left, where
    "front" points along the heading and "left" is its positive normal.
    """
    if center_bev.frame != BEV:
        raise ValueError(f"footprint center must be a bev point, got "
                         f"'{center_bev.frame}'")
    prior = priors.get(class_name)
    if prior is None:
        raise MissingPrior(f"no dimension prior for class '{class_name}'")
    half_l = scale.to_pixels(prior.length_m) / 2.0
    half_w = scale.to_pixels(prior.width_m) / 2.0
    theta = math.radians(heading_deg)
    ux, uy = math.cos(theta), math.sin(theta)
    nx, ny = -math.sin(theta), math.cos(theta)
    offsets = ((half_l, half_w), (-half_l, half_w),
               (-half_l, -half_w), (half_l, -half_w))
    return tuple(
        PixelPoint.bev(center_bev.x + a * ux + b * nx,
                       center_bev.y + a * uy + b * ny)
        for a, b in offsets)


def lift_to_3d(footprint_bev: Sequence[PixelPoint], h_inv: Homography,
               bbox_2d: Sequence[float], class_name: str,
               beta: float = HEIGHT_COEFFICIENT) -> Cuboid:
    """Extrude a ground footprint into a perspective-image cuboid.

    The floor corners are the footprint mapped back to the camera image;
    the roof sits a pure vertical shift above them: the full detected box
    height for pedestrians, beta times it for everything else (image y
    grows downward, so "above" is negative y).
    """
    if len(footprint_bev) != 4:
        raise ValueError(f"footprint needs 4 corners, got "
                         f"{len(footprint_bev)}")
    floor = tuple(apply(h_inv, c) for c in footprint_bev)
    h_b = float(bbox_2d[3])
    h_3d = h_b if class_name == PEDESTRIAN_CLASS else beta * h_b
    roof = tuple(PixelPoint(c.x, c.y - h_3d, c.frame) for c in floor)
    return Cuboid(corners=floor + roof)
