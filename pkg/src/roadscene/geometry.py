"""Planar projective geometry between camera pixels and bird's-eye pixels.

Coordinate conventions used throughout the package:

  * "perspective" frame: pixel coordinates in the roadside camera image,
    x right, y down, origin at the top-left corner.
  * "bev" frame: pixel coordinates in the bird's-eye (satellite-aligned)
    image, same axis conventions.
  * "world" frame: metric ground-plane coordinates (X, Y) in meters with
    Z up; only the Z = 0 plane is ever mapped.

A `Homography` carries its source and target frame tags and refuses to be
applied to a point from the wrong frame, which catches most unit mix-ups
at the call site instead of three modules later.

Homography matrices are canonical: Frobenius norm 1 and the last element
non-negative (if that element vanishes, the first non-zero entry in
row-major order is made positive).  Canonical form makes equality checks
and regression tests meaningful despite the projective scale ambiguity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegeneratePoint,
    FrameMismatch,
    InsufficientPairs,
    InvalidCamera,
    SingularMatrix,
)

PERSPECTIVE = "perspective"
BEV = "bev"
WORLD = "world"

# Below this size an element is treated as exactly zero when canonicalizing
# and when testing denominators / determinants.
_EPS = 1e-12


@dataclass(frozen=True)
class PixelPoint:
    """A 2-D point tagged with the frame it lives in."""

    x: float
    y: float
    frame: str = PERSPECTIVE

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("point coordinates must be finite")

    @staticmethod
    def perspective(x: float, y: float) -> "PixelPoint":
        return PixelPoint(float(x), float(y), PERSPECTIVE)

    @staticmethod
    def bev(x: float, y: float) -> "PixelPoint":
        return PixelPoint(float(x), float(y), BEV)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def canonicalize_matrix(g: np.ndarray) -> np.ndarray:
    """Scale a 3x3 matrix to Frobenius norm 1 with a deterministic sign.

    The sign rule: make g[2, 2] positive; when |g[2, 2]| is below 1e-12,
    make the first non-zero element in row-major order positive instead.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (3, 3):
        raise SingularMatrix(f"expected a 3x3 matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise SingularMatrix("matrix has non-finite entries")
    norm = float(np.linalg.norm(g))
    if norm < _EPS:
        raise SingularMatrix("matrix is numerically zero")
    g = g / norm
    if abs(g[2, 2]) > _EPS:
        pivot = g[2, 2]
    else:
        flat = g.ravel()
        nz = np.flatnonzero(np.abs(flat) > _EPS)
        pivot = flat[nz[0]]
    if pivot < 0:
        g = -g
    return g


@dataclass(frozen=True, eq=False)
class Homography:
    """An invertible 3x3 planar projective map between two tagged frames.

    The stored matrix is always canonical (see `canonicalize_matrix`) and
    read-only.  Construct directly from any non-singular 3x3 array; the
    constructor normalizes it.
    """

    matrix: np.ndarray
    source: str = PERSPECTIVE
    target: str = BEV

    def __post_init__(self):
        g = canonicalize_matrix(self.matrix)
        if abs(np.linalg.det(g)) < _EPS:
            raise SingularMatrix("homography matrix is singular")
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)

    def __repr__(self):
        return (f"Homography({self.source}->{self.target}, "
                f"matrix={np.array2string(self.matrix, precision=6)})")


def apply(h: Homography, p: PixelPoint) -> PixelPoint:
    """Map one point through a homography, checking frame tags.

    Raises DegeneratePoint when the point projects to infinity, i.e. the
    homogeneous denominator falls below 1e-12 in magnitude.
    """
    if p.frame != h.source:
        raise FrameMismatch(
            f"point is in frame '{p.frame}' but homography maps from "
            f"'{h.source}'")
    g = h.matrix
    den = g[2, 0] * p.x + g[2, 1] * p.y + g[2, 2]
    if abs(den) < _EPS:
        raise DegeneratePoint(f"point ({p.x}, {p.y}) maps to infinity")
    u = (g[0, 0] * p.x + g[0, 1] * p.y + g[0, 2]) / den
    v = (g[1, 0] * p.x + g[1, 1] * p.y + g[1, 2]) / den
    return PixelPoint(u, v, h.target)


def apply_many(h: Homography, xy: np.ndarray) -> np.ndarray:
    """Vectorized `apply` for an (n, 2) coordinate array, without frame tags.

    Rows whose homogeneous denominator vanishes come back as +/-inf rather
    than raising, so bulk consumers (consensus voting, inverse warping) can
    mask them out with a bounds or distance check.
    """
    xy = np.asarray(xy, dtype=np.float64)
    ones = np.ones((xy.shape[0], 1))
    hom = np.hstack([xy, ones]) @ h.matrix.T
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hom[:, :2] / hom[:, 2:3]
    out[~np.isfinite(out)] = np.inf
    return out


def invert(h: Homography) -> Homography:
    """Inverse map with the frame tags swapped."""
    try:
        inv = np.linalg.inv(h.matrix)
    except np.linalg.LinAlgError:
        raise SingularMatrix("homography matrix is singular") from None
    return Homography(inv, source=h.target, target=h.source)


def _normalizing_similarity(xy: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin, mean radius to sqrt(2)."""
    centroid = xy.mean(axis=0)
    mean_dist = float(np.mean(np.linalg.norm(xy - centroid, axis=1)))
    if mean_dist < _EPS:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def estimate_dlt_xy(src_xy: np.ndarray, dst_xy: np.ndarray) -> np.ndarray:
    """Direct linear transform on coordinate arrays; returns a canonical 3x3.

    Both inputs are (n, 2) with n >= 4.  Points are normalized (centroid to
    origin, mean distance sqrt(2)) before building the 2n x 9 design matrix,
    then the solution is the right singular vector of the smallest singular
    value, denormalized and canonicalized.

    Raises DegenerateConfiguration when the design matrix has rank < 8,
    which is what collinear or repeated samples produce.
    """
    src_xy = np.asarray(src_xy, dtype=np.float64)
    dst_xy = np.asarray(dst_xy, dtype=np.float64)
    n = src_xy.shape[0]
    if n < 4 or dst_xy.shape[0] != n:
        raise InsufficientPairs(f"need at least 4 pairs, got {n}")

    t_src = _normalizing_similarity(src_xy)
    t_dst = _normalizing_similarity(dst_xy)
    sn = (np.hstack([src_xy, np.ones((n, 1))]) @ t_src.T)
    dn = (np.hstack([dst_xy, np.ones((n, 1))]) @ t_dst.T)

    a = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v

    _, s, vt = np.linalg.svd(a)
    if s[7] <= _EPS * max(1.0, s[0]):
        raise DegenerateConfiguration(
            "design matrix rank below 8; sample points are degenerate")
    g_norm = vt[-1].reshape(3, 3)
    g = np.linalg.inv(t_dst) @ g_norm @ t_src
    g = canonicalize_matrix(g)
    if abs(np.linalg.det(g)) < _EPS:
        raise DegenerateConfiguration("estimated matrix is singular")
    return g


def estimate_dlt(pairs: Sequence[tuple[PixelPoint, PixelPoint]]) -> Homography:
    """Least-squares homography from >= 4 tagged point pairs.

    All first elements must share one frame and all second elements another;
    the result maps first-frame points to second-frame points.
    """
    if len(pairs) < 4:
        raise InsufficientPairs(f"need at least 4 pairs, got {len(pairs)}")
    src_frames = {p.frame for p, _ in pairs}
    dst_frames = {q.frame for _, q in pairs}
    if len(src_frames) != 1 or len(dst_frames) != 1:
        raise FrameMismatch("pairs mix points from different frames")
    src = np.array([[p.x, p.y] for p, _ in pairs])
    dst = np.array([[q.x, q.y] for _, q in pairs])
    g = estimate_dlt_xy(src, dst)
    return Homography(g, source=src_frames.pop(), target=dst_frames.pop())


# --- camera model -----------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera over a flat road.

    f is the focal length in distance units, kx/ky the pixel densities
    (px per unit) so that f*kx and f*ky are the focal lengths in pixels.
    shear is the axis skew term, (cx, cy) the principal point in pixels.
    theta_c is the downward pitch in degrees from horizontal: 90 looks
    straight down.  h_c is the mounting height in meters.
    """

    f: float
    kx: float
    ky: float
    shear: float
    cx: float
    cy: float
    theta_c: float
    h_c: float

    def __post_init__(self):
        vals = (self.f, self.kx, self.ky, self.shear, self.cx, self.cy,
                self.theta_c, self.h_c)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidCamera("camera parameters must be finite")
        if self.f <= 0 or self.kx <= 0 or self.ky <= 0:
            raise InvalidCamera("focal length and pixel densities must be > 0")
        if not 0.0 < self.theta_c <= 90.0:
            raise InvalidCamera(
                f"pitch must be in (0, 90] degrees, got {self.theta_c}")
        if self.h_c <= 0:
            raise InvalidCamera("camera height must be > 0")


def intrinsic_matrix(cam: CameraModel) -> np.ndarray:
    """3x4 intrinsic projection [K | 0]."""
    return np.array([
        [cam.f * cam.kx, cam.shear, cam.cx, 0.0],
        [0.0, cam.f * cam.ky, cam.cy, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])


def rotation_matrix(cam: CameraModel) -> np.ndarray:
    """4x4 pitch rotation taking world axes to camera axes.

    World is X right, Y away from the camera along the road, Z up; camera
    is x right, y down the image, z out along the optical axis.  A pitch
    of 90 degrees maps Y to -y (image up) with the ground at constant
    depth, i.e. a straight-down view.
    """
    th = math.radians(cam.theta_c)
    s, c = math.sin(th), math.cos(th)
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -s, -c, 0.0],
        [0.0, c, -s, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def translation_matrix(cam: CameraModel) -> np.ndarray:
    """4x4 translation placing the camera h_c / sin(theta_c) along Z."""
    th = math.radians(cam.theta_c)
    t = np.eye(4)
    t[2, 3] = -cam.h_c / math.sin(th)
    return t


def projection_matrix(cam: CameraModel) -> np.ndarray:
    """Full 3x4 world-to-pixel projection K R T."""
    return intrinsic_matrix(cam) @ rotation_matrix(cam) @ translation_matrix(cam)


def compose_from_camera(cam: CameraModel) -> Homography:
    """Ground-plane (Z = 0) reduction of the camera projection.

    Dropping the Z column of the 3x4 projection leaves a 3x3 map from
    homogeneous ground coordinates (X, Y, 1) in meters to image pixels.
    """
    p = projection_matrix(cam)
    g = p[:, [0, 1, 3]]
    try:
        return Homography(g, source=WORLD, target=PERSPECTIVE)
    except SingularMatrix:
        raise DegenerateConfiguration(
            "camera projection collapses the ground plane") from None


@dataclass(frozen=True)
class GroundScale:
    """Meters per bird's-eye pixel."""

    iota: float

    def __post_init__(self):
        if not (math.isfinite(self.iota) and self.iota > 0):
            raise InvalidCamera(f"ground scale must be finite and > 0, "
                                f"got {self.iota}")

    def to_meters(self, pixels: float) -> float:
        return pixels * self.iota

    def to_pixels(self, meters: float) -> float:
        return meters / self.iota
