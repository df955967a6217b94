"""Road-region segmentation and boundary geometry in the bird's-eye frame.

The road surface is grown from seed pixels left behind by vehicle
trajectories: an adjacent pixel joins when its intensity differs from the
pixel that reached it by less than tau_alpha, so the result is the closure
of the seeds in the graph whose edges connect 8-neighbors with similar
intensity.  The grown mask is cleaned by morphological closing, its border
is traced into ordered chains, and those chains answer nearest-boundary and
local-boundary-direction queries for vehicles that stand still too long to
have a usable heading of their own.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyMask,
    InsufficientIntersection,
    NoSeeds,
)
from .geometry import BEV, PixelPoint
from .imaging import ImageBuffer, dilate3x3, erode3x3
from .motion import heading

# clockwise ring of 8-neighbor offsets (dx, dy), y pointing down
_RING = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))
_RING_INDEX = {off: i for i, off in enumerate(_RING)}


@dataclass(frozen=True)
class SrgParams:
    tau_alpha: float = 12.0
    connectivity: int = 8

    def __post_init__(self):
        if not 0 < self.tau_alpha < 256:
            raise ValueError(f"tau_alpha must be in (0, 256), "
                             f"got {self.tau_alpha}")
        if self.connectivity != 8:
            raise ValueError("only 8-connectivity is supported")


@dataclass(frozen=True, eq=False)
class RoadMask:
    """Binary road-surface grid aligned with the BEV image."""

    pixels: np.ndarray  # bool (h, w)

    def __post_init__(self):
        arr = np.asarray(self.pixels).astype(bool)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def to_image(self) -> ImageBuffer:
        return ImageBuffer(np.where(self.pixels, 255, 0).astype(np.uint8))

    @staticmethod
    def from_image(img: ImageBuffer) -> "RoadMask":
        return RoadMask(img.pixels > 127)

    def __eq__(self, other):
        return (isinstance(other, RoadMask)
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class BoundarySet:
    """Ordered 8-connected contour chains of (x, y) boundary pixels."""

    chains: tuple[tuple[tuple[int, int], ...], ...]

    def points(self) -> np.ndarray:
        """All chain pixels as an (n, 2) int array, chain order preserved."""
        flat = [p for chain in self.chains for p in chain]
        return np.array(flat, dtype=np.int64).reshape(-1, 2)


def _seed_cells(image: ImageBuffer,
                seeds: Sequence[PixelPoint]) -> list[tuple[int, int]]:
    if not seeds:
        raise NoSeeds("need at least one seed")
    h, w = image.pixels.shape
    cells = []
    for p in seeds:
        if p.frame != BEV:
            raise ValueError(f"seeds must be bev points, got '{p.frame}'")
        x = int(np.floor(p.x + 0.5))
        y = int(np.floor(p.y + 0.5))
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"seed ({p.x}, {p.y}) outside {w}x{h} image")
        cells.append((x, y))
    return cells


def srg_segment(image: ImageBuffer, seeds: Sequence[PixelPoint],
                params: SrgParams = SrgParams()) -> RoadMask:
    """Grow road regions from seed pixels by intensity similarity.

    A wavefront implementation: every grown pixel becomes a new seed, and a
    neighbor joins when |intensity difference| < tau_alpha against the pixel
    that reached it.  Equivalent to flood fill over the similarity graph,
    so the result does not depend on seed order.
    """
    if image.channels != 1:
        raise ValueError("segmentation expects a 1-channel image")
    intensity = image.pixels.astype(np.int16)
    h, w = intensity.shape
    visited = np.zeros((h, w), dtype=bool)
    for x, y in _seed_cells(image, seeds):
        visited[y, x] = True
    frontier = visited.copy()
    while frontier.any():
        grown = np.zeros_like(visited)
        for dx, dy in _RING:
            ty0, ty1 = max(dy, 0), h + min(dy, 0)
            tx0, tx1 = max(dx, 0), w + min(dx, 0)
            sy0, sy1 = max(-dy, 0), h + min(-dy, 0)
            sx0, sx1 = max(-dx, 0), w + min(-dx, 0)
            reachable = frontier[sy0:sy1, sx0:sx1] & (
                np.abs(intensity[ty0:ty1, tx0:tx1]
                       - intensity[sy0:sy1, sx0:sx1]) < params.tau_alpha)
            grown[ty0:ty1, tx0:tx1] |= reachable
        grown &= ~visited
        visited |= grown
        frontier = grown
    return RoadMask(visited)


def refine_mask(mask: RoadMask) -> RoadMask:
    """Morphological closing: fill sub-kernel holes and gaps."""
    return RoadMask.from_image(erode3x3(dilate3x3(mask.to_image())))


def _boundary_pixels(road: np.ndarray) -> np.ndarray:
    h, w = road.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = road
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    return road & ~windows.all(axis=(2, 3))


def _next_contour_step(road: np.ndarray, cur: tuple[int, int],
                       back: tuple[int, int]):
    """Clockwise Moore scan from the backtrack; returns (next, new_back)."""
    h, w = road.shape
    cx, cy = cur
    start = _RING_INDEX[(back[0] - cx, back[1] - cy)]
    last_bg = back
    for i in range(1, 9):
        dx, dy = _RING[(start + i) % 8]
        nx, ny = cx + dx, cy + dy
        if 0 <= nx < w and 0 <= ny < h and road[ny, nx]:
            return (nx, ny), last_bg
        last_bg = (nx, ny)
    return None, None


def _trace_from(road: np.ndarray, start: tuple[int, int],
                back: tuple[int, int]) -> list[tuple[int, int]]:
    """Walk the contour until the (pixel, backtrack) state repeats.

    The walk is deterministic, so a repeated state means the contour has
    closed; this subsumes the usual stop-on-first-move-repeated criterion
    and also terminates when the start pixel lies on a spur feeding into
    the cycle rather than on the cycle itself.
    """
    chain = [start]
    seen = {(start, back)}
    cur, cur_back = start, back
    while True:
        nxt, new_back = _next_contour_step(road, cur, cur_back)
        if nxt is None:
            break  # isolated pixel
        if (nxt, new_back) in seen:
            break
        seen.add((nxt, new_back))
        chain.append(nxt)
        cur, cur_back = nxt, new_back
    if len(chain) > 1 and chain[-1] == chain[0]:
        # re-entering the start with a different backtrack appends it a
        # second time before the repeat is seen; keep each position once
        chain.pop()
    return chain


def extract_boundary(mask: RoadMask) -> BoundarySet:
    """Trace every region border (outer and hole) into closed chains.

    Standard Moore-neighbor tracing: from each untraced boundary pixel,
    walk clockwise around the road/background interface until the walk
    state repeats.  Every chain pixel is a road pixel with at least one
    non-road 8-neighbor (image border counts as non-road), and every such
    pixel is on a chain or 8-adjacent to one; concave corners that the
    clockwise walk cuts across are the only pixels covered by adjacency.
    """
    road = mask.pixels
    if not road.any():
        raise EmptyMask("mask has no road pixels")
    boundary = _boundary_pixels(road)
    traced = np.zeros_like(boundary)
    chains = []
    ys, xs = np.nonzero(boundary)
    for y, x in zip(ys, xs):
        if traced[y, x]:
            continue
        # deterministic backtrack: first background neighbor clockwise
        back = None
        for dx, dy in _RING:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < road.shape[1] and 0 <= ny < road.shape[0]) \
                    or not road[ny, nx]:
                back = (nx, ny)
                break
        chain = _trace_from(road, (x, y), back)
        fresh = sum(1 for cx, cy in chain if not traced[cy, cx])
        for cx, cy in chain:
            traced[cy, cx] = True
        # a concave corner cut by an earlier trace re-walks that contour;
        # it is already within one step of the emitted chain, so skip it
        if len(chain) == 1 or fresh > 1:
            chains.append(tuple(chain))
    return BoundarySet(chains=tuple(chains))


def nearest_boundary_point(p: PixelPoint,
                           boundary: BoundarySet) -> tuple[PixelPoint, float]:
    """Closest boundary pixel; ties go to the lowest (y, then x)."""
    pts = boundary.points()
    if len(pts) == 0:
        raise EmptyMask("boundary set is empty")
    d2 = (pts[:, 0] - p.x) ** 2 + (pts[:, 1] - p.y) ** 2
    best = d2.min()
    tied = pts[d2 == best]
    order = np.lexsort((tied[:, 0], tied[:, 1]))
    bx, by = tied[order[0]]
    return PixelPoint.bev(float(bx), float(by)), float(np.sqrt(best))


def boundary_heading(l_r: PixelPoint, boundary: BoundarySet,
                     radius: float = 5.0) -> float:
    """Local boundary direction at a boundary point, in [0, 180) degrees.

    Intersects the boundary with an annulus of the given radius (half-width
    0.5 px) and takes the direction between the two intersection pixels
    farthest apart.  When fewer than two pixels intersect, the radius is
    doubled, up to four times.
    """
    pts = np.unique(boundary.points(), axis=0)
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    pts = pts[order]
    d = np.hypot(pts[:, 0] - l_r.x, pts[:, 1] - l_r.y)
    for attempt in range(5):
        r = radius * (2 ** attempt)
        ring = pts[np.abs(d - r) <= 0.5]
        if len(ring) < 2:
            continue
        diff = ring[:, None, :] - ring[None, :, :]
        pair_d2 = (diff ** 2).sum(axis=2)
        i, j = np.unravel_index(int(np.argmax(pair_d2)), pair_d2.shape)
        theta = heading(PixelPoint.bev(float(ring[j, 0]), float(ring[j, 1])),
                        PixelPoint.bev(float(ring[i, 0]), float(ring[i, 1])))
        return theta % 180.0
    raise InsufficientIntersection(
        f"fewer than 2 boundary pixels within any probe annulus around "
        f"({l_r.x}, {l_r.y})")
