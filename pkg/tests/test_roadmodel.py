import collections

import numpy as np
import pytest

from roadscene.errors import EmptyMask, InsufficientIntersection, NoSeeds
from roadscene.geometry import PixelPoint
from roadscene.imaging import ImageBuffer
from roadscene.roadmodel import (
    BoundarySet,
    RoadMask,
    SrgParams,
    boundary_heading,
    extract_boundary,
    nearest_boundary_point,
    refine_mask,
    srg_segment,
)


def gray(arr):
    return ImageBuffer(np.asarray(arr, dtype=np.uint8))


def flood_oracle(pixels, seeds, tau):
    """Plain BFS over the similarity graph, written independently."""
    h, w = pixels.shape
    grown = np.zeros((h, w), dtype=bool)
    queue = collections.deque()
    for x, y in seeds:
        if not grown[y, x]:
            grown[y, x] = True
            queue.append((x, y))
    while queue:
        x, y = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and not grown[ny, nx] \
                        and abs(int(pixels[ny, nx]) - int(pixels[y, x])) < tau:
                    grown[ny, nx] = True
                    queue.append((nx, ny))
    return grown


def random_scene(rng, size=64):
    """Piecewise-constant background with pasted rectangles plus noise."""
    img = np.full((size, size), 128, dtype=np.uint8)
    for _ in range(rng.integers(2, 7)):
        x0, y0 = rng.integers(0, size - 8, size=2)
        ww, hh = rng.integers(4, 24, size=2)
        img[y0:y0 + hh, x0:x0 + ww] = rng.integers(0, 256)
    noise = rng.integers(-3, 4, size=img.shape)
    return np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8)


class TestSrgSegment:
    def test_uniform_image_grows_everywhere(self):
        img = gray(np.full((10, 12), 90))
        mask = srg_segment(img, [PixelPoint.bev(3, 4)])
        assert mask.pixels.all()

    def test_hard_edge_stops_growth(self):
        arr = np.zeros((8, 8), dtype=np.uint8)
        arr[:, 4:] = 200
        mask = srg_segment(gray(arr), [PixelPoint.bev(1, 1)])
        assert mask.pixels[:, :4].all()
        assert not mask.pixels[:, 4:].any()

    def test_threshold_is_strict(self):
        arr = np.array([[0, 11, 23, 34]], dtype=np.uint8)
        mask = srg_segment(gray(arr), [PixelPoint.bev(0, 0)],
                           SrgParams(tau_alpha=12))
        # steps of 11 join, the step of exactly 12 does not
        assert mask.pixels.tolist() == [[True, True, False, False]]

    def test_diagonal_connectivity(self):
        arr = np.full((4, 4), 255, dtype=np.uint8)
        arr[0, 0] = arr[1, 1] = arr[2, 2] = arr[3, 3] = 0
        mask = srg_segment(gray(arr), [PixelPoint.bev(0, 0)])
        assert mask.pixels.sum() == 4
        assert mask.pixels[3, 3]

    def test_result_contains_all_seeds(self):
        rng = np.random.default_rng(5)
        arr = rng.integers(0, 256, size=(32, 32)).astype(np.uint8)
        seeds = [PixelPoint.bev(int(x), int(y))
                 for x, y in rng.integers(0, 32, size=(6, 2))]
        mask = srg_segment(gray(arr), seeds)
        for p in seeds:
            assert mask.pixels[int(p.y), int(p.x)]

    def test_seed_order_does_not_matter(self):
        rng = np.random.default_rng(6)
        arr = random_scene(rng)
        seeds = [PixelPoint.bev(3, 3), PixelPoint.bev(40, 50),
                 PixelPoint.bev(12, 60)]
        a = srg_segment(gray(arr), seeds)
        b = srg_segment(gray(arr), seeds[::-1])
        assert a == b

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_flood_fill_oracle(self, seed):
        rng = np.random.default_rng(seed)
        arr = random_scene(rng)
        cells = [tuple(c) for c in rng.integers(0, 64, size=(4, 2))]
        seeds = [PixelPoint.bev(x, y) for x, y in cells]
        mask = srg_segment(gray(arr), seeds, SrgParams(tau_alpha=12))
        expected = flood_oracle(arr, cells, 12)
        assert np.array_equal(mask.pixels, expected)

    def test_no_seeds_raises(self):
        with pytest.raises(NoSeeds):
            srg_segment(gray(np.zeros((4, 4))), [])

    def test_seed_outside_image_raises(self):
        with pytest.raises(ValueError):
            srg_segment(gray(np.zeros((4, 4))), [PixelPoint.bev(10, 1)])

    def test_perspective_seed_rejected(self):
        with pytest.raises(ValueError):
            srg_segment(gray(np.zeros((4, 4))), [PixelPoint.perspective(1, 1)])

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            SrgParams(tau_alpha=0)
        with pytest.raises(ValueError):
            SrgParams(tau_alpha=256)
        with pytest.raises(ValueError):
            SrgParams(connectivity=4)


class TestRefineMask:
    def test_solid_block_unchanged(self):
        road = np.zeros((12, 12), dtype=bool)
        road[2:9, 3:10] = True
        assert refine_mask(RoadMask(road)) == RoadMask(road)

    def test_single_pixel_hole_filled(self):
        road = np.zeros((12, 12), dtype=bool)
        road[2:10, 2:10] = True
        holed = road.copy()
        holed[5, 6] = False
        assert refine_mask(RoadMask(holed)) == RoadMask(road)

    def test_one_pixel_gap_bridged(self):
        road = np.zeros((9, 15), dtype=bool)
        road[3:6, 1:7] = True
        road[3:6, 8:14] = True
        refined = refine_mask(RoadMask(road))
        assert refined.pixels[4, 7]

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(11)
        road = rng.random((40, 40)) > 0.4
        once = refine_mask(RoadMask(road))
        assert refine_mask(once) == once


def block_mask(h, w, y0, y1, x0, x1):
    road = np.zeros((h, w), dtype=bool)
    road[y0:y1, x0:x1] = True
    return RoadMask(road)


class TestExtractBoundary:
    def test_block_perimeter_length(self):
        boundary = extract_boundary(block_mask(20, 20, 5, 15, 5, 15))
        assert len(boundary.chains) == 1
        assert len(boundary.chains[0]) == 36  # 4 * 10 - 4

    def test_full_image_border_rectangle(self):
        boundary = extract_boundary(RoadMask(np.ones((8, 10), dtype=bool)))
        assert len(boundary.chains) == 1
        chain = set(boundary.chains[0])
        expected = {(x, y) for y in range(8) for x in range(10)
                    if x in (0, 9) or y in (0, 7)}
        assert chain == expected

    def test_chain_is_8_connected_and_closed(self):
        boundary = extract_boundary(block_mask(20, 20, 4, 12, 3, 17))
        chain = boundary.chains[0]
        cycle = list(chain) + [chain[0]]
        for (x0, y0), (x1, y1) in zip(cycle, cycle[1:]):
            assert max(abs(x1 - x0), abs(y1 - y0)) == 1

    def test_chains_cover_the_boundary_within_one_step(self):
        rng = np.random.default_rng(3)
        road = np.zeros((30, 30), dtype=bool)
        for _ in range(4):
            x0, y0 = rng.integers(0, 22, size=2)
            road[y0:y0 + rng.integers(3, 9), x0:x0 + rng.integers(3, 9)] = True
        boundary = extract_boundary(RoadMask(road))
        traced = set()
        for chain in boundary.chains:
            traced.update((int(x), int(y)) for x, y in chain)
        padded = np.zeros((32, 32), dtype=bool)
        padded[1:-1, 1:-1] = road
        border = set()
        for y, x in zip(*np.nonzero(road)):
            if not padded[y:y + 3, x:x + 3].all():
                border.add((int(x), int(y)))
        # chains contain only border pixels, and one dilation step of the
        # chains reaches every border pixel (corners may be cut)
        assert traced <= border
        for x, y in border:
            near = {(x + dx, y + dy) for dx in (-1, 0, 1)
                    for dy in (-1, 0, 1)}
            assert near & traced

    def test_hole_produces_second_chain(self):
        road = np.zeros((12, 12), dtype=bool)
        road[1:11, 1:11] = True
        road[4:7, 4:7] = False
        boundary = extract_boundary(RoadMask(road))
        assert len(boundary.chains) == 2

    def test_single_pixel_region(self):
        boundary = extract_boundary(block_mask(5, 5, 2, 3, 2, 3))
        assert boundary.chains == (((2, 2),),)

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMask):
            extract_boundary(RoadMask(np.zeros((4, 4), dtype=bool)))


class TestNearestBoundaryPoint:
    def test_point_on_boundary(self):
        boundary = extract_boundary(block_mask(20, 20, 5, 15, 5, 15))
        point, dist = nearest_boundary_point(PixelPoint.bev(5, 9), boundary)
        assert (point.x, point.y) == (5, 9)
        assert dist == 0.0

    def test_interior_point(self):
        boundary = extract_boundary(block_mask(20, 20, 0, 20, 8, 12))
        point, dist = nearest_boundary_point(PixelPoint.bev(10, 10), boundary)
        assert point.x in (8, 11)
        assert dist == pytest.approx(1.0)

    def test_tie_prefers_lowest_y_then_x(self):
        chain = ((0, 0), (2, 0), (0, 2), (2, 2))
        boundary = BoundarySet(chains=(chain,))
        point, _ = nearest_boundary_point(PixelPoint.bev(1.0, 1.0), boundary)
        assert (point.x, point.y) == (0, 0)

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(9)
        road = flood_oracle(random_scene(rng), [(32, 32)], 12)
        if not road.any():
            road[32, 32] = True
        boundary = extract_boundary(RoadMask(road))
        pts = boundary.points()
        for _ in range(100):
            q = rng.uniform(0, 64, size=2)
            point, dist = nearest_boundary_point(
                PixelPoint.bev(q[0], q[1]), boundary)
            d = np.hypot(pts[:, 0] - q[0], pts[:, 1] - q[1])
            assert dist == pytest.approx(d.min(), abs=1e-12)

    def test_frame_preserved(self):
        boundary = BoundarySet(chains=(((3, 4),),))
        point, _ = nearest_boundary_point(PixelPoint.bev(0, 0), boundary)
        assert point.frame == "bev"


def column_boundary(height=40, x=0):
    road = np.zeros((height, 30), dtype=bool)
    road[:, x] = True
    return extract_boundary(RoadMask(road))


class TestBoundaryHeading:
    def test_vertical_boundary(self):
        theta = boundary_heading(PixelPoint.bev(0, 17), column_boundary())
        assert theta == pytest.approx(90.0)

    def test_horizontal_boundary(self):
        road = np.zeros((30, 40), dtype=bool)
        road[3, :] = True
        boundary = extract_boundary(RoadMask(road))
        theta = boundary_heading(PixelPoint.bev(17, 3), boundary)
        assert theta == pytest.approx(0.0)

    def test_diagonal_boundary(self):
        yy, xx = np.mgrid[0:64, 0:64]
        boundary = extract_boundary(RoadMask(yy >= xx))
        theta = boundary_heading(PixelPoint.bev(32, 32), boundary)
        assert theta == pytest.approx(45.0, abs=6.0)

    def test_result_in_half_turn_range(self):
        rng = np.random.default_rng(21)
        road = flood_oracle(random_scene(rng), [(20, 20), (44, 44)], 12)
        road[20, 20] = True
        boundary = extract_boundary(RoadMask(road))
        pts = boundary.points()
        for x, y in pts[:: max(1, len(pts) // 25)]:
            try:
                theta = boundary_heading(
                    PixelPoint.bev(float(x), float(y)), boundary)
            except InsufficientIntersection:
                continue
            assert 0.0 <= theta < 180.0

    def test_radius_fallback_doubles(self):
        # two lone pixels 10 away from the probe: the radius-5 annulus is
        # empty, the first doubling catches both
        boundary = BoundarySet(chains=(((0, 0),), ((20, 0),)))
        theta = boundary_heading(PixelPoint.bev(10, 0), boundary, radius=5.0)
        assert theta == pytest.approx(0.0)

    def test_insufficient_intersection(self):
        boundary = BoundarySet(chains=(((0, 0),),))
        with pytest.raises(InsufficientIntersection):
            boundary_heading(PixelPoint.bev(0, 0), boundary)
