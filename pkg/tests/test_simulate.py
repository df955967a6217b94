import math

import numpy as np
import pytest
from scene_helpers import scene_dict

from roadscene.errors import InvalidSpec
from roadscene.geometry import PixelPoint, apply
from roadscene.motion import MPH_PER_MPS
from roadscene.simulate import (ActorScript, _fill_polygon,
                                build_truth, generate_detections,
                                generate_matches, parse_scenario,
                                render_frame, render_satellite,
                                run_simulate, truth_homography,
                                world_to_bev_matrix)


def parse(**kw):
    return parse_scenario(scene_dict(**kw))


# --- scenario validation ----------------------------------------------------

def test_parse_smoke():
    spec = parse()
    assert spec.duration == 100
    assert spec.actors[0].class_name == "car"


def test_missing_camera_field():
    data = scene_dict()
    del data["camera"]["theta_c"]
    with pytest.raises(InvalidSpec, match="theta_c"):
        parse_scenario(data)


def test_duration_must_be_positive():
    with pytest.raises(InvalidSpec, match="duration"):
        parse(duration=0)


def test_unknown_actor_class():
    with pytest.raises(InvalidSpec, match="hoverboard"):
        parse(actors=[{"class": "hoverboard", "path": [[0, [0, 15]]]}])


def test_path_outside_world_rejected():
    with pytest.raises(InvalidSpec, match="world rectangle"):
        parse(actors=[{"class": "car", "path": [[0, [50.0, 15.0]]]}])


def test_path_timestamps_must_increase():
    with pytest.raises(InvalidSpec, match="increasing"):
        parse(actors=[{"class": "car",
                       "path": [[1.0, [0, 15]], [1.0, [1, 15]]]}])


def test_dropout_range_checked():
    with pytest.raises(InvalidSpec, match="dropout"):
        parse(dropout=1.0)


def test_bad_hidden_range():
    with pytest.raises(InvalidSpec, match="hidden"):
        parse(actors=[{"class": "car", "path": [[0, [0, 15]]],
                       "hidden": [[5, 2]]}])


def test_road_polygon_needs_three_vertices():
    data = scene_dict()
    data["road_polygon"] = [[0, 12], [1, 12]]
    with pytest.raises(InvalidSpec, match="road_polygon"):
        parse_scenario(data)


def test_behind_camera_rejected_at_generation():
    data = scene_dict(actors=[{"class": "car", "path": [[0, [0.0, -20.0]]]}])
    data["world_origin"] = [-10.0, -30.0]
    spec = parse_scenario(data)
    with pytest.raises(InvalidSpec, match="behind"):
        generate_detections(spec, seed=0)


# --- actor scripts ----------------------------------------------------------

def test_script_interpolation_and_clamping():
    actor = ActorScript("car", ((0.0, (0.0, 0.0)), (2.0, (4.0, 0.0))))
    assert actor.position(1.0) == (2.0, 0.0)
    assert actor.position(-1.0) == (0.0, 0.0)
    assert actor.position(99.0) == (4.0, 0.0)


def test_script_velocity_segments():
    actor = ActorScript("car", ((0.0, (0.0, 0.0)), (2.0, (4.0, 0.0)),
                                (4.0, (4.0, 2.0))))
    assert actor.velocity(1.0) == (2.0, 0.0)
    assert actor.velocity(2.0) == (0.0, 1.0)  # node takes outgoing segment
    assert actor.velocity(5.0) == (0.0, 0.0)
    assert actor.velocity(-0.5) == (0.0, 0.0)


def test_static_actor_has_zero_speed():
    actor = ActorScript("car", ((0.0, (1.0, 2.0)),))
    assert actor.position(3.0) == (1.0, 2.0)
    assert actor.velocity(3.0) == (0.0, 0.0)


# --- detections -------------------------------------------------------------

def test_static_car_zero_noise_identical_bbox():
    spec = parse(duration=50,
                 actors=[{"class": "car", "path": [[0.0, [0.0, 15.0]]]}])
    frames, visible = generate_detections(spec, seed=1)
    boxes = {tuple(dets[0].bbox) for _, dets in frames}
    assert len(boxes) == 1
    assert all(visible[0])


def test_noise_perturbs_center_not_size():
    spec = parse(duration=20, noise=1.0,
                 actors=[{"class": "car", "path": [[0.0, [0.0, 15.0]]]}])
    frames, _ = generate_detections(spec, seed=1)
    sizes = {tuple(dets[0].bbox[2:]) for _, dets in frames}
    centers = {tuple(dets[0].bbox[:2]) for _, dets in frames}
    assert len(sizes) == 1
    assert len(centers) > 1


def test_hidden_ranges_suppress_detections():
    spec = parse(duration=30,
                 actors=[{"class": "car", "path": [[0.0, [0.0, 15.0]]],
                          "hidden": [[10, 14]]}])
    frames, visible = generate_detections(spec, seed=0)
    for frame, dets in frames:
        expected = 0 if 10 <= frame <= 14 else 1
        assert len(dets) == expected
    assert visible[0][9] and not visible[0][10] and visible[0][15]


def test_dropout_fraction_is_binomial():
    spec = parse(duration=1000, dropout=0.1,
                 actors=[{"class": "car", "path": [[0.0, [0.0, 15.0]]]}])
    _, visible = generate_detections(spec, seed=3)
    missing = 1.0 - sum(visible[0]) / 1000.0
    assert 0.08 <= missing <= 0.12


def test_flicker_changes_reported_class():
    spec = parse(duration=400,
                 actors=[{"class": "car", "path": [[0.0, [0.0, 15.0]]],
                          "flicker": 0.25}])
    frames, _ = generate_detections(spec, seed=5)
    car_idx = 3  # alphabetical position of "car"
    flipped = sum(1 for _, dets in frames
                  if dets[0].class_probs[car_idx] < 0.5)
    assert 0 < flipped < 200


def test_pedestrian_box_is_smaller_than_bus():
    spec = parse(actors=[
        {"class": "pedestrian", "path": [[0.0, [0.0, 15.0]]]},
        {"class": "bus", "path": [[0.0, [3.0, 15.0]]]}])
    frames, _ = generate_detections(spec, seed=0)
    ped, bus = frames[0][1]
    assert ped.bbox[2] < bus.bbox[2]
    assert ped.bbox[3] < bus.bbox[3]


# --- truth ------------------------------------------------------------------

def test_truth_speed_30_mph():
    # 13.41 m/s straight line is 30.0 mph within rounding of the source
    spec = parse(duration=10, actors=[
        {"class": "car", "path": [[0.0, [-9.0, 15.0]], [1.3, [8.433, 15.0]]]}])
    truth = build_truth(spec, [[True] * 10])
    mph = truth["actors"][0]["speeds_mph"][5]
    assert mph == pytest.approx(13.41 * MPH_PER_MPS, abs=1e-9)
    assert mph == pytest.approx(30.0, abs=0.01)


def test_truth_positions_match_world_to_bev():
    spec = parse(duration=3,
                 actors=[{"class": "car", "path": [[0.0, [2.0, 15.0]]]}])
    truth = build_truth(spec, [[True] * 3])
    a = world_to_bev_matrix(spec)
    expected = a @ np.array([2.0, 15.0, 1.0])
    assert truth["actors"][0]["positions_bev"][0] == \
        pytest.approx([expected[0], expected[1]])
    # y=15 with origin y=10 at 0.05 m/px -> bev y 100
    assert truth["actors"][0]["positions_bev"][0][1] == pytest.approx(100.0)


def test_truth_heading_follows_velocity():
    spec = parse(duration=5, actors=[
        {"class": "car", "path": [[0.0, [0.0, 12.0]], [2.0, [0.0, 18.0]]]}])
    truth = build_truth(spec, [[True] * 5])
    assert truth["actors"][0]["headings_deg"][2] == pytest.approx(90.0)


def test_truth_static_heading_is_null():
    spec = parse(duration=3,
                 actors=[{"class": "car", "path": [[0.0, [0.0, 15.0]]]}])
    truth = build_truth(spec, [[True] * 3])
    assert truth["actors"][0]["headings_deg"][0] is None


def test_truth_homography_consistent_with_projection():
    spec = parse()
    g = truth_homography(spec)
    from roadscene.geometry import compose_from_camera
    h_wp = compose_from_camera(spec.camera)
    a = world_to_bev_matrix(spec)
    for wx, wy in [(-5.0, 12.0), (0.0, 15.0), (7.0, 22.0)]:
        persp = apply(h_wp, PixelPoint(wx, wy, "world"))
        bev = apply(g, PixelPoint.perspective(persp.x, persp.y))
        expected = a @ np.array([wx, wy, 1.0])
        assert bev.x == pytest.approx(expected[0], abs=1e-6)
        assert bev.y == pytest.approx(expected[1], abs=1e-6)


# --- matches ----------------------------------------------------------------

def test_matches_counts_and_outlier_mask():
    spec = parse(n_matches=200, match_sigma=0.5, outliers=0.4)
    pairs, mask = generate_matches(spec, seed=2)
    assert len(pairs) == 200
    assert sum(mask) == 80


def test_matches_inliers_map_close_outliers_far():
    spec = parse(n_matches=100, match_sigma=0.5, outliers=0.3)
    g = truth_homography(spec)
    pairs, mask = generate_matches(spec, seed=2)
    for (cam, sat), is_outlier in zip(pairs, mask):
        mapped = apply(g, PixelPoint.perspective(*cam))
        err = math.hypot(mapped.x - sat[0], mapped.y - sat[1])
        if is_outlier:
            assert err > 3.0
        else:
            assert err < 3.0


def test_matches_clean_when_sigma_zero():
    spec = parse(n_matches=50)
    g = truth_homography(spec)
    pairs, mask = generate_matches(spec, seed=0)
    assert not any(mask)
    for cam, sat in pairs:
        mapped = apply(g, PixelPoint.perspective(*cam))
        assert math.hypot(mapped.x - sat[0], mapped.y - sat[1]) < 1e-6


# --- rendered artifacts -----------------------------------------------------

def test_fill_polygon_rectangle_area():
    pts = np.array([[2.0, 3.0], [10.0, 3.0], [10.0, 8.0], [2.0, 8.0]])
    inside = _fill_polygon((12, 14), pts)
    assert inside.sum() == 8 * 5
    assert inside[4, 4] and not inside[4, 11]


def test_satellite_road_is_brighter_and_speckled():
    spec = parse()
    img = render_satellite(spec, seed=1)
    road = img.pixels[150, 200]
    ground = img.pixels[10, 10]
    assert 100 <= road <= 120
    assert 30 <= ground <= 50
    # speckle varies but stays under the region-growing threshold
    patch = img.pixels[140:160, 190:210].astype(int)
    assert patch.max() - patch.min() > 0
    assert np.abs(np.diff(patch, axis=1)).max() < 12


def test_frame_draws_actor_block():
    spec = parse(duration=1,
                 actors=[{"class": "bus", "path": [[0.0, [0.0, 15.0]]]}])
    img = render_frame(spec, 0)
    assert (img.pixels == 220).sum() > 100


def test_run_simulate_writes_and_reruns_identically(tmp_path):
    spec = parse(duration=10, noise=0.3, n_matches=20, match_sigma=0.5,
                 outliers=0.25)
    a, b = tmp_path / "a", tmp_path / "b"
    run_simulate(spec, a, seed=9)
    run_simulate(spec, b, seed=9)
    for name in ("detections.jsonl", "truth.json", "matches.json",
                 "satellite.pgm"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_run_simulate_frames_flag(tmp_path):
    spec = parse(duration=3)
    run_simulate(spec, tmp_path, seed=0, with_frames=True)
    assert (tmp_path / "frames" / "frame_0000.pgm").exists()
    assert (tmp_path / "frames" / "frame_0002.pgm").exists()
