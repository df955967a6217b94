"""Command-line entry points.

Subcommands cover the whole pipeline: simulate (oracle scene), calibrate
(camera-to-aerial homography), track (detections to smoothed tracks),
segment (road mask from trajectories), analyze (states, stats, heat maps),
render (heat map images) and merge (combine sharded outputs).

Exit codes: 0 success, 1 runtime/numerical failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import records
from .analytics import (HEAT_KINDS, StateClassifier, TrackObservation,
                        frame_stats, make_heatmaps, render, update_heatmaps)
from .box3d import lift_to_3d, make_footprint
from .calibration import Correspondence, fit_distortion_es, ransac_homography
from .config import Config, load_config
from .errors import (ConfigError, DegenerateDisplacement, EmptyHeatMap,
                     InputError, ProcessingError, SchemaError)
from .geometry import GroundScale, PixelPoint, apply, invert
from .imaging import (BackgroundAccumulator, accumulate_background,
                      histogram_match, read_pnm, to_gray, write_pnm)
from .motion import (BevKalmanState, abf, heading, kf_predict, kf_update,
                     speed_mph)
from .records import (dump_json, load_boundary, load_calibration,
                      load_detections, load_heatmap, load_json, load_stats,
                      load_tracks, merge_stats, save_boundary, save_heatmap,
                      state_rows, track_row, tracks_by_frame, write_states,
                      write_stats, write_tracks)
from .roadmodel import extract_boundary, refine_mask, srg_segment
from .seeding import subsystem_seed
from .simulate import load_scenario, run_simulate
from .tracking import CLASS_NAMES, PEDESTRIAN, MomctTracker


def _config_from(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- simulate ---------------------------------------------------------------

def _cmd_simulate(args) -> int:
    cfg = _config_from(args)
    spec = load_scenario(args.spec)
    run_simulate(spec, args.out, cfg.seed, with_frames=args.frames)
    print(f"simulate: wrote {args.out}")
    return 0


# --- calibrate --------------------------------------------------------------

def _load_matches(path) -> list[Correspondence]:
    data = load_json(path)
    if not isinstance(data, dict) or "pairs" not in data:
        raise SchemaError(f"{path}: matches need a 'pairs' list")
    out = []
    for i, pair in enumerate(data["pairs"]):
        try:
            cam = pair["cam"]
            sat = pair["sat"]
            out.append(Correspondence(
                cam=PixelPoint.perspective(float(cam[0]), float(cam[1])),
                sat=PixelPoint.bev(float(sat[0]), float(sat[1]))))
        except (TypeError, KeyError, ValueError, IndexError):
            raise SchemaError(
                f"{path}: pairs[{i}] must be "
                f"{{'cam': [x, y], 'sat': [x, y]}}") from None
    return out


def _load_trajectories(path) -> list[list[PixelPoint]]:
    trajectories = []
    text = Path(path).read_text(encoding="utf-8")
    import json
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON: {exc}") from None
        if not isinstance(row, dict) or "points" not in row:
            raise SchemaError(f"line {lineno}: expected {{'points': [...]}}")
        try:
            trajectories.append([
                PixelPoint.perspective(float(p[0]), float(p[1]))
                for p in row["points"]])
        except (TypeError, ValueError, IndexError):
            raise SchemaError(
                f"line {lineno}: points must be [x, y] pairs") from None
    return trajectories


def _cmd_calibrate(args) -> int:
    cfg = _config_from(args)
    out = _out_dir(args)

    bev_size = None
    if args.satellite:
        sat = read_pnm(args.satellite)
        bev_size = [sat.width, sat.height]
    elif args.bev_size:
        bev_size = list(args.bev_size)

    distortion = None
    if args.trajectories:
        if not args.image_size:
            raise ConfigError("--trajectories needs --image-size W H")
        trajs = _load_trajectories(args.trajectories)
        dist = fit_distortion_es(trajs, tuple(args.image_size),
                                 seed=subsystem_seed(cfg.seed, "distortion"))
        distortion = {"k": list(dist.k), "center": list(dist.center),
                      "image_size": list(dist.image_size)}

    if args.frames_dir:
        files = sorted(Path(args.frames_dir).glob("*.pgm"))
        if not files:
            raise SchemaError(f"no .pgm frames in {args.frames_dir}")
        acc = BackgroundAccumulator(alpha=cfg.alpha)
        for path in files[:cfg.background_frames]:
            accumulate_background(acc, to_gray(read_pnm(path)))
        background = acc.background()
        write_pnm(background, out / "background.pgm")
        if args.satellite:
            matched, _ = histogram_match(background, to_gray(sat))
            write_pnm(matched, out / "background_matched.pgm")

    matches = _load_matches(args.matches)
    result = ransac_homography(matches, cfg.ransac_params(),
                               rng_seed=subsystem_seed(cfg.seed, "ransac"))
    residuals = []
    for m, keep in zip(matches, result.inlier_mask):
        if keep:
            mapped = apply(result.h, m.cam)
            residuals.append((mapped.x - m.sat.x) ** 2
                             + (mapped.y - m.sat.y) ** 2)
    rmse = (sum(residuals) / len(residuals)) ** 0.5 if residuals else None

    dump_json({
        "g": records.homography_to_json(result.h),
        "bev_size": bev_size,
        "iota_m_per_px": cfg.iota_m_per_px,
        "matches_total": len(matches),
        "inliers": int(result.votes),
        "inlier_ratio": result.votes / len(matches),
        "rmse_px": rmse,
        "iterations": result.iterations_run,
        "distortion": distortion,
    }, out / "calibration.json")
    print(f"calibrate: {result.votes}/{len(matches)} inliers, "
          f"rmse {rmse:.4f} px" if rmse is not None else
          f"calibrate: {result.votes}/{len(matches)} inliers")
    return 0


# --- track ------------------------------------------------------------------

def _cmd_track(args) -> int:
    cfg = _config_from(args)
    calib = load_calibration(args.calibration)
    g = calib["g"]
    g_inv = invert(g)
    scale = GroundScale(calib.get("iota_m_per_px") or cfg.iota_m_per_px)
    detections = load_detections(args.detections)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if not detections:
        write_tracks(out_path, [])
        print("track: no detections, wrote empty tracks")
        return 0

    by_frame = dict(detections)
    last_frame = max(by_frame)
    tracker = MomctTracker(**cfg.tracker_kwargs())
    t_w = 1.0 / cfg.fps
    motion: dict[int, dict] = {}
    rows = []
    for frame in range(last_frame + 1):
        for snap in tracker.step(by_frame.get(frame, []), frame):
            ref_pt = PixelPoint.perspective(*snap.ref)
            bev = apply(g, ref_pt)
            entry = motion.get(snap.track_id)
            if entry is None:
                kf = BevKalmanState.initial(bev.x, bev.y)
                entry = {"kf": kf, "frame": frame, "heading": None,
                         "last_pos": None}
                motion[snap.track_id] = entry
            else:
                gap = frame - entry["frame"]
                kf = kf_predict(entry["kf"], gap * t_w)
                kf = kf_update(kf, (bev.x, bev.y))
                entry["kf"] = kf
                entry["frame"] = frame
            pos = entry["kf"].position
            speed = speed_mph(entry["kf"], scale, cfg.speed_axis)
            if entry["last_pos"] is not None:
                try:
                    raw = heading(pos, entry["last_pos"])
                    entry["heading"] = (raw if entry["heading"] is None
                                        else abf(entry["heading"], raw))
                except DegenerateDisplacement:
                    pass
            entry["last_pos"] = pos

            theta = entry["heading"]
            if theta is None and snap.class_name == PEDESTRIAN:
                theta = 0.0
            cuboid = None
            if theta is not None:
                footprint = make_footprint(pos, snap.class_name, theta,
                                           cfg.priors, scale)
                cube = lift_to_3d(footprint, g_inv, snap.bbox,
                                  snap.class_name, beta=cfg.beta)
                cuboid = cube.as_lists()
            rows.append(track_row(frame, snap.track_id, snap.class_name,
                                  snap.bbox, snap.ref, bev=(pos.x, pos.y),
                                  speed_mph=speed,
                                  heading_deg=entry["heading"],
                                  cuboid=cuboid))
    write_tracks(out_path, rows)
    print(f"track: {len(rows)} track rows, "
          f"{len({r['id'] for r in rows})} identities")
    return 0


# --- segment ----------------------------------------------------------------

def _cmd_segment(args) -> int:
    cfg = _config_from(args)
    rows = load_tracks(args.tracks)
    satellite = to_gray(read_pnm(args.satellite))
    seen = set()
    seeds = []
    for row in rows:
        if row["class"] == PEDESTRIAN or row["bev"] is None:
            continue
        x, y = row["bev"]
        cell = (int(x + 0.5) if x >= 0 else -1,
                int(y + 0.5) if y >= 0 else -1)
        if not (0 <= cell[0] < satellite.width
                and 0 <= cell[1] < satellite.height):
            continue
        if cell not in seen:
            seen.add(cell)
            seeds.append(PixelPoint.bev(float(cell[0]), float(cell[1])))
    mask = srg_segment(satellite, seeds, cfg.srg_params())
    refined = refine_mask(mask)
    boundary = extract_boundary(refined)
    out = _out_dir(args)
    write_pnm(refined.to_image(), out / "road_mask.pgm")
    save_boundary(out / "boundary.json", boundary)
    print(f"segment: {int(refined.pixels.sum())} road px, "
          f"{len(boundary.chains)} boundary chains")
    return 0


# --- analyze ----------------------------------------------------------------

def _resolve_bev_shape(args, calib) -> tuple[int, int]:
    if args.bev_size:
        w, h = args.bev_size
        return (h, w)
    size = calib.get("bev_size")
    if size:
        return (int(size[1]), int(size[0]))
    raise ConfigError("BEV size unknown: pass --bev-size W H or record "
                      "bev_size in calibration.json")


def _observations(rows: list[dict]) -> list[TrackObservation]:
    obs = []
    for row in rows:
        if row["bev"] is None:
            continue
        speed = row["speed_mph"]
        obs.append(TrackObservation(
            track_id=row["id"],
            class_index=CLASS_NAMES.index(row["class"]),
            position=PixelPoint.bev(row["bev"][0], row["bev"][1]),
            speed_mph=0.0 if speed is None else max(speed, 0.0)))
    return obs


def _cmd_analyze(args) -> int:
    cfg = _config_from(args)
    calib = load_calibration(args.calibration)
    scale = GroundScale(calib.get("iota_m_per_px") or cfg.iota_m_per_px)
    shape = _resolve_bev_shape(args, calib)
    rows = load_tracks(args.tracks)
    grouped = tracks_by_frame(rows)
    boundary = load_boundary(args.boundary) if args.boundary else None

    start = args.from_frame if args.from_frame is not None else 0
    if args.to_frame is not None:
        stop = args.to_frame
    else:
        stop = max(grouped) if grouped else start - 1

    classifier = StateClassifier(boundary, scale, cfg.analytics_config(),
                                 cfg.fps)
    maps = make_heatmaps(shape)
    stats = []
    event_rows = []
    for frame in range(start, stop + 1):
        obs = _observations(grouped.get(frame, []))
        states = classifier.step(frame, obs)
        stats.append(frame_stats(frame, obs, states))
        event_rows.extend(state_rows(states))
        update_heatmaps(maps, obs, states)

    out = _out_dir(args)
    write_stats(out / "stats.csv", stats)
    write_states(out / "states.jsonl", event_rows)
    for kind in HEAT_KINDS:
        save_heatmap(out / f"heat_{kind}.json", maps[kind])
    print(f"analyze: frames {start}..{stop}, "
          + ", ".join(f"{kind}={maps[kind].events}" for kind in HEAT_KINDS))
    return 0


# --- render -----------------------------------------------------------------

def _cmd_render(args) -> int:
    cfg = _config_from(args)
    base = to_gray(read_pnm(args.satellite)) if args.satellite else None
    persp_base = read_pnm(args.perspective_base) \
        if args.perspective_base else None
    h_inv = None
    if args.calibration:
        calib = load_calibration(args.calibration)
        h_inv = invert(calib["g"])

    out = _out_dir(args)
    heat_dir = Path(args.heat_dir)
    written = 0
    for kind in HEAT_KINDS:
        path = heat_dir / f"heat_{kind}.json"
        if not path.exists():
            print(f"render: note: {kind}: no heat map file, skipped")
            continue
        heat = load_heatmap(path)
        try:
            img = render(heat, base=base, floor=cfg.render_floor,
                         alpha=cfg.render_alpha)
        except EmptyHeatMap:
            print(f"render: note: {kind}: EmptyHeatMap, skipped")
            continue
        write_pnm(img, out / f"heat_{kind}_bev.ppm")
        written += 1
        if h_inv is not None:
            img_p = render(heat, base=persp_base, h_inv=h_inv,
                           floor=cfg.render_floor, alpha=cfg.render_alpha)
            write_pnm(img_p, out / f"heat_{kind}_perspective.ppm")
    print(f"render: wrote {written} map(s)")
    return 0


# --- merge ------------------------------------------------------------------

def _cmd_merge(args) -> int:
    paths = [Path(p) for p in args.inputs]
    suffixes = {p.suffix for p in paths}
    if suffixes == {".json"}:
        maps = [load_heatmap(p) for p in paths]
        merged = maps[0]
        for other in maps[1:]:
            try:
                merged.merge(other)
            except ValueError as exc:
                raise SchemaError(str(exc)) from None
        save_heatmap(args.out, merged)
        print(f"merge: {len(paths)} heat shards -> {args.out} "
              f"({merged.events} events)")
    elif suffixes == {".csv"}:
        merged_stats = merge_stats([load_stats(p) for p in paths])
        write_stats(args.out, merged_stats)
        print(f"merge: {len(paths)} stats shards -> {args.out} "
              f"({len(merged_stats)} frames)")
    else:
        raise ConfigError("merge inputs must be all .json heat maps or "
                          "all .csv stats")
    return 0


# --- parser -----------------------------------------------------------------

def _add_common(sub, config=True, seed=True, out=True):
    if config:
        sub.add_argument("--config", help="flat key=value config file")
    if seed:
        sub.add_argument("--seed", type=int, default=None,
                         help="run seed (overrides config)")
    if out:
        sub.add_argument("--out", required=True, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadscene",
        description="Traffic-scene geometry and analytics over a "
                    "calibrated aerial view.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--spec", required=True, help="scenario JSON")
    p.add_argument("--frames", action="store_true",
                   help="also write per-frame PGM images")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("calibrate", help="estimate the aerial homography")
    p.add_argument("--matches", required=True,
                   help="matches JSON (cam/sat pixel pairs)")
    p.add_argument("--trajectories",
                   help="JSON Lines of perspective trajectories for "
                        "distortion fitting")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"),
                   help="camera image size (needed with --trajectories)")
    p.add_argument("--frames-dir", help="PGM frames for background "
                                        "extraction")
    p.add_argument("--satellite", help="aerial reference image (PGM/PPM)")
    p.add_argument("--bev-size", type=int, nargs=2, metavar=("W", "H"),
                   help="aerial window size if no satellite image")
    _add_common(p)
    p.set_defaults(func=_cmd_calibrate)

    p = subs.add_parser("track", help="run the tracker over detections")
    p.add_argument("--detections", required=True, help="detections JSONL")
    p.add_argument("--calibration", required=True, help="calibration JSON")
    _add_common(p)
    p.set_defaults(func=_cmd_track)

    p = subs.add_parser("segment", help="grow the road mask from tracks")
    p.add_argument("--tracks", required=True, help="tracks JSONL")
    p.add_argument("--satellite", required=True, help="aerial image")
    _add_common(p)
    p.set_defaults(func=_cmd_segment)

    p = subs.add_parser("analyze", help="per-frame states, stats, heat maps")
    p.add_argument("--tracks", required=True, help="tracks JSONL")
    p.add_argument("--calibration", required=True, help="calibration JSON")
    p.add_argument("--boundary", help="road boundary JSON (enables parking)")
    p.add_argument("--bev-size", type=int, nargs=2, metavar=("W", "H"),
                   help="heat map size if not in calibration")
    p.add_argument("--from-frame", type=int, default=None)
    p.add_argument("--to-frame", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = subs.add_parser("render", help="render heat maps to PPM images")
    p.add_argument("--heat-dir", required=True,
                   help="directory with heat_*.json")
    p.add_argument("--calibration",
                   help="calibration JSON (enables perspective renders)")
    p.add_argument("--satellite", help="aerial base image to blend over")
    p.add_argument("--perspective-base",
                   help="camera-view base image to blend over")
    _add_common(p)
    p.set_defaults(func=_cmd_render)

    p = subs.add_parser("merge", help="merge sharded heat maps or stats")
    p.add_argument("inputs", nargs="+", help="shard files (.json or .csv)")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_merge)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ProcessingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
