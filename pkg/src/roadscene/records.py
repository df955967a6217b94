"""File formats shared by the CLI stages.

Detections and tracks travel as JSON Lines, calibration and heat maps as
JSON, per-frame stats as CSV.  All writers are deterministic: keys are
sorted, separators fixed, floats serialized by repr.  Readers fail fast and
name the offending line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .analytics import HEAT_KINDS, FrameStats, HeatMap
from .errors import SchemaError
from .geometry import BEV, PERSPECTIVE, Homography
from .tracking import CLASS_NAMES, Detection

_SEPARATORS = (",", ":")


def _dump_row(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=_SEPARATORS)


def dump_json(obj, path) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def _require(row: dict, key: str, lineno: int):
    if key not in row:
        raise SchemaError(f"line {lineno}: missing key {key!r}")
    return row[key]


def _number(value, key: str, lineno: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"line {lineno}: {key} must be a number, "
                          f"got {value!r}")
    return float(value)


def _number_list(value, key: str, n: int, lineno: int) -> tuple:
    if not isinstance(value, list) or len(value) != n:
        raise SchemaError(f"line {lineno}: {key} must be a list of "
                          f"{n} numbers")
    return tuple(_number(v, key, lineno) for v in value)


def _rows(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON: {exc}") from None
        if not isinstance(row, dict):
            raise SchemaError(f"line {lineno}: expected an object")
        yield lineno, row


# --- detections -------------------------------------------------------------

def parse_detections(text: str) -> list[tuple[int, list[Detection]]]:
    """Parse detection JSON Lines into (frame, detections) groups.

    Rows must carry non-decreasing frame numbers; extra keys are ignored.
    """
    frames: list[tuple[int, list[Detection]]] = []
    last = -1
    for lineno, row in _rows(text):
        frame = _require(row, "frame", lineno)
        if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
            raise SchemaError(f"line {lineno}: frame must be a "
                              f"non-negative integer, got {frame!r}")
        if frame < last:
            raise SchemaError(f"line {lineno}: frame {frame} after "
                              f"frame {last}; frames must be non-decreasing")
        bbox = _number_list(_require(row, "bbox", lineno), "bbox", 4, lineno)
        score = _number(_require(row, "score", lineno), "score", lineno)
        probs = _number_list(_require(row, "probs", lineno), "probs",
                             len(CLASS_NAMES), lineno)
        try:
            det = Detection(frame=frame, bbox=bbox, objectness=score,
                            class_probs=probs)
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
        if frame != last:
            frames.append((frame, []))
            last = frame
        frames[-1][1].append(det)
    return frames


def load_detections(path) -> list[tuple[int, list[Detection]]]:
    return parse_detections(Path(path).read_text(encoding="utf-8"))


def write_detections(path, frames, fps: float | None = None,
                     camera_id: int = 0) -> None:
    """Write (frame, [Detection]) groups as JSON Lines.

    Each row also carries the source camera id and, when fps is known,
    the frame timestamp in seconds.
    """
    lines = []
    for frame, dets in frames:
        for det in dets:
            row = {
                "frame": frame,
                "bbox": list(det.bbox),
                "score": det.objectness,
                "probs": list(det.class_probs),
                "camera": camera_id,
            }
            if fps is not None:
                row["t"] = frame / fps
            lines.append(_dump_row(row))
    Path(path).write_text("".join(line + "\n" for line in lines),
                          encoding="utf-8")


# --- tracks -----------------------------------------------------------------

def track_row(frame: int, track_id: int, class_name: str, bbox, ref,
              bev=None, speed_mph=None, heading_deg=None,
              cuboid=None) -> dict:
    return {
        "frame": frame,
        "id": track_id,
        "class": class_name,
        "bbox": [float(v) for v in bbox],
        "ref": [float(v) for v in ref],
        "bev": None if bev is None else [float(v) for v in bev],
        "speed_mph": None if speed_mph is None else float(speed_mph),
        "heading_deg": None if heading_deg is None else float(heading_deg),
        "cuboid": cuboid,
    }


def write_tracks(path, rows) -> None:
    Path(path).write_text(
        "".join(_dump_row(row) + "\n" for row in rows), encoding="utf-8")


def parse_tracks(text: str) -> list[dict]:
    """Parse track JSON Lines; returns the row dicts after validation."""
    out: list[dict] = []
    last = -1
    for lineno, row in _rows(text):
        frame = _require(row, "frame", lineno)
        if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
            raise SchemaError(f"line {lineno}: frame must be a "
                              f"non-negative integer, got {frame!r}")
        if frame < last:
            raise SchemaError(f"line {lineno}: frame {frame} after "
                              f"frame {last}; frames must be non-decreasing")
        last = frame
        track_id = _require(row, "id", lineno)
        if isinstance(track_id, bool) or not isinstance(track_id, int):
            raise SchemaError(f"line {lineno}: id must be an integer")
        class_name = _require(row, "class", lineno)
        if class_name not in CLASS_NAMES:
            raise SchemaError(f"line {lineno}: unknown class {class_name!r}")
        _number_list(_require(row, "bbox", lineno), "bbox", 4, lineno)
        _number_list(_require(row, "ref", lineno), "ref", 2, lineno)
        for key, width in (("bev", 2), ("speed_mph", None),
                           ("heading_deg", None)):
            value = _require(row, key, lineno)
            if value is None:
                continue
            if width is None:
                _number(value, key, lineno)
            else:
                _number_list(value, key, width, lineno)
        out.append(row)
    return out


def load_tracks(path) -> list[dict]:
    return parse_tracks(Path(path).read_text(encoding="utf-8"))


def tracks_by_frame(rows: list[dict]) -> dict[int, list[dict]]:
    grouped: dict[int, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["frame"], []).append(row)
    return grouped


# --- calibration ------------------------------------------------------------

def homography_to_json(h: Homography) -> list[list[float]]:
    return [[float(v) for v in row] for row in h.matrix]

def homography_from_json(rows, source=PERSPECTIVE, target=BEV) -> Homography:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape != (3, 3):
        raise SchemaError(f"homography must be 3x3, got shape {arr.shape}")
    return Homography(arr, source=source, target=target)


def load_calibration(path) -> dict:
    """Load calibration JSON; returns the dict with 'g' as a Homography."""
    data = load_json(path)
    if not isinstance(data, dict) or "g" not in data:
        raise SchemaError(f"{path}: calibration must be an object "
                          f"with a 'g' matrix")
    data = dict(data)
    data["g"] = homography_from_json(data["g"])
    return data


# --- state events -----------------------------------------------------------

def state_rows(states) -> list[dict]:
    """Flatten a StateSets into one row per (state, track)."""
    rows = []
    for label, ids in (("parking", states.parking),
                       ("speeding", states.speeding),
                       ("collision_risk", states.collision_risk),
                       ("congestion", states.congestion)):
        for track_id in sorted(ids):
            rows.append({"frame": states.frame, "state": label,
                         "id": track_id})
    return rows


def write_states(path, all_rows) -> None:
    Path(path).write_text(
        "".join(_dump_row(row) + "\n" for row in all_rows), encoding="utf-8")


# --- frame stats ------------------------------------------------------------

_STATS_HEADER = "frame,vehicles,pedestrians,avg_speed_mph"


def write_stats(path, stats: list[FrameStats]) -> None:
    lines = [_STATS_HEADER]
    for s in stats:
        avg = "" if s.avg_speed_mph is None else repr(float(s.avg_speed_mph))
        lines.append(f"{s.frame},{s.vehicle_count},{s.pedestrian_count},{avg}")
    Path(path).write_text("".join(line + "\n" for line in lines),
                          encoding="utf-8")


def load_stats(path) -> list[FrameStats]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != _STATS_HEADER:
        raise SchemaError(f"{path}: line 1: expected header "
                          f"{_STATS_HEADER!r}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise SchemaError(f"{path}: line {lineno}: expected 4 fields")
        try:
            avg = None if parts[3] == "" else float(parts[3])
            out.append(FrameStats(frame=int(parts[0]),
                                  vehicle_count=int(parts[1]),
                                  pedestrian_count=int(parts[2]),
                                  avg_speed_mph=avg))
        except ValueError as exc:
            raise SchemaError(f"{path}: line {lineno}: {exc}") from None
    return out


def merge_stats(shards: list[list[FrameStats]]) -> list[FrameStats]:
    """Concatenate disjoint shard stats into frame order."""
    merged = [s for shard in shards for s in shard]
    merged.sort(key=lambda s: s.frame)
    for a, b in zip(merged, merged[1:]):
        if a.frame == b.frame:
            raise SchemaError(f"duplicate stats for frame {a.frame}")
    return merged


# --- heat maps --------------------------------------------------------------

def save_heatmap(path, heat: HeatMap) -> None:
    dump_json({
        "kind": heat.kind,
        "shape": list(heat.shape),
        "events": heat.events,
        "units": heat.units().tolist(),
    }, path)


def load_heatmap(path) -> HeatMap:
    data = load_json(path)
    for key in ("kind", "shape", "events", "units"):
        if not isinstance(data, dict) or key not in data:
            raise SchemaError(f"{path}: heat map needs key {key!r}")
    if data["kind"] not in HEAT_KINDS:
        raise SchemaError(f"{path}: unknown heat kind {data['kind']!r}")
    units = np.asarray(data["units"], dtype=np.int64)
    shape = tuple(data["shape"])
    if units.ndim != 2 or units.shape != shape:
        raise SchemaError(f"{path}: units shape {units.shape} does not "
                          f"match declared {shape}")
    events = data["events"]
    if isinstance(events, bool) or not isinstance(events, int) or events < 0:
        raise SchemaError(f"{path}: events must be a non-negative integer")
    return HeatMap.from_units(units, events, data["kind"])


# --- road boundary ----------------------------------------------------------

def save_boundary(path, boundary) -> None:
    dump_json({"chains": [[[int(x), int(y)] for x, y in chain]
                          for chain in boundary.chains]}, path)


def load_boundary(path):
    from .roadmodel import BoundarySet
    data = load_json(path)
    if not isinstance(data, dict) or "chains" not in data:
        raise SchemaError(f"{path}: boundary needs key 'chains'")
    chains = []
    for chain in data["chains"]:
        chains.append(tuple((int(x), int(y)) for x, y in chain))
    return BoundarySet(chains=tuple(chains))
