"""File formats: map / detections (JSON), trajectories (CSV), flat YAML config,
per-frame record logs (JSON lines) and metric tables.

Data files store floats with Python's shortest round-trip repr, so reading a
file back yields bit-identical arrays. Reports (records, metrics) use 9
significant digits to keep golden files stable.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from pathlib import Path

import numpy as np
import yaml

from .association import DcSacConfig, SearchArea
from .geometry import FrameDetections, Polyline, Trajectory
from .graph import SolverConfig
from .pipeline import FrameRecord, PipelineConfig
from .sim import NoiseModel

log = logging.getLogger(__name__)

MAP_FORMAT = "georef-map"
DETECTIONS_FORMAT = "georef-detections"
VERSION = 1
TRAJECTORY_HEADER = ("index", "x", "y", "theta")


class DataError(ValueError):
    """Malformed or inconsistent input file; the message carries the location."""

    def __init__(self, path, message: str, line: int | None = None, column: int | None = None):
        where = str(path)
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")
        self.path, self.line, self.column = path, line, column


def fmt(v) -> str:
    """Nine significant digits; 'nan' / 'inf' spelled out."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def _round9(v):
    """JSON-safe 9-significant-digit value (None for non-finite)."""
    v = float(v)
    return float(f"{v:.9g}") if math.isfinite(v) else None


# ---------------------------------------------------------------------------
# JSON documents


def _load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(path, f"cannot read file ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(path, exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict):
        raise DataError(path, "top level must be an object", 1, 1)
    return doc


def _check_header(path, doc: dict, kind: str) -> None:
    if doc.get("format") != kind:
        raise DataError(path, f"expected format {kind!r}, got {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise DataError(path, f"unsupported version {doc.get('version')!r} (expected {VERSION})")


def _polyline(path, raw, where: str) -> Polyline:
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DataError(path, f"{where}: points must be [x, y] number pairs") from exc
    if arr.ndim != 2 or arr.shape[1:] != (2,) or any(isinstance(v, bool) for p in raw for v in p):
        raise DataError(path, f"{where}: points must be [x, y] number pairs")
    try:
        return Polyline(arr)
    except ValueError as exc:
        raise DataError(path, f"{where}: {exc}") from exc


def _dump(doc: dict, path) -> None:
    # json writes floats with repr, which round-trips exactly
    Path(path).write_text(json.dumps(doc, indent=None, separators=(",", ":"), allow_nan=False) + "\n")


def _points(pl: Polyline) -> list:
    return [[float(x), float(y)] for x, y in pl.points]


def write_map(path, polylines, name: str = "", crs: str = "local planar frame, meters") -> None:
    doc = {"format": MAP_FORMAT, "version": VERSION, "name": name, "crs": crs,
           "polylines": [_points(pl) for pl in polylines]}
    _dump(doc, path)


def read_map(path) -> tuple[list[Polyline], dict]:
    """Polylines and metadata (name, crs) of a map file."""
    doc = _load_json(path)
    _check_header(path, doc, MAP_FORMAT)
    raw = doc.get("polylines")
    if not isinstance(raw, list) or not raw:
        raise DataError(path, "'polylines' must be a non-empty list")
    polys = [_polyline(path, p, f"polylines[{k}]") for k, p in enumerate(raw)]
    return polys, {"name": doc.get("name", ""), "crs": doc.get("crs", "")}


def write_detections(path, frames: list[FrameDetections]) -> None:
    doc = {"format": DETECTIONS_FORMAT, "version": VERSION,
           "frames": [{"frame": f.frame_index, "polylines": [_points(pl) for pl in f.polylines]}
                      for f in frames]}
    _dump(doc, path)


def read_detections(path) -> list[FrameDetections]:
    doc = _load_json(path)
    _check_header(path, doc, DETECTIONS_FORMAT)
    raw = doc.get("frames")
    if not isinstance(raw, list):
        raise DataError(path, "'frames' must be a list")
    out = []
    for k, fr in enumerate(raw):
        if not isinstance(fr, dict) or not isinstance(fr.get("polylines"), list):
            raise DataError(path, f"frames[{k}]: expected an object with a 'polylines' list")
        idx = fr.get("frame")
        if not isinstance(idx, int) or isinstance(idx, bool) or idx != k:
            raise DataError(path, f"frames[{k}]: frame index {idx!r} out of sequence (expected {k})")
        polys = tuple(_polyline(path, p, f"frames[{k}].polylines[{j}]")
                      for j, p in enumerate(fr["polylines"]))
        out.append(FrameDetections(k, polys))
    return out


# ---------------------------------------------------------------------------
# Trajectories


def write_trajectory(path, traj: Trajectory) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for i, (x, y, th) in enumerate(traj.poses):
        w.writerow([i, repr(float(x)), repr(float(y)), repr(float(th))])
    Path(path).write_text(buf.getvalue())


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(path, f"cannot read file ({exc.strerror})") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != TRAJECTORY_HEADER:
        raise DataError(path, f"header must be {','.join(TRAJECTORY_HEADER)}", 1, 1)
    poses = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataError(path, f"expected 4 fields, got {len(row)}", ln, 1)
        try:
            idx = int(row[0])
        except ValueError:
            raise DataError(path, f"bad index {row[0]!r}", ln, 1) from None
        if idx != len(poses):
            raise DataError(path, f"index {idx} out of sequence (expected {len(poses)})", ln, 1)
        vals = []
        col = len(row[0]) + 2
        for cell in row[1:]:
            try:
                v = float(cell)
            except ValueError:
                raise DataError(path, f"bad number {cell!r}", ln, col) from None
            if not math.isfinite(v):
                raise DataError(path, f"non-finite value {cell!r}", ln, col)
            vals.append(v)
            col += len(cell) + 1
        poses.append(vals)
    if not poses:
        raise DataError(path, "trajectory has no rows")
    try:
        return Trajectory(np.array(poses))
    except ValueError as exc:
        raise DataError(path, str(exc)) from exc


# ---------------------------------------------------------------------------
# Configuration: one flat mapping over PipelineConfig and its nested configs

_NESTED = {"dcsac": DcSacConfig, "solver": SolverConfig}
_TUPLE_KEYS = {"cov_floor": 3, "odometry_sigma": 3, "base_area": 3}


def config_keys() -> dict:
    """Flat key -> default value, in documentation order."""
    out = {}
    defaults = PipelineConfig()
    for f in dataclasses.fields(PipelineConfig):
        if f.name in _NESTED:
            sub = getattr(defaults, f.name)
            for g in dataclasses.fields(_NESTED[f.name]):
                v = getattr(sub, g.name)
                out[g.name] = list(v.as_tuple()) if isinstance(v, SearchArea) else v
        else:
            v = getattr(defaults, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def _coerce(key: str, value, default):
    if key in _TUPLE_KEYS:
        if not isinstance(value, list) or len(value) != _TUPLE_KEYS[key]:
            raise ValueError(f"expected a list of {_TUPLE_KEYS[key]} numbers")
        return tuple(_coerce(key + "[]", v, 0.0) for v in value)
    if default is None:  # optional float
        return None if value is None else _coerce(key, value, 0.0)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError("expected true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    raise ValueError(f"unsupported key type {type(default).__name__}")


def build_config(values: dict | None = None, source="<config>") -> PipelineConfig:
    """PipelineConfig from a flat mapping; missing keys take (logged) defaults."""
    values = dict(values or {})
    known = config_keys()
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise DataError(source, f"unknown config key(s): {', '.join(unknown)}")
    top, nested = {}, {name: {} for name in _NESTED}
    owner = {g.name: name for name, cls in _NESTED.items() for g in dataclasses.fields(cls)}
    for key, default in known.items():
        if key not in values:
            log.info("config key %r not set, using default %r", key, default)
            continue
        try:
            v = _coerce(key, values[key], default)
        except ValueError as exc:
            raise DataError(source, f"key {key!r}: {exc}") from None
        if key == "base_area":
            v = SearchArea(*v)
        (nested[owner[key]] if key in owner else top)[key] = v
    try:
        return PipelineConfig(dcsac=DcSacConfig(**nested["dcsac"]),
                              solver=SolverConfig(**nested["solver"]), **top)
    except (TypeError, ValueError) as exc:
        raise DataError(source, str(exc)) from None


def read_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(path, f"cannot read file ({exc.strerror})") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        values = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise DataError(path, str(exc.problem or exc), mark.line + 1 if mark else None,
                        mark.column + 1 if mark else None) from None
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise DataError(path, "config must be a mapping of key: value", 1, 1)
    known = config_keys()
    for key_node, _ in getattr(node, "value", []):
        if key_node.value not in known:
            m = key_node.start_mark
            raise DataError(path, f"unknown config key {key_node.value!r}", m.line + 1, m.column + 1)
    return build_config(values, path)


def write_config(path, cfg: PipelineConfig) -> None:
    flat = {}
    for key in config_keys():
        if key in {g.name for g in dataclasses.fields(DcSacConfig)}:
            v = getattr(cfg.dcsac, key)
        elif key in {g.name for g in dataclasses.fields(SolverConfig)}:
            v = getattr(cfg.solver, key)
        else:
            v = getattr(cfg, key)
        if isinstance(v, SearchArea):
            v = list(v.as_tuple())
        flat[key] = list(v) if isinstance(v, tuple) else v
    Path(path).write_text(yaml.safe_dump(flat, sort_keys=False))


def read_noise(path) -> NoiseModel:
    path = Path(path)
    try:
        values = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise DataError(path, f"cannot read file ({exc.strerror})") from exc
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise DataError(path, str(exc.problem or exc), mark.line + 1 if mark else None,
                        mark.column + 1 if mark else None) from None
    if not isinstance(values, dict):
        raise DataError(path, "noise file must be a mapping")
    names = {f.name for f in dataclasses.fields(NoiseModel)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise DataError(path, f"unknown noise key(s): {', '.join(unknown)}")
    try:
        return NoiseModel(**values)
    except (TypeError, ValueError) as exc:
        raise DataError(path, str(exc)) from None


def read_layout(path) -> dict:
    doc = _load_json(path)
    if not isinstance(doc.get("roads"), list) or not doc["roads"]:
        raise DataError(path, "layout needs a non-empty 'roads' list")
    return doc


# ---------------------------------------------------------------------------
# Reports


def record_to_dict(rec: FrameRecord) -> dict:
    a = rec.association
    return {
        "frame": rec.frame,
        "entropy": _round9(rec.entropy),
        "tuned_area": [_round9(v) for v in rec.tuned.as_tuple()],
        "status": a.status,
        "inliers": a.inlier_count,
        "mean_inlier_error": _round9(a.mean_inlier_error),
        "hypotheses": a.n_generated,
        "admissible": a.n_admissible,
        "delta": [_round9(v) for v in a.delta_t_star.as_array()],
        "sigma_diag": None if rec.sigma is None else [_round9(v) for v in np.diag(rec.sigma)],
        "pre_estimate": [_round9(v) for v in rec.pre_estimate.as_array()],
        "pose": None if rec.pose is None else [_round9(v) for v in rec.pose.as_array()],
    }


def write_records(path, records: list[FrameRecord]) -> None:
    lines = [json.dumps(record_to_dict(r), separators=(",", ":")) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


METRIC_COLUMNS = ("mode", "ate_m", "rpe_trans_m", "rpe_rot_deg", "status")


def write_metrics_table(path, rows: list[dict]) -> None:
    """Rows of mode, ATE, RPE translation / rotation RMSE and a status cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([r["mode"]] + [fmt(r[k]) if r.get(k) is not None else "" for k in METRIC_COLUMNS[1:4]]
                   + [r.get("status", "ok")])
    Path(path).write_text(buf.getvalue())


def write_trace(path, entropy, columns: dict) -> None:
    """Per-frame table: frame, entropy and any named per-frame series."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame", "entropy", *columns])
    series = list(columns.values())
    for i, s in enumerate(entropy):
        w.writerow([i, fmt(s), *(fmt(c[i]) for c in series)])
    Path(path).write_text(buf.getvalue())
