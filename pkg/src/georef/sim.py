"""Synthetic lane-marking worlds, drives, priors and detections.

A layout is a plain dict (JSON/YAML friendly)::

    {
      "roads": [
        {"id": "main", "start": [0, 0, 0],
         "segments": [{"straight": 200}, {"arc": {"radius": 50, "angle": 1.5708}}],
         "lanes": 2, "lane_width": 3.5},
        ...
      ],
      "route": {"road": "main", "lane": 0},
      "dash": [2.0, 4.0],           # dash length, gap length (m)
      "crosswalks": true,           # zebra stripes on both sides of every crossing
      "frame_spacing": 1.0
    }

Lane 0 is the rightmost lane in the road direction; inner lane boundaries are
dashed, road edges solid.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from shapely.geometry import LineString, Point

from .geometry import (
    FrameDetections,
    LandmarkMap,
    Polyline,
    Pose2,
    Trajectory,
    between_arrays,
    compose,
    compose_arrays,
    inverse_transform_points,
    resample_polyline,
)

ARC_STEP = 0.5
CROSSWALK = dict(stripe_length=3.0, stripe_width=0.5, pitch=1.0, margin=1.0)


@dataclass(frozen=True)
class NoiseModel:
    prior_bias: tuple = (0.0, 3.0, 0.0)  # (m, m, rad) in the frame of the first pose
    prior_drift_rate: tuple = (0.01, 0.0002)  # (m/sqrt(m), rad/sqrt(m))
    detection_noise_sigma: float = 0.05
    detection_dropout: float = 0.0
    sensor_range: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "prior_bias", tuple(float(v) for v in self.prior_bias))
        object.__setattr__(self, "prior_drift_rate", tuple(float(v) for v in self.prior_drift_rate))
        if min(self.prior_drift_rate) < 0 or self.detection_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0 <= self.detection_dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.sensor_range > 0:
            raise ValueError("sensor_range must be positive")

    @classmethod
    def noiseless(cls, **kw) -> "NoiseModel":
        base = dict(prior_bias=(0.0, 0.0, 0.0), prior_drift_rate=(0.0, 0.0),
                    detection_noise_sigma=0.0, detection_dropout=0.0)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(eq=False)
class Scenario:
    map: LandmarkMap
    ground_truth: Trajectory
    prior: Trajectory
    detections: list
    rng_seed: int
    layout: dict = field(default_factory=dict)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __len__(self) -> int:
        return len(self.ground_truth)


# ---------------------------------------------------------------------------
# Road geometry


class Road:
    def __init__(self, spec: dict):
        self.id = str(spec.get("id", "road"))
        self.lanes = int(spec.get("lanes", 2))
        self.lane_width = float(spec.get("lane_width", 3.5))
        if self.lanes < 1 or self.lane_width <= 0:
            raise ValueError(f"road {self.id}: lanes >= 1 and lane_width > 0 required")
        x, y, h = (float(v) for v in spec.get("start", (0.0, 0.0, 0.0)))
        self.pieces = []  # (s0, length, curvature, x0, y0, h0)
        s = 0.0
        for seg in spec.get("segments", []):
            if "straight" in seg:
                length, kappa = float(seg["straight"]), 0.0
            elif "arc" in seg:
                arc = seg["arc"]
                radius, angle = float(arc["radius"]), float(arc["angle"])
                if radius <= 0:
                    raise ValueError(f"road {self.id}: arc radius must be positive")
                length, kappa = radius * abs(angle), math.copysign(1.0 / radius, angle)
            else:
                raise ValueError(f"road {self.id}: unknown segment {seg!r}")
            if length <= 0:
                raise ValueError(f"road {self.id}: segment length must be positive")
            self.pieces.append((s, length, kappa, x, y, h))
            x, y, h = _advance(x, y, h, kappa, length)
            s += length
        if not self.pieces:
            raise ValueError(f"road {self.id} has no segments")
        self.length = s

    @property
    def width(self) -> float:
        return self.lanes * self.lane_width

    def pose_at(self, s) -> np.ndarray:
        """(x, y, heading) of the centerline at arc lengths ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros((len(s), 3))
        starts = np.array([p[0] for p in self.pieces])
        k = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(self.pieces) - 1)
        for idx in np.unique(k):
            s0, _, kappa, x0, y0, h0 = self.pieces[idx]
            m = k == idx
            u = s[m] - s0
            x, y, h = _advance(x0, y0, h0, kappa, u)
            out[m] = np.column_stack([x, y, h])
        return out

    def sample_s(self, s0: float, s1: float) -> np.ndarray:
        """Arc lengths covering [s0, s1]: breakpoints plus dense samples on arcs."""
        pts = [s0, s1]
        for start, length, kappa, *_ in self.pieces:
            a, b = max(s0, start), min(s1, start + length)
            if b <= a:
                continue
            pts.extend([a, b])
            if kappa != 0:
                n = max(int(math.ceil((b - a) / ARC_STEP)), 1)
                pts.extend(np.linspace(a, b, n + 1))
        return np.unique(np.clip(pts, s0, s1))

    def offset_points(self, s: np.ndarray, offset: float) -> np.ndarray:
        p = self.pose_at(s)
        return p[:, :2] + offset * np.column_stack([-np.sin(p[:, 2]), np.cos(p[:, 2])])

    def boundary_offsets(self) -> list[tuple[float, bool]]:
        """Lateral offsets of every marking line and whether it is dashed."""
        half = self.width / 2
        return [(-half + k * self.lane_width, 0 < k < self.lanes) for k in range(self.lanes + 1)]

    def lane_offset(self, lane: int) -> float:
        if not 0 <= lane < self.lanes:
            raise ValueError(f"road {self.id} has no lane {lane}")
        return -self.width / 2 + (lane + 0.5) * self.lane_width

    def centerline(self) -> LineString:
        return LineString(self.offset_points(self.sample_s(0.0, self.length), 0.0))


def _advance(x, y, h, kappa, u):
    u = np.asarray(u, dtype=float)
    if kappa == 0:
        return x + u * np.cos(h), y + u * np.sin(h), h + 0 * u
    h1 = h + kappa * u
    return (x + (np.sin(h1) - math.sin(h)) / kappa,
            y - (np.cos(h1) - math.cos(h)) / kappa, h1)


def _intervals_minus(lo: float, hi: float, cuts: list[tuple[float, float]]):
    out = [(lo, hi)]
    for a, b in cuts:
        nxt = []
        for u, v in out:
            if b <= u or a >= v:
                nxt.append((u, v))
                continue
            if a > u:
                nxt.append((u, a))
            if b < v:
                nxt.append((b, v))
        out = nxt
    return [(u, v) for u, v in out if v - u > 1e-6]


def _crossings(roads: list[Road]):
    """(road index, arc length, other road index) for each centerline crossing."""
    lines = [r.centerline() for r in roads]
    out = []
    for a in range(len(roads)):
        for b in range(a + 1, len(roads)):
            inter = lines[a].intersection(lines[b])
            if inter.is_empty:
                continue
            geoms = getattr(inter, "geoms", [inter])
            for g in geoms:
                if g.geom_type != "Point":
                    continue
                out.append((a, lines[a].project(g), b))
                out.append((b, lines[b].project(g), a))
    return out


def build_map_polylines(layout: dict) -> list[Polyline]:
    roads = [Road(r) for r in layout.get("roads", [])]
    if not roads:
        raise ValueError("layout has no roads")
    dash, gap = (float(v) for v in layout.get("dash", (2.0, 4.0)))
    cw = dict(CROSSWALK, **(layout.get("crosswalk_style") or {}))
    crossings = _crossings(roads)
    polylines = []
    for ri, road in enumerate(roads):
        cuts, walks = [], []
        for rj, s_c, other in crossings:
            if rj != ri:
                continue
            half = roads[other].width / 2
            cuts.append((s_c - half, s_c + half))
            if layout.get("crosswalks", True):
                d = half + cw["margin"] + cw["stripe_length"] / 2
                walks.extend([s_c - d, s_c + d])
        for off, dashed in road.boundary_offsets():
            for lo, hi in _intervals_minus(0.0, road.length, cuts):
                if dashed:
                    k0 = math.floor(lo / (dash + gap))
                    pieces = []
                    k = k0
                    while k * (dash + gap) < hi:
                        a, b = max(lo, k * (dash + gap)), min(hi, k * (dash + gap) + dash)
                        if b - a > 0.05:
                            pieces.append((a, b))
                        k += 1
                else:
                    pieces = [(lo, hi)]
                for a, b in pieces:
                    pl = Polyline.cleaned(road.offset_points(road.sample_s(a, b), off))
                    if pl is not None:
                        polylines.append(pl)
        for s_mid in walks:
            if not 0 <= s_mid <= road.length:
                continue
            polylines.extend(_crosswalk(road, s_mid, cw))
    return polylines


def _crosswalk(road: Road, s_mid: float, cw: dict) -> list[Polyline]:
    x, y, h = road.pose_at(s_mid)[0]
    frame = Pose2(x, y, h)
    half_l, half_w = cw["stripe_length"] / 2, cw["stripe_width"] / 2
    n = max(int(math.floor((road.width - cw["stripe_width"]) / cw["pitch"])) + 1, 1)
    span = (n - 1) * cw["pitch"]
    out = []
    for k in range(n):
        c = -span / 2 + k * cw["pitch"]
        rect = np.array([[-half_l, c - half_w], [half_l, c - half_w], [half_l, c + half_w],
                         [-half_l, c + half_w], [-half_l, c - half_w]])
        out.append(Polyline(rect @ frame.rotation().T + frame.translation))
    return out


def route_poses(layout: dict) -> np.ndarray:
    roads = {str(r.get("id", "road")): Road(r) for r in layout.get("roads", [])}
    route = layout.get("route") or {}
    rid = str(route.get("road", next(iter(roads), "")))
    if rid not in roads:
        raise ValueError(f"route refers to unknown road {rid!r}")
    road = roads[rid]
    spacing = float(layout.get("frame_spacing", 1.0))
    s0 = float(route.get("from", 0.0))
    s1 = float(route.get("to", road.length))
    s = np.arange(s0, s1 + 1e-9, spacing)
    p = road.pose_at(s)
    off = road.lane_offset(int(route.get("lane", 0)))
    p[:, :2] += off * np.column_stack([-np.sin(p[:, 2]), np.cos(p[:, 2])])
    return p


# ---------------------------------------------------------------------------
# Scenario generation


def make_prior(truth: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Ground truth moved rigidly by the bias (about the first pose) plus drifting increments."""
    first = Pose2.from_array(truth[0])
    biased0 = compose(first, Pose2(*noise.prior_bias))
    rel = between_arrays(truth[:-1], truth[1:])
    ds = np.linalg.norm(rel[:, :2], axis=1)
    sig_t, sig_r = noise.prior_drift_rate
    eps = rng.standard_normal((len(rel), 3))
    rel = rel + eps * np.column_stack([sig_t * np.sqrt(ds), sig_t * np.sqrt(ds), sig_r * np.sqrt(ds)])
    out = np.zeros_like(truth)
    out[0] = biased0.as_array()
    for k in range(len(rel)):
        out[k + 1] = compose_arrays(out[k], rel[k])
    return out


def simulate_detections(polylines: list[Polyline], truth: np.ndarray, noise: NoiseModel,
                        rng: np.random.Generator, step: float = 1.0) -> list[FrameDetections]:
    lo = np.array([pl.points.min(axis=0) for pl in polylines])
    hi = np.array([pl.points.max(axis=0) for pl in polylines])
    lines = [LineString(pl.points) for pl in polylines]
    rng_ = noise.sensor_range
    out = []
    for i, pose_arr in enumerate(truth):
        pose = Pose2.from_array(pose_arr)
        c = pose.translation
        cand = np.flatnonzero(np.all(lo <= c + rng_, axis=1) & np.all(hi >= c - rng_, axis=1))
        disk = Point(c).buffer(rng_, 64)
        dets = []
        for k in cand:
            clipped = lines[k].intersection(disk)
            if clipped.is_empty:
                continue
            for g in getattr(clipped, "geoms", [clipped]):
                if g.geom_type != "LineString" or g.length <= 1e-6:
                    continue
                pl = Polyline.cleaned(inverse_transform_points(pose, np.asarray(g.coords)))
                if pl is None:
                    continue
                pts = resample_polyline(pl, step).points
                if noise.detection_noise_sigma > 0:
                    pts = pts + rng.normal(0.0, noise.detection_noise_sigma, pts.shape)
                if noise.detection_dropout > 0 and rng.random() < noise.detection_dropout:
                    continue
                pts = pts[np.linalg.norm(pts, axis=1) <= rng_]
                pl = Polyline.cleaned(pts)
                if pl is not None:
                    dets.append(pl)
        out.append(FrameDetections(i, tuple(dets)))
    return out


def generate_scenario(layout: dict, noise: NoiseModel = NoiseModel(), seed: int = 0,
                      map_step: float = 1.0, detection_step: float = 1.0) -> Scenario:
    layout = copy.deepcopy(layout)
    polylines = build_map_polylines(layout)
    truth = route_poses(layout)
    if len(truth) < 2:
        raise ValueError("route is shorter than two frames")
    prior_rng, det_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    prior = make_prior(truth, noise, prior_rng)
    dets = simulate_detections(polylines, truth, noise, det_rng, detection_step)
    return Scenario(LandmarkMap(polylines, step=map_step), Trajectory(truth), Trajectory(prior),
                    dets, seed, layout, noise)


# ---------------------------------------------------------------------------
# Reference layouts


def straight_layout(length: float = 500.0, lanes: int = 2, dash=(2.0, 4.0)) -> dict:
    return {
        "name": "straight",
        "roads": [{"id": "main", "start": [0.0, 0.0, 0.0], "segments": [{"straight": length}],
                   "lanes": lanes, "lane_width": 3.5}],
        "route": {"road": "main", "lane": 0},
        "dash": list(dash),
        "frame_spacing": 1.0,
    }


def _cross_street(sid: str, at: np.ndarray, heading: float, length: float = 80.0) -> dict:
    h = heading + math.pi / 2
    start = at - 0.5 * length * np.array([math.cos(h), math.sin(h)])
    return {"id": sid, "start": [float(start[0]), float(start[1]), h],
            "segments": [{"straight": length}], "lanes": 2, "lane_width": 3.5}


def urban_block_layout(length: float = 1000.0) -> dict:
    """One long road crossed at its middle by a perpendicular road."""
    layout = straight_layout(length)
    layout["name"] = "urban_block"
    layout["roads"].append(_cross_street("cross", np.array([length / 2, 0.0]), 0.0, 200.0))
    layout["crosswalks"] = True
    return layout


def mixed_layout(urban: float = 180.0, rural: float = 150.0, block: float = 60.0,
                 radius: float = 50.0) -> dict:
    """Urban stretch with cross streets, a bend, a straight rural stretch, a bend, urban again."""
    segs = [{"straight": urban}, {"arc": {"radius": radius, "angle": math.pi / 2}},
            {"straight": rural}, {"arc": {"radius": radius, "angle": -math.pi / 2}},
            {"straight": urban}]
    main = {"id": "main", "start": [0.0, 0.0, 0.0], "segments": segs, "lanes": 2, "lane_width": 3.5}
    road = Road(main)
    roads = [main]
    k = 0
    first = 15.0
    for piece in (road.pieces[0], road.pieces[4]):
        s0, length = piece[0], piece[1]
        s = s0 + first
        while s < s0 + length - 10.0:
            x, y, h = road.pose_at(s)[0]
            roads.append(_cross_street(f"cross{k}", np.array([x, y]), h))
            k += 1
            s += block
    return {"name": "mixed", "roads": roads, "route": {"road": "main", "lane": 0},
            "dash": [2.0, 4.0], "crosswalks": True, "frame_spacing": 1.0}
