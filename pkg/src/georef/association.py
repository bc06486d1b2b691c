"""Distance-compatible sample consensus (DC-SAC) association with entropy self-tuning.

Hypotheses are SE(2) poses of the sensor in the world, fitted to two sampled
detection points and two distance-compatible map points. The implicit
nearest-neighbour hypothesis (the pre-estimate itself) always competes, so a
zero search area degenerates exactly to NN association.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import pick_partner, radius_csr
from .geometry import (
    IDENTITY,
    FrameDetections,
    LandmarkMap,
    Pose2,
    between,
    between_arrays,
    compose,
    compose_arrays,
    to_dalmr,
    transform_points,
    wrap_angle,
)


@dataclass(frozen=True)
class SearchArea:
    x_max: float = 0.0
    y_max: float = 0.0
    theta_max: float = 0.0

    def __post_init__(self):
        for name in ("x_max", "y_max", "theta_max"):
            v = float(getattr(self, name))
            if not v >= 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def is_zero(self) -> bool:
        return self.x_max == 0 and self.y_max == 0 and self.theta_max == 0

    def scaled(self, factor: float) -> "SearchArea":
        return SearchArea(self.x_max * factor, self.y_max * factor, self.theta_max * factor)

    def contains(self, deltas: np.ndarray) -> np.ndarray:
        d = np.asarray(deltas, dtype=float).reshape(-1, 3)
        return ((np.abs(d[:, 0]) <= self.x_max) & (np.abs(d[:, 1]) <= self.y_max)
                & (np.abs(d[:, 2]) <= self.theta_max))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x_max, self.y_max, self.theta_max)


@dataclass(frozen=True)
class DcSacConfig:
    base_area: SearchArea = SearchArea(8.0, 5.0, 0.2)
    s_min: float = -20.0
    n_hypotheses: int = 2000
    distance_compat_tol: float = 0.3
    inlier_threshold: float = 0.5
    min_pair_separation: float = 2.0
    map_query_radius: float = 60.0
    rng_seed: int = 0
    max_attempts: int = 20
    use_dalmr_z: bool = False
    refine: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_hypotheses < 1:
            raise ValueError("n_hypotheses must be >= 1")
        if not self.s_min < 0:
            raise ValueError("s_min must be negative")
        for name in ("distance_compat_tol", "inlier_threshold", "min_pair_separation",
                     "map_query_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_attempts < 1 or self.workers < 1:
            raise ValueError("max_attempts and workers must be >= 1")


@dataclass(frozen=True, eq=False)
class AssociationResult:
    detection_points: np.ndarray  # (M, 2) sensor frame
    landmark_points: np.ndarray  # (M, 2) world frame
    delta_t_star: Pose2
    inlier_count: int
    mean_inlier_error: float
    tuned_area: SearchArea
    entropy: float
    status: str = "ok"  # ok | nn | fallback | empty
    n_generated: int = 0
    n_admissible: int = 0
    pose: Pose2 = field(default=IDENTITY)  # pre-estimate composed with delta_t_star

    @property
    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.detection_points, self.landmark_points))

    @property
    def succeeded(self) -> bool:
        return len(self.detection_points) > 0


def tune_area(base: SearchArea, s: float, s_min: float) -> SearchArea:
    """Scale the search area by min(1, |s / s_min|)."""
    if not s_min < 0:
        raise ValueError("s_min must be negative")
    if s > 0:
        raise ValueError("entropy must be <= 0")
    if s <= s_min:
        return base
    return base.scaled(abs(s / s_min))


def procrustes_2pt(d1, d2, l1, l2, min_separation: float = 0.0) -> Pose2 | None:
    """SE(2) pose T minimising |T(d1)-l1|^2 + |T(d2)-l2|^2; None for degenerate pairs."""
    d1, d2, l1, l2 = (np.asarray(v, dtype=float) for v in (d1, d2, l1, l2))
    sep = max(min_separation, 1e-9)
    if np.linalg.norm(d2 - d1) <= sep or np.linalg.norm(l2 - l1) <= sep:
        return None
    pose = _procrustes_pairs(d1[None], d2[None], l1[None], l2[None])[0]
    return Pose2.from_array(pose)


def _procrustes_pairs(d1, d2, l1, l2) -> np.ndarray:
    vd = d2 - d1
    vl = l2 - l1
    theta = np.arctan2(vl[:, 1], vl[:, 0]) - np.arctan2(vd[:, 1], vd[:, 0])
    c, s = np.cos(theta), np.sin(theta)
    md = 0.5 * (d1 + d2)
    ml = 0.5 * (l1 + l2)
    tx = ml[:, 0] - (c * md[:, 0] - s * md[:, 1])
    ty = ml[:, 1] - (s * md[:, 0] + c * md[:, 1])
    return np.column_stack([tx, ty, wrap_angle(theta)])


def procrustes_fit(d: np.ndarray, l: np.ndarray) -> Pose2:
    """Least-squares SE(2) pose mapping sensor points ``d`` onto world points ``l``."""
    d = np.asarray(d, dtype=float)
    l = np.asarray(l, dtype=float)
    md, ml = d.mean(axis=0), l.mean(axis=0)
    dc, lc = d - md, l - ml
    theta = math.atan2(float(np.sum(dc[:, 0] * lc[:, 1] - dc[:, 1] * lc[:, 0])),
                       float(np.sum(dc * lc)))
    c, s = math.cos(theta), math.sin(theta)
    t = ml - np.array([c * md[0] - s * md[1], s * md[0] + c * md[1]])
    return Pose2(t[0], t[1], theta)


def sample_hypotheses(points: np.ndarray, lmap: LandmarkMap, pre: Pose2, cfg: DcSacConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """Draw up to ``n_hypotheses`` world poses of the sensor from distance-compatible pairs.

    Map candidates for a detection point are restricted to the region the
    base search area can reach from the pre-estimate, so the drawn sequence
    never depends on the tuned area.
    """
    n, att = cfg.n_hypotheses, cfg.max_attempts
    npts = len(points)
    # all random draws happen up front so every hypothesis owns a fixed slice
    i1 = rng.integers(0, max(npts, 1), size=(n, att))
    i2 = rng.integers(0, max(npts, 1), size=(n, att))
    u1 = rng.random(n)
    u2 = rng.random(n)
    if npts < 2:
        return np.zeros((0, 3))

    base = cfg.base_area
    world = transform_points(pre, points)
    reach = (math.hypot(base.x_max, base.y_max)
             + np.linalg.norm(points, axis=1) * min(base.theta_max, math.pi)
             + lmap.step + cfg.inlier_threshold)
    near = np.asarray(lmap.query_radius(pre.translation, cfg.map_query_radius), dtype=np.int64)
    flat, offsets, lens = radius_csr(world, reach, lmap.points[near])
    flat = near[flat]

    sep = np.linalg.norm(points[i1] - points[i2], axis=2)
    ok = sep > cfg.min_pair_separation
    first = np.argmax(ok, axis=1)
    rows = np.arange(n)
    valid = ok[rows, first]
    a = i1[rows, first]
    b = i2[rows, first]
    r = sep[rows, first]
    valid &= (lens[a] > 0) & (lens[b] > 0)

    la = np.where(valid, flat[np.minimum(offsets[a] + (u1 * lens[a]).astype(np.int64), max(len(flat) - 1, 0))]
                  if len(flat) else -1, -1)
    # the map pair must turn the detection pair by no more than the base area allows
    dv = world[b] - world[a]
    heading = np.arctan2(dv[:, 1], dv[:, 0])
    lb = pick_partner(flat, offsets, lens, lmap.points, la, b, r, heading, cfg.distance_compat_tol,
                      min(base.theta_max, math.pi), cfg.min_pair_separation, u2)
    valid &= lb >= 0
    p1 = lmap.points[la]

    sel = np.flatnonzero(valid)
    return _procrustes_pairs(points[a[sel]], points[b[sel]], p1[sel], lmap.points[lb[sel]])


def _score(index, points, z, poses, cfg: DcSacConfig):
    if len(poses) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    thr, use_z = cfg.inlier_threshold, cfg.use_dalmr_z
    if cfg.workers <= 1 or len(poses) < 2 * cfg.workers:
        return index.score(points, poses, thr, z, use_z)
    chunks = np.array_split(poses, cfg.workers)
    with ThreadPoolExecutor(cfg.workers) as pool:
        parts = list(pool.map(lambda c: index.score(points, c, thr, z, use_z), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _refine(index, points, z, pose: Pose2, cfg: DcSacConfig, iterations: int = 100) -> Pose2:
    """Iterate nearest-foot correspondences and full Procrustes until the pose settles."""
    for _ in range(iterations):
        dist, _, foot = index.nearest(transform_points(pose, points), z, cfg.use_dalmr_z)
        m = dist <= cfg.inlier_threshold
        if m.sum() < 2:
            break
        new = procrustes_fit(points[m], foot[m])
        change = max(abs(new.x - pose.x), abs(new.y - pose.y), abs(wrap_angle(new.theta - pose.theta)))
        pose = new
        if change < 1e-12:
            break
    return pose


def _detection_arrays(detections: FrameDetections, weight: float):
    if not detections.polylines:
        return np.zeros((0, 2)), np.zeros(0)
    pts = np.vstack([pl.points for pl in detections.polylines])
    z = np.concatenate([to_dalmr(pl, weight).z for pl in detections.polylines])
    return pts, z


def associate(detections: FrameDetections, lmap: LandmarkMap, pre: Pose2, cfg: DcSacConfig,
              tuned: SearchArea, entropy: float = 0.0) -> AssociationResult:
    points, z = _detection_arrays(detections, lmap.weight)
    if len(points) == 0:
        return AssociationResult(np.zeros((0, 2)), np.zeros((0, 2)), IDENTITY, 0, math.inf,
                                 tuned, entropy, status="empty", pose=pre)
    index = lmap.segment_index(cfg.inlier_threshold)
    pre_arr = pre.as_array()

    counts, errs = index.score(points, pre_arr[None], cfg.inlier_threshold, z, cfg.use_dalmr_z)
    deltas = np.zeros((1, 3))
    n_generated = n_admissible = 0
    if not tuned.is_zero:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, detections.frame_index]))
        hyps = sample_hypotheses(points, lmap, pre, cfg, rng)
        n_generated = len(hyps)
        rel = between_arrays(pre_arr[None], hyps)
        rel = rel[tuned.contains(rel)]
        n_admissible = len(rel)
        if n_admissible:
            c, e = _score(index, points, z, compose_arrays(pre_arr[None], rel), cfg)
            counts = np.concatenate([counts, c])
            errs = np.concatenate([errs, e])
            deltas = np.vstack([deltas, rel])

    # count desc, mean error asc, |dx|+|dy| asc, |dtheta| asc, draw order
    order = np.lexsort((np.arange(len(counts)), np.abs(deltas[:, 2]),
                        np.abs(deltas[:, 0]) + np.abs(deltas[:, 1]), errs, -counts))
    best = int(order[0])

    if best == 0:
        delta = IDENTITY
        status = "nn" if tuned.is_zero else ("fallback" if n_admissible == 0 else "ok")
    else:
        delta = Pose2.from_array(deltas[best])
        status = "ok"
        if cfg.refine:
            refined = between(pre, _refine(index, points, z, compose(pre, delta), cfg))
            if tuned.contains(refined.as_array())[0]:
                rc, _ = index.score(points, compose(pre, refined).as_array()[None],
                                    cfg.inlier_threshold, z, cfg.use_dalmr_z)
                if rc[0] >= counts[best]:
                    delta = refined

    pose = compose(pre, delta)
    dist, _, foot = index.nearest(transform_points(pose, points), z, cfg.use_dalmr_z)
    m = dist <= cfg.inlier_threshold
    count = int(m.sum())
    err = float(dist[m].mean()) if count else math.inf
    return AssociationResult(points[m], foot[m], delta, count, err, tuned, entropy, status,
                             n_generated, n_admissible, pose)

