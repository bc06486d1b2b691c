"""Planar rigid-body math, polylines, the delta-angle representation and the map index."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import LineString

from . import _kernels

TWO_PI = 2.0 * math.pi
MIN_SEGMENT = 1e-9


def wrap_angle(a):
    """Wrap angles to (-pi, pi]. Works on scalars and arrays."""
    if np.ndim(a) == 0:
        return math.pi - math.fmod(math.fmod(math.pi - float(a), TWO_PI) + TWO_PI, TWO_PI)
    return math.pi - np.mod(math.pi - np.asarray(a, dtype=float), TWO_PI)


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def from_array(cls, a) -> "Pose2":
        return cls(a[0], a[1], a[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def __matmul__(self, other: "Pose2") -> "Pose2":
        return compose(self, other)


IDENTITY = Pose2()


def compose(a: Pose2, b: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(p: Pose2) -> Pose2:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta)


def between(a: Pose2, b: Pose2) -> Pose2:
    """Relative pose of ``b`` seen from ``a``: inverse(a) @ b."""
    return compose(inverse(a), b)


def transform_point(p: Pose2, d) -> np.ndarray:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return np.array([d[0] * c - d[1] * s + p.x, d[0] * s + d[1] * c + p.y])


# Vectorised variants on (..., 3) pose arrays.

def compose_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] + c * b[..., 0] - s * b[..., 1]
    out[..., 1] = a[..., 1] + s * b[..., 0] + c * b[..., 1]
    out[..., 2] = wrap_angle(a[..., 2] + b[..., 2])
    return out


def inverse_arrays(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    c, s = np.cos(p[..., 2]), np.sin(p[..., 2])
    out = np.empty_like(p)
    out[..., 0] = -c * p[..., 0] - s * p[..., 1]
    out[..., 1] = s * p[..., 0] - c * p[..., 1]
    out[..., 2] = wrap_angle(-p[..., 2])
    return out


def between_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return compose_arrays(inverse_arrays(a), b)


def transform_points(p: Pose2, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return pts @ p.rotation().T + p.translation


def inverse_transform_points(p: Pose2, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return (pts - p.translation) @ p.rotation()


# ---------------------------------------------------------------------------
# Polylines


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Polyline:
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"polyline points must have shape (n, 2), got {pts.shape}")
        if len(pts) < 2:
            raise ValueError("polyline needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline points must be finite")
        seg = np.diff(pts, axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= MIN_SEGMENT):
            raise ValueError("polyline has coincident consecutive points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def cleaned(cls, points) -> "Polyline | None":
        """Drop coincident consecutive points; None when fewer than 2 remain."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            return None
        if len(pts) >= 2 and np.all(np.hypot(*np.diff(pts, axis=0).T) > MIN_SEGMENT):
            return cls(pts)
        keep = [0]
        for k in range(1, len(pts)):
            if np.linalg.norm(pts[k] - pts[keep[-1]]) > MIN_SEGMENT:
                keep.append(k)
        if len(keep) < 2:
            return None
        return cls(pts[keep])

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def transformed(self, p: Pose2) -> "Polyline":
        return Polyline(transform_points(p, self.points))

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1])


def resample_polyline(pl: Polyline, step: float) -> Polyline:
    """Subdivide every segment evenly so that spacing is at most ``step``.

    Original vertices are kept, which preserves corners and total length.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    pts = pl.points
    seg = np.diff(pts, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    pieces = np.maximum(np.ceil(lengths / step - 1e-12), 1).astype(int)
    if np.all(pieces == 1):
        return pl
    owner = np.repeat(np.arange(len(seg)), pieces)
    ends = np.concatenate([[0], np.cumsum(pieces)])
    k = np.arange(1, ends[-1] + 1) - ends[owner]
    t = (k / pieces[owner])[:, None]
    res = np.vstack([pts[:1], pts[owner] + t * seg[owner]])
    # exact endpoint copies so vertices survive bit-for-bit
    res[ends] = pts
    return Polyline(res)


def simplify_polyline(pl: Polyline, tolerance: float) -> Polyline:
    """Douglas-Peucker simplification (shapely); tolerance 0 returns the input."""
    if tolerance <= 0:
        return pl
    simple = LineString(pl.points).simplify(tolerance, preserve_topology=False)
    out = Polyline.cleaned(np.asarray(simple.coords))
    return out if out is not None else pl


TURN_EPS = 1e-9  # rad; heading changes below this are rounding noise of collinear points


def delta_angles(pl: Polyline) -> np.ndarray:
    """Absolute heading change at every vertex, in [0, pi]; endpoints are 0."""
    seg = np.diff(pl.points, axis=0)
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    delta = np.zeros(len(pl.points))
    if len(seg) > 1:
        turn = np.abs(wrap_angle(np.diff(heading)))
        delta[1:-1] = np.where(turn < TURN_EPS, 0.0, turn)
    return delta


@dataclass(frozen=True, eq=False)
class DalmrPolyline:
    """Polyline points augmented with a weighted delta-angle channel ``z = delta * w``."""

    points: np.ndarray  # (n, 3): x, y, delta * w
    weight: float
    delta: np.ndarray  # (n,) raw delta-angles, radians

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 2]


def to_dalmr(pl: Polyline, w: float = 1.0) -> DalmrPolyline:
    if len(pl.points) < 2:
        raise ValueError("polyline needs at least 2 points")
    delta = delta_angles(pl)
    pts = np.column_stack([pl.points, delta * w])
    return DalmrPolyline(_frozen(pts), float(w), _frozen(delta))


# ---------------------------------------------------------------------------
# Trajectories and detections


@dataclass(frozen=True, eq=False)
class Trajectory:
    poses: np.ndarray  # (N, 3) x, y, theta

    def __post_init__(self):
        p = np.array(self.poses, dtype=float).reshape(-1, 3)
        if len(p) == 0:
            raise ValueError("trajectory must not be empty")
        p[:, 2] = wrap_angle(p[:, 2])
        p.setflags(write=False)
        object.__setattr__(self, "poses", p)

    @classmethod
    def from_poses(cls, poses: Iterable[Pose2]) -> "Trajectory":
        return cls(np.array([p.as_array() for p in poses]))

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i: int) -> Pose2:
        return Pose2.from_array(self.poses[i])

    def __iter__(self):
        return (Pose2.from_array(p) for p in self.poses)

    def __eq__(self, other) -> bool:
        return isinstance(other, Trajectory) and np.array_equal(self.poses, other.poses)

    @property
    def xy(self) -> np.ndarray:
        return self.poses[:, :2]


@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    polylines: tuple[Polyline, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "polylines", tuple(self.polylines))

    def points(self) -> np.ndarray:
        if not self.polylines:
            return np.zeros((0, 2))
        return np.vstack([pl.points for pl in self.polylines])


# ---------------------------------------------------------------------------
# Landmark map


class SegmentIndex:
    """Exact nearest-segment queries limited to ``reach``."""

    def __init__(self, seg_a: np.ndarray, seg_b: np.ndarray, reach: float,
                 seg_z: np.ndarray | None = None, cell: float | None = None):
        self.seg_a = np.ascontiguousarray(seg_a, dtype=float)
        self.seg_b = np.ascontiguousarray(seg_b, dtype=float)
        n = len(self.seg_a)
        self.seg_z = (np.zeros((n, 2)) if seg_z is None
                      else np.ascontiguousarray(seg_z, dtype=float))
        self.reach = float(reach)
        self.cell = float(cell) if cell else max(1.0, 2.0 * self.reach)
        if n:
            lo = np.minimum(self.seg_a.min(axis=0), self.seg_b.min(axis=0)) - self.reach
            hi = np.maximum(self.seg_a.max(axis=0), self.seg_b.max(axis=0)) + self.reach
        else:
            lo = hi = np.zeros(2)
        self.origin = lo
        self.nx = max(int(np.ceil((hi[0] - lo[0]) / self.cell)), 1)
        self.ny = max(int(np.ceil((hi[1] - lo[1]) / self.cell)), 1)
        self.start, self.items = _kernels.build_grid(
            self.seg_a, self.seg_b, self.origin, self.cell, self.nx, self.ny, self.reach)

    def _args(self):
        return (self.seg_a, self.seg_b, self.seg_z, self.start, self.items,
                self.origin, self.cell, self.nx, self.ny)

    def nearest(self, pts: np.ndarray, z: np.ndarray | None = None, use_z: bool = False):
        """Distance, segment id and foot point for every query (inf / -1 / nan beyond reach)."""
        pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, 2)
        z = np.zeros(len(pts)) if z is None else np.ascontiguousarray(z, dtype=float)
        dist, seg, foot = _kernels.nearest(pts, z, *self._args(), use_z)
        # grid cells only guarantee the true nearest segment within reach
        far = dist > self.reach
        if far.any():
            dist[far], seg[far], foot[far] = np.inf, -1, np.nan
        return dist, seg, foot

    def score(self, pts: np.ndarray, poses: np.ndarray, threshold: float,
              z: np.ndarray | None = None, use_z: bool = False):
        pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, 2)
        poses = np.ascontiguousarray(poses, dtype=float).reshape(-1, 3)
        z = np.zeros(len(pts)) if z is None else np.ascontiguousarray(z, dtype=float)
        return _kernels.score_poses(pts, z, poses, float(threshold), *self._args(), use_z)


@dataclass(eq=False)
class LandmarkMap:
    """World-frame lane markings, resampled to ``step``, with point and segment indices."""

    polylines: Sequence[Polyline]
    step: float = 1.0
    weight: float = 1.0
    points: np.ndarray = field(init=False, repr=False)
    point_z: np.ndarray = field(init=False, repr=False)
    owner: np.ndarray = field(init=False, repr=False)
    _tree: cKDTree = field(init=False, repr=False)
    _segments: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.polylines = tuple(self.polylines)
        if not self.polylines:
            raise ValueError("landmark map is empty")
        dense = [resample_polyline(pl, self.step) if self.step else pl for pl in self.polylines]
        self.dense = tuple(dense)
        self.points = np.vstack([pl.points for pl in dense])
        self.point_z = np.concatenate([to_dalmr(pl, self.weight).z for pl in dense])
        self.owner = np.concatenate([np.full(len(pl), k) for k, pl in enumerate(dense)])
        a, b, za, zb = [], [], [], []
        for pl in dense:
            z = to_dalmr(pl, self.weight).z
            a.append(pl.points[:-1])
            b.append(pl.points[1:])
            za.append(z[:-1])
            zb.append(z[1:])
        self.seg_a = np.vstack(a)
        self.seg_b = np.vstack(b)
        self.seg_z = np.column_stack([np.concatenate(za), np.concatenate(zb)])
        self._tree = cKDTree(self.points)
        self._segments = {}

    def __len__(self) -> int:
        return len(self.points)

    def query_radius(self, center, radius: float) -> np.ndarray:
        """Indices of resampled map points within ``radius`` of ``center`` (sorted)."""
        idx = self._tree.query_ball_point(np.asarray(center, dtype=float), float(radius))
        return np.array(sorted(idx), dtype=np.int64)

    def query_radius_many(self, centers: np.ndarray, radii) -> list:
        return self._tree.query_ball_point(np.asarray(centers, dtype=float), radii, return_sorted=True)

    def segment_index(self, reach: float) -> SegmentIndex:
        key = round(float(reach), 9)
        if key not in self._segments:
            self._segments[key] = SegmentIndex(self.seg_a, self.seg_b, reach, self.seg_z)
        return self._segments[key]
