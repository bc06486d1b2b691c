"""Pose-graph back end: landmark and odometry residuals solved by Gauss-Newton.

Poses are parameterised as world (x, y, theta) with additive updates. The
normal equations are dense; windows of up to a few hundred variables are the
intended scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import landmark_chi2, landmark_normal
from .geometry import Pose2, between, wrap_angle

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The normal equations could not be solved (gauge freedom or degenerate graph)."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 50
    update_tol: float = 1e-8
    cost_tol: float = 1e-10
    robustifier: str = "none"  # none | covariance_scaling
    phi: float = 1.0
    damping: float = 1e-6

    def __post_init__(self):
        if self.robustifier not in ("none", "covariance_scaling"):
            raise ValueError(f"unknown robustifier {self.robustifier!r}")
        if not (self.update_tol > 0 and self.cost_tol > 0 and self.phi > 0):
            raise ValueError("tolerances and phi must be positive")
        if self.damping < 0 or self.max_iterations < 1:
            raise ValueError("damping must be >= 0 and max_iterations >= 1")


@dataclass(frozen=True, eq=False)
class OdometryEdge:
    i: int
    j: int
    measured: Pose2
    information: np.ndarray

    @classmethod
    def from_prior(cls, prior_i: Pose2, prior_j: Pose2, i: int, j: int, information) -> "OdometryEdge":
        return cls(i, j, between(prior_i, prior_j), np.asarray(information, dtype=float))


@dataclass(frozen=True, eq=False)
class LandmarkEdge:
    i: int
    d: np.ndarray
    l: np.ndarray
    information: np.ndarray


@dataclass(frozen=True, eq=False)
class LandmarkBlock:
    """All landmark edges of one node, stored as arrays."""

    i: int
    d: np.ndarray  # (M, 2)
    l: np.ndarray  # (M, 2)
    information: np.ndarray  # (M, 2, 2)

    @classmethod
    def from_edges(cls, edges: list[LandmarkEdge]) -> "LandmarkBlock":
        return cls(edges[0].i, np.array([e.d for e in edges]), np.array([e.l for e in edges]),
                   np.array([e.information for e in edges]))


@dataclass(frozen=True, eq=False)
class PriorEdge:
    i: int
    pose: Pose2
    information: np.ndarray


def landmark_residual(node: Pose2, edge: LandmarkEdge):
    """Residual T(d) - l and its Jacobian w.r.t. (x, y, theta)."""
    c, s = math.cos(node.theta), math.sin(node.theta)
    d = edge.d
    r = np.array([c * d[0] - s * d[1] + node.x - edge.l[0],
                  s * d[0] + c * d[1] + node.y - edge.l[1]])
    jac = np.array([[1.0, 0.0, -d[0] * s - d[1] * c],
                    [0.0, 1.0, d[0] * c - d[1] * s]])
    return r, jac


def odometry_residual(node_i: Pose2, node_j: Pose2, edge: OdometryEdge):
    """Residual measured - estimated relative motion, with Jacobians w.r.t. both nodes."""
    r, ji, jj = odometry_residuals(node_i.as_array()[None], node_j.as_array()[None],
                                 edge.measured.as_array()[None])
    return r[0], ji[0], jj[0]


def odometry_residuals(pi, pj, meas):
    """Vectorised odometry residuals (n, 3) and Jacobians (n, 3, 3) w.r.t. node i and node j."""
    c, s = np.cos(pi[:, 2]), np.sin(pi[:, 2])
    dx = pj[:, 0] - pi[:, 0]
    dy = pj[:, 1] - pi[:, 1]
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    r = np.column_stack([meas[:, 0] - lx, meas[:, 1] - ly,
                         wrap_angle(meas[:, 2] - (pj[:, 2] - pi[:, 2]))])
    n = len(pi)
    ji = np.zeros((n, 3, 3))
    jj = np.zeros((n, 3, 3))
    ji[:, 0, 0], ji[:, 0, 1] = c, s
    ji[:, 1, 0], ji[:, 1, 1] = -s, c
    ji[:, 0, 2] = s * dx - c * dy
    ji[:, 1, 2] = c * dx + s * dy
    ji[:, 2, 2] = 1.0
    jj[:, :2, :2] = -ji[:, :2, :2]
    jj[:, 2, 2] = -1.0
    return r, ji, jj


def dcs_scale(chi2, phi: float):
    """Covariance-scaling factor min(1, 2 phi / (phi + chi2))."""
    return np.minimum(1.0, 2.0 * phi / (phi + np.asarray(chi2, dtype=float)))


@dataclass
class PoseGraph:
    estimates: list = field(default_factory=list)  # list of (3,) arrays
    odometry: list = field(default_factory=list)
    landmarks: dict = field(default_factory=dict)  # node -> list[LandmarkBlock]
    priors: list = field(default_factory=list)

    def add_node(self, pose: Pose2) -> int:
        self.estimates.append(pose.as_array())
        return len(self.estimates) - 1

    def add_odometry(self, edge: OdometryEdge) -> None:
        if edge.j != edge.i + 1:
            raise ValueError("odometry edges must link consecutive nodes")
        self.odometry.append(edge)

    def add_landmarks(self, block: LandmarkBlock | LandmarkEdge) -> None:
        if isinstance(block, LandmarkEdge):
            block = LandmarkBlock.from_edges([block])
        if len(block.d):
            self.landmarks.setdefault(block.i, []).append(block)

    def add_prior(self, edge: PriorEdge) -> None:
        self.priors.append(edge)

    def poses(self) -> np.ndarray:
        return np.array(self.estimates).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.estimates)


@dataclass
class SolveResult:
    poses: np.ndarray  # full (N, 3) array, frozen nodes untouched
    cost_log: list
    iterations: int
    status: str  # converged | max_iterations | stalled


class _Problem:
    """Edges touching the active node range, flattened into arrays."""

    def __init__(self, graph: PoseGraph, lo: int, hi: int):
        self.lo, self.hi = lo, hi
        self.n = hi - lo
        blocks = [b for i in range(lo, hi) for b in graph.landmarks.get(i, [])]
        if blocks:
            self.lm_node = np.concatenate([np.full(len(b.d), b.i - lo, dtype=np.int64) for b in blocks])
            self.lm_d = np.vstack([b.d for b in blocks])
            self.lm_l = np.vstack([b.l for b in blocks])
            self.lm_info = np.ascontiguousarray(np.concatenate([b.information for b in blocks]), dtype=float)
        else:
            self.lm_node = np.zeros(0, dtype=np.int64)
            self.lm_d = self.lm_l = np.zeros((0, 2))
            self.lm_info = np.zeros((0, 2, 2))
        odo = [e for e in graph.odometry if lo <= e.j < hi]
        self.od_i = np.array([e.i for e in odo], dtype=int)
        self.od_j = np.array([e.j for e in odo], dtype=int)
        self.od_meas = np.array([e.measured.as_array() for e in odo]).reshape(-1, 3)
        self.od_info = np.array([e.information for e in odo]).reshape(-1, 3, 3)
        pri = [p for p in graph.priors if lo <= p.i < hi]
        self.pr_i = np.array([p.i - lo for p in pri], dtype=int)
        self.pr_pose = np.array([p.pose.as_array() for p in pri]).reshape(-1, 3)
        self.pr_info = np.array([p.information for p in pri]).reshape(-1, 3, 3)

    def landmark_chi2(self, x: np.ndarray) -> np.ndarray:
        return landmark_chi2(x, self.lm_node, self.lm_d, self.lm_l, self.lm_info)

    def cost(self, x: np.ndarray, full: np.ndarray, cfg: SolverConfig) -> float:
        total = 0.0
        if len(self.lm_node):
            chi2 = self.landmark_chi2(x)
            if cfg.robustifier == "covariance_scaling":
                sc = dcs_scale(chi2, cfg.phi)
                total += float(np.sum(sc ** 2 * chi2 + cfg.phi * (1.0 - sc) ** 2))
            else:
                total += float(chi2.sum())
        if len(self.od_i):
            r, _, _ = self._odo(x, full)
            total += float(np.sum(r * (self.od_info @ r[:, :, None])[:, :, 0]))
        if len(self.pr_i):
            e = self._prior_res(x)
            total += float(np.sum(e * (self.pr_info @ e[:, :, None])[:, :, 0]))
        return total

    def _node(self, x, full, idx):
        local = idx - self.lo
        out = full[idx].copy()
        act = local >= 0
        out[act] = x[local[act]]
        return out

    def _odo(self, x, full):
        pi = self._node(x, full, self.od_i)
        pj = self._node(x, full, self.od_j)
        return odometry_residuals(pi, pj, self.od_meas)

    def _prior_res(self, x):
        e = x[self.pr_i] - self.pr_pose
        e[:, 2] = wrap_angle(e[:, 2])
        return e

    def normal_equations(self, x: np.ndarray, full: np.ndarray, cfg: SolverConfig):
        n = self.n
        H = np.zeros((n, n, 3, 3))  # block layout, flattened at the end
        g = np.zeros((n, 3))
        if len(self.lm_node):
            if cfg.robustifier == "covariance_scaling":
                weight = dcs_scale(self.landmark_chi2(x), cfg.phi) ** 2
            else:
                weight = np.ones(len(self.lm_node))
            hd, gd = landmark_normal(x, self.lm_node, self.lm_d, self.lm_l, self.lm_info, weight, n)
            diag = np.arange(n)
            H[diag, diag] += hd
            g += gd
        if len(self.od_i):
            r, ji, jj = self._odo(x, full)
            li, lj = self.od_i - self.lo, self.od_j - self.lo
            nodes = (li, lj)
            jacs = (ji, jj)
            jt_info = [np.swapaxes(j, 1, 2) @ self.od_info for j in jacs]
            for a in range(2):
                ma = nodes[a] >= 0
                np.add.at(g, nodes[a][ma], (jt_info[a][ma] @ r[ma][:, :, None])[:, :, 0])
                for b in range(2):
                    m = ma & (nodes[b] >= 0)
                    np.add.at(H, (nodes[a][m], nodes[b][m]), jt_info[a][m] @ jacs[b][m])
        if len(self.pr_i):
            e = self._prior_res(x)
            np.add.at(H, (self.pr_i, self.pr_i), self.pr_info)
            np.add.at(g, self.pr_i, (self.pr_info @ e[:, :, None])[:, :, 0])
        return H.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n), g.reshape(-1)


def solve(graph: PoseGraph, cfg: SolverConfig = SolverConfig(), active: tuple[int, int] | None = None
          ) -> SolveResult:
    """Gauss-Newton over nodes ``active = (lo, hi)``; nodes outside stay fixed.

    Raises SolverError when the normal matrix is singular.
    """
    full = graph.poses()
    lo, hi = active if active is not None else (0, len(full))
    if hi <= lo:
        return SolveResult(full, [], 0, "converged")
    prob = _Problem(graph, lo, hi)
    x = full[lo:hi].copy()
    cur = prob.cost(x, full, cfg)
    best_x = x.copy()
    cost_log = [cur]
    damping = cfg.damping
    bad = 0
    status = "max_iterations"
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        H, g = prob.normal_equations(x, full, cfg)
        if it == 1:
            _check_gauge(prob, H)
        try:
            step = np.linalg.solve(H + damping * np.eye(len(H)), -g)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"normal matrix is singular: {exc}") from exc
        cand = x + step.reshape(-1, 3)
        cand[:, 2] = wrap_angle(cand[:, 2])
        new = prob.cost(cand, full, cfg)
        cost_log.append(new)
        if new <= cur:
            decrease = cur - new
            x, prev, cur = cand, cur, new
            best_x = x.copy()
            bad = 0
            damping = cfg.damping
            if np.max(np.abs(step)) < cfg.update_tol or decrease <= cfg.cost_tol * max(prev, 1e-300):
                status = "converged"
                break
        elif new - cur <= 100 * cfg.cost_tol * max(cur, 1e-300) or np.max(np.abs(step)) < cfg.update_tol:
            # overshoot at the noise level of an already-converged solution
            status = "converged"
            break
        else:
            bad += 1
            damping = max(damping, 1e-9) * 10.0
            if bad >= 3:
                status = "stalled"
                log.info("cost did not decrease for 3 iterations, keeping best estimate")
                break
    out = full.copy()
    out[lo:hi] = best_x
    return SolveResult(out, cost_log, it, status)


def _check_gauge(prob: _Problem, H: np.ndarray) -> None:
    # a window is pinned by a prior, by odometry into a frozen node, or by landmark edges
    anchored = len(prob.pr_i) > 0 or len(prob.lm_node) > 0 or bool(np.any(prob.od_i < prob.lo))
    w = np.linalg.eigvalsh(H)
    scale = max(float(np.max(np.abs(w))), 1.0)
    if not anchored or w[0] <= len(H) * np.finfo(float).eps * scale:
        raise SolverError(
            f"normal matrix is singular (min eigenvalue {w[0]:.3g}); "
            "anchor a node or add landmark edges to fix the gauge")
