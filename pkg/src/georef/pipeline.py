"""Per-frame geo-referencing loop.

For every frame: pre-estimate from the previous estimate and the prior's
increment, score detection entropy, tune the search area, associate, weight
the landmark edges, and re-solve the sliding window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .association import AssociationResult, DcSacConfig, SearchArea, associate, tune_area
from .covariance import (
    DEFAULT_FLOOR,
    TransformHistory,
    association_covariance,
    detection_jacobians,
    information_matrix,
    propagate,
    rotate_to_world,
)
from .entropy import detection_entropy
from .geometry import FrameDetections, LandmarkMap, Pose2, Trajectory, between, compose, resample_polyline
from .graph import LandmarkBlock, OdometryEdge, PoseGraph, PriorEdge, SolverConfig, solve

log = logging.getLogger(__name__)

MODES = ("self_tuning_cov", "self_tuning_nocov", "static_dcsac", "static_nn", "baseline_dcs")


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "self_tuning_cov"
    dalmr_weight: float = 1.0
    resample_step: float = 1.0
    entropy_simplify_tol: float = 0.3
    force_entropy: float | None = None
    dcsac: DcSacConfig = field(default_factory=DcSacConfig)
    cov_window: int = 10
    cov_floor: tuple = DEFAULT_FLOOR
    point_cov_floor: float = 1e-4
    landmark_sigma: float = 0.3
    odometry_sigma: tuple = (0.05, 0.05, 0.005)
    anchor_sigma: float = 100.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    opt_window: int = 50
    final_batch: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.cov_window < 1 or self.opt_window < 1:
            raise ValueError("windows must be >= 1")
        if not (self.resample_step > 0 and self.landmark_sigma > 0 and self.anchor_sigma > 0):
            raise ValueError("resample_step, landmark_sigma and anchor_sigma must be positive")
        if min(self.odometry_sigma) <= 0:
            raise ValueError("odometry sigmas must be positive")
        if self.force_entropy is not None and self.force_entropy > 0:
            raise ValueError("force_entropy must be <= 0")

    @property
    def self_tuning(self) -> bool:
        return self.mode.startswith("self_tuning")

    @property
    def covariance_adjustment(self) -> bool:
        return self.mode == "self_tuning_cov"

    def effective_solver(self) -> SolverConfig:
        if self.mode == "baseline_dcs" and self.solver.robustifier == "none":
            return replace(self.solver, robustifier="covariance_scaling")
        return self.solver

    def odometry_information(self) -> np.ndarray:
        return np.diag(1.0 / np.square(self.odometry_sigma))


@dataclass(eq=False)
class FrameRecord:
    frame: int
    entropy: float
    tuned: SearchArea
    association: AssociationResult
    sigma: np.ndarray | None  # 3x3 association covariance, None without adjustment
    omega: np.ndarray  # (M, 2, 2) per-detection information
    pre_estimate: Pose2
    pose: Pose2 | None = None  # filled after the window solve


def tuned_area(cfg: PipelineConfig, s: float) -> SearchArea:
    base = cfg.dcsac.base_area
    if cfg.mode == "static_nn":
        return SearchArea()
    if cfg.self_tuning:
        return tune_area(base, s, cfg.dcsac.s_min)
    return base


def run_session(lmap: LandmarkMap, prior: Trajectory, detections: list[FrameDetections],
                cfg: PipelineConfig = PipelineConfig()) -> tuple[Trajectory, list[FrameRecord]]:
    if len(detections) != len(prior):
        raise ValueError(f"{len(detections)} detection frames for {len(prior)} prior poses")
    for i, det in enumerate(detections):
        if det.frame_index != i:
            raise ValueError(f"detection frame {det.frame_index} at position {i}")

    solver_cfg = cfg.effective_solver()
    odo_info = cfg.odometry_information()
    graph = PoseGraph()
    hist = TransformHistory(cfg.cov_window)
    records: list[FrameRecord] = []

    for i, det in enumerate(detections):
        if i == 0:
            pre = prior[0]
        else:
            pre = compose(Pose2.from_array(graph.estimates[i - 1]), between(prior[i - 1], prior[i]))

        polys = tuple(resample_polyline(pl, cfg.resample_step) for pl in det.polylines)
        if cfg.force_entropy is not None:
            s = float(cfg.force_entropy)
        else:
            # subdivision adds only zero delta-angles, so no resampling is needed here
            s = detection_entropy(det.polylines, cfg.entropy_simplify_tol)
        tuned = tuned_area(cfg, s)
        res = associate(FrameDetections(i, polys), lmap, pre, cfg.dcsac, tuned, entropy=s)

        # the associated pose is the front end's best guess for the new node
        graph.add_node(res.pose if res.succeeded else pre)
        if i == 0:
            graph.add_prior(PriorEdge(0, prior[0], np.eye(3) / cfg.anchor_sigma ** 2))
        else:
            graph.add_odometry(OdometryEdge.from_prior(prior[i - 1], prior[i], i - 1, i, odo_info))

        sigma = None
        omega = np.zeros((0, 2, 2))
        if res.succeeded:
            hist.push(res.delta_t_star)
            if cfg.covariance_adjustment:
                sigma = association_covariance(hist, cfg.cov_floor)
                world = rotate_to_world(sigma, res.pose.theta)
                jac = detection_jacobians(res.pose.theta, res.detection_points)
                omega = information_matrix(propagate(world, jac, cfg.point_cov_floor))
            else:
                omega = np.broadcast_to(np.eye(2) / cfg.landmark_sigma ** 2,
                                        (len(res.detection_points), 2, 2)).copy()
            graph.add_landmarks(LandmarkBlock(i, res.detection_points, res.landmark_points, omega))

        lo = max(0, i + 1 - cfg.opt_window)
        out = solve(graph, solver_cfg, (lo, i + 1))
        if out.status == "stalled":
            log.info("frame %d: solver stalled, keeping best estimate", i)
        for k in range(lo, i + 1):
            graph.estimates[k] = out.poses[k]
        records.append(FrameRecord(i, s, tuned, res, sigma, omega, pre))

    if cfg.final_batch:
        out = solve(graph, solver_cfg)
        for k in range(len(graph)):
            graph.estimates[k] = out.poses[k]

    poses = graph.poses()
    for rec in records:
        rec.pose = Pose2.from_array(poses[rec.frame])
    return Trajectory(poses), records


def record_entropies(records: list[FrameRecord]) -> np.ndarray:
    return np.array([r.entropy for r in records])
