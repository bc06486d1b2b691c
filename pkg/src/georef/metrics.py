"""Trajectory error metrics and the entropy/error correlation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Trajectory, between_arrays


@dataclass(frozen=True, eq=False)
class MetricReport:
    ate_rmse: float
    rpe_trans: np.ndarray  # per frame, m; index i compares frames (i - step, i); NaN for i < step
    rpe_rot: np.ndarray  # per frame, degrees
    rpe_trans_rmse: float
    rpe_rot_rmse: float
    entropy: np.ndarray  # per frame
    step: int = 1


def _check(a: Trajectory, b: Trajectory) -> None:
    if len(a) != len(b):
        raise ValueError(f"trajectory lengths differ ({len(a)} vs {len(b)})")


def ate(estimate: Trajectory, truth: Trajectory) -> float:
    """Translation RMSE without any alignment."""
    _check(estimate, truth)
    err = np.linalg.norm(estimate.xy - truth.xy, axis=1)
    return float(np.sqrt(np.mean(err ** 2)))


def rpe(estimate: Trajectory, reference: Trajectory, step: int = 1):
    """Per-pair relative pose error: translation (m) and rotation (deg) lists."""
    _check(estimate, reference)
    if step < 1 or len(estimate) <= step:
        raise ValueError("trajectory must be longer than step")
    est, ref = estimate.poses, reference.poses
    d_est = between_arrays(est[:-step], est[step:])
    d_ref = between_arrays(ref[:-step], ref[step:])
    err = between_arrays(d_ref, d_est)
    return np.linalg.norm(err[:, :2], axis=1), np.degrees(np.abs(err[:, 2]))


def _rmse(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(v)))) if len(v) else 0.0


def evaluate(estimate: Trajectory, truth: Trajectory, entropy=None, step: int = 1) -> MetricReport:
    trans, rot = rpe(estimate, truth, step)
    pad = np.full(step, np.nan)
    ent = np.zeros(len(truth)) if entropy is None else np.asarray(entropy, dtype=float)
    return MetricReport(ate(estimate, truth), np.concatenate([pad, trans]), np.concatenate([pad, rot]),
                        _rmse(trans), _rmse(rot), ent, step)


def pearson(x, y) -> float:
    """Pearson coefficient; NaN (with a warning) when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("need at least 3 paired samples")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(xc @ xc)), math.sqrt(float(yc @ yc))
    if sx == 0 or sy == 0:
        warnings.warn("correlation undefined for zero-variance input", RuntimeWarning, stacklevel=2)
        return math.nan
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def entropy_error_correlation(report: MetricReport) -> float:
    """Correlation between per-frame entropy and the RPE of the step ending at that frame."""
    m = ~np.isnan(report.rpe_trans)
    return pearson(report.entropy[m], report.rpe_trans[m])
