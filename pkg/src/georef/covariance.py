"""Association reliability from the scatter of recent relative transforms.

The windowed per-component variance of DC-SAC relative transforms becomes a
pose covariance, which is pushed through the point-transform Jacobian to give
one 2x2 covariance (and information matrix) per associated detection.
"""

from __future__ import annotations

import logging
import math
from collections import deque

import numpy as np

from .geometry import Pose2, wrap_angle

log = logging.getLogger(__name__)

DEFAULT_FLOOR = (0.05 ** 2, 0.05 ** 2, 0.002 ** 2)


class TransformHistory:
    """FIFO window of the last ``capacity`` relative transforms."""

    def __init__(self, capacity: int = 10):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._window: deque[Pose2] = deque(maxlen=capacity)

    def push(self, delta: Pose2) -> None:
        self._window.append(delta)

    def __len__(self) -> int:
        return len(self._window)

    def snapshot(self) -> np.ndarray:
        if not self._window:
            return np.zeros((0, 3))
        return np.array([p.as_array() for p in self._window])


def association_covariance(hist, floor=DEFAULT_FLOOR) -> np.ndarray:
    """Diagonal covariance of the window: unbiased per-component variance, floored.

    The angular component is measured as wrapped deviation from the circular
    mean. ``hist`` is a TransformHistory or an (n, 3) array.
    """
    window = hist.snapshot() if isinstance(hist, TransformHistory) else np.asarray(hist, float)
    floor = np.asarray(floor, dtype=float)
    if len(window) == 0:
        log.debug("empty transform history, using floor covariance")
        return np.diag(floor)
    n = len(window)
    denom = max(1, n - 1)
    xy = window[:, :2]
    var_xy = ((xy - xy.mean(axis=0)) ** 2).sum(axis=0) / denom
    th = window[:, 2]
    mean_th = math.atan2(np.sin(th).mean(), np.cos(th).mean())
    var_th = (wrap_angle(th - mean_th) ** 2).sum() / denom
    return np.diag(np.maximum([var_xy[0], var_xy[1], var_th], floor))


def rotate_to_world(sigma: np.ndarray, theta: float) -> np.ndarray:
    """Express a body-frame pose covariance with world-aligned translation axes."""
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return rot @ sigma @ rot.T


def detection_jacobian(pose: Pose2, d) -> np.ndarray:
    """Derivative of the world-frame detection point w.r.t. (x, y, theta)."""
    s, c = math.sin(pose.theta), math.cos(pose.theta)
    return np.array([[1.0, 0.0, -d[0] * s - d[1] * c],
                     [0.0, 1.0, d[0] * c - d[1] * s]])


def detection_jacobians(theta: float, d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float).reshape(-1, 2)
    s, c = math.sin(theta), math.cos(theta)
    jac = np.zeros((len(d), 2, 3))
    jac[:, 0, 0] = 1.0
    jac[:, 1, 1] = 1.0
    jac[:, 0, 2] = -d[:, 0] * s - d[:, 1] * c
    jac[:, 1, 2] = d[:, 0] * c - d[:, 1] * s
    return jac


def _clamp_eigen(cov: np.ndarray, floor: float) -> np.ndarray:
    if floor <= 0:
        return cov
    w, v = np.linalg.eigh(cov)
    if np.all(w >= floor):
        return cov
    w = np.maximum(w, floor)
    out = (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def propagate(sigma: np.ndarray, jac: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """J sigma J^T, symmetrised, with eigenvalues raised to at least ``floor``.

    ``jac`` may be a single 2x3 matrix or a stack of them.
    """
    jac = np.asarray(jac, dtype=float)
    cov = jac @ sigma @ np.swapaxes(jac, -1, -2)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    if cov.ndim == 2:
        return _clamp_eigen(cov, floor)
    w = np.linalg.eigvalsh(cov)
    low = np.any(w < floor, axis=-1)
    if floor > 0 and low.any():
        cov = cov.copy()
        cov[low] = _clamp_eigen(cov[low], floor)
    return cov


def information_matrix(cov: np.ndarray) -> np.ndarray:
    """Closed-form inverse of one or many 2x2 covariances."""
    cov = np.asarray(cov, dtype=float)
    a, b, c, d = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 0], cov[..., 1, 1]
    det = a * d - b * c
    if np.any(det <= 0):
        raise ValueError("covariance is not positive definite")
    out = np.empty_like(cov)
    out[..., 0, 0] = d / det
    out[..., 1, 1] = a / det
    off = -0.5 * (b + c) / det
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    return out
