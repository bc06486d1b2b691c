"""Pseudo-entropy of a detection set, computed from per-polyline delta-angle signals."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .geometry import Polyline, delta_angles, resample_polyline, simplify_polyline


def pseudo_entropy(signals: Iterable[Sequence[float]]) -> float:
    """Return ``-sum(d * ln(d + 1))`` over every delta-angle of every polyline.

    Each signal holds the delta-angles of one polyline, all in ``[0, pi]``.
    The result is never positive; an empty input scores 0.
    """
    total = 0.0
    for sig in signals:
        d = np.asarray(sig, dtype=float)
        if d.size == 0:
            continue
        if np.any(~np.isfinite(d)) or d.min() < 0.0 or d.max() > math.pi:
            raise ValueError("delta-angles must lie in [0, pi]")
        total += float(np.sum(d * np.log1p(d)))
    return -total if total else 0.0


def detection_signals(polylines: Iterable[Polyline], simplify_tol: float = 0.0,
                      step: float | None = None) -> list[np.ndarray]:
    """Delta-angle signal of each polyline after optional simplification and resampling."""
    out = []
    for pl in polylines:
        if simplify_tol > 0:
            pl = simplify_polyline(pl, simplify_tol)
        if step:
            pl = resample_polyline(pl, step)
        out.append(delta_angles(pl))
    return out


def detection_entropy(polylines: Iterable[Polyline], simplify_tol: float = 0.0,
                      step: float | None = None) -> float:
    return pseudo_entropy(detection_signals(polylines, simplify_tol, step))
