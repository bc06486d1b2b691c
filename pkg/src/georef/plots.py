"""SVG figures: trajectory overlay and per-frame RPE / entropy traces.

Output is byte-stable for identical inputs (fixed SVG id salt, no date stamp).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"svg.hashsalt": "georef", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path) -> None:
    with plt.rc_context(_STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_trajectories(path, map_polylines, truth=None, prior=None, estimates: dict | None = None,
                      title: str = "") -> None:
    """Map markings with ground truth, prior and any number of estimates on top."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(8, 8))
        for pl in map_polylines:
            ax.plot(pl.points[:, 0], pl.points[:, 1], color="0.75", lw=0.6)
        if truth is not None:
            ax.plot(truth.xy[:, 0], truth.xy[:, 1], color="k", lw=1.2, label="ground truth")
        if prior is not None:
            ax.plot(prior.xy[:, 0], prior.xy[:, 1], color="tab:red", lw=1.0, ls="--", label="prior")
        for name, traj in (estimates or {}).items():
            ax.plot(traj.xy[:, 0], traj.xy[:, 1], lw=1.0, label=name)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def plot_traces(path, entropy, rpe: dict, title: str = "") -> None:
    """Per-frame RPE translation (one line per run) above the entropy profile."""
    entropy = np.asarray(entropy, dtype=float)
    frames = np.arange(len(entropy))
    with plt.rc_context(_STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
        for name, series in rpe.items():
            top.plot(frames, np.asarray(series, dtype=float), lw=0.8, label=name)
        top.set_ylabel("RPE trans. [m]")
        top.set_yscale("symlog", linthresh=0.01)
        top.legend(loc="upper right", fontsize=8)
        bottom.plot(frames, entropy, color="tab:green", lw=0.8)
        bottom.set_ylabel("entropy S")
        bottom.set_xlabel("frame")
        if title:
            top.set_title(title)
        fig.tight_layout()
    _save(fig, path)
