"""Trace CSV, stats JSON and quick-look SVG plots."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..kernels import BACKEND
from ..solver import SolverConfig, SolverStats
from .runner import Trace

SOLVER_LABELS = {"bdf": "BDF (DASSL-style, variable step/order)", "backward_euler": "Backward Euler (fixed step)"}


def write_trace_csv(trace: Trace, path: Path) -> None:
    """RFC-4180 CSV; time with 12 and channels with 10 significant digits."""
    t, y = trace.array()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["time_s", *trace.names])
        for k in range(t.size):
            wr.writerow([f"{t[k]:.12g}", *(f"{v:.10g}" for v in y[k])])


def read_trace_csv(path: Path) -> tuple[np.ndarray, list, np.ndarray]:
    """Returns (time, channel names, data[time, channel])."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 1:
        raise ValueError(f"{path}: empty trace")
    names = rows[0][1:]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(names) + 1)
    return data[:, 0], names, data[:, 1:]


def stats_report(stats: SolverStats, cfg: SolverConfig, scenario: str = "", extra: dict | None = None) -> dict:
    """Solver performance summary; the first block mirrors the rows of the
    usual solver comparison table."""
    bdf = cfg.scheme == "bdf"
    rep = {
        "scenario": scenario,
        "solver": SOLVER_LABELS[cfg.scheme],
        "tolerance": cfg.rel_tol if bdf else None,
        "dt_max_s": cfg.dt_max if bdf else cfg.dt_fixed,
        "dt_min_s": stats.dt_min_observed if stats.steps else None,
        "steps_taken": stats.steps,
        "residual_calls": stats.residual_calls,
        "jacobian_evaluations": stats.jacobian_evaluations,
        "jacobian_evaluation_time_s": stats.jacobian_time,
        "total_simulation_time_s": stats.wall_time,
        "details": {**stats.summary(), "abs_tol": cfg.abs_tol, "max_order": cfg.max_order if bdf else 1,
                    "kernel_backend": BACKEND},
    }
    if extra:
        rep.update(extra)
    return rep


def write_stats_json(report: dict, path: Path) -> None:
    path.write_text(json.dumps(report, indent=2, default=float) + "\n")


def plot_svg(trace: Trace, groups: list, path: Path, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t, y = trace.array()
    groups = [g for g in groups if all(c in trace.names for c in g)] or [[n] for n in trace.names[:4]]
    fig, axes = plt.subplots(len(groups), 1, figsize=(8, 2.2 * len(groups)), sharex=True, squeeze=False)
    for ax, grp in zip(axes[:, 0], groups):
        for c in grp:
            ax.plot(t, y[:, trace.names.index(c)], lw=0.8, label=c)
        ax.legend(loc="upper right", fontsize=7)
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("time (s)")
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
