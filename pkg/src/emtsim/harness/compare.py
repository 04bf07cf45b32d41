"""Channel-by-channel comparison of two traces."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d

from .outputs import read_trace_csv


@dataclass
class ChannelError:
    a: str
    b: str
    error: float          # max deviation relative to the channel's peak magnitude
    t_worst: float
    passed: bool


def envelope(t: np.ndarray, y: np.ndarray, window: float = 0.02) -> np.ndarray:
    """Centred running maximum of |y| over ``window`` seconds (one cycle at
    50 Hz by default). ``t`` must be uniformly spaced."""
    if t.size < 2:
        return np.abs(y)
    n = max(1, int(round(window / (t[1] - t[0]))))
    return maximum_filter1d(np.abs(y), size=n, mode="nearest")


def load_mapping(path) -> dict:
    """Mapping file: a JSON object {channel in a: channel in b} or a list
    of names present in both traces."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("channels", data)
    if isinstance(data, list):
        return {c: c for c in data}
    if isinstance(data, dict):
        return {str(k): str(v) for k, v in data.items()}
    raise ValueError("mapping must be a JSON object or list")


def compare_arrays(ta, ya, tb, yb, tol: float, exclude=(), use_envelope: bool = True,
                   window: float = 0.02, dt: float | None = None,
                   floor: float = 0.0) -> tuple[float, float, bool]:
    """Resample both signals onto a common uniform grid over the overlapping
    interval, optionally take envelopes, and return (error, t_worst, pass).

    The error is normalized by the peak of ``a``, or by ``floor`` when that is
    larger, so channels that sit near zero can be given an absolute scale."""
    t0, t1 = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if not t1 > t0:
        raise ValueError("traces do not overlap in time")
    if dt is None:
        dt = max(np.min(np.diff(ta)) if ta.size > 1 else t1 - t0,
                 np.min(np.diff(tb)) if tb.size > 1 else t1 - t0, 1e-7)
    grid = np.arange(t0, t1 + 0.5 * dt, dt)
    a = np.interp(grid, ta, ya)
    b = np.interp(grid, tb, yb)
    if use_envelope:
        a, b = envelope(grid, a, window), envelope(grid, b, window)
    mask = np.ones(grid.size, dtype=bool)
    for lo, hi in exclude:
        mask &= ~((grid >= lo) & (grid <= hi))
    if not mask.any():
        return 0.0, float("nan"), True
    ref = max(float(np.max(np.abs(a[mask]))), floor, 1e-12)
    dev = np.abs(a - b)
    dev[~mask] = 0.0
    k = int(np.argmax(dev))
    err = float(dev[k] / ref)
    return err, float(grid[k]), err <= tol


def compare_traces(path_a, path_b, mapping: dict | None, tol: float, exclude=(),
                   use_envelope: bool = True, floor: float = 0.0) -> list:
    ta, na, ya = read_trace_csv(path_a)
    tb, nb, yb = read_trace_csv(path_b)
    if mapping is None:
        mapping = {c: c for c in na if c in nb}
    out = []
    for ca, cb in mapping.items():
        if ca not in na or cb not in nb:
            raise KeyError(f"channel pair {ca} / {cb} not found in the traces")
        err, tw, ok = compare_arrays(ta, ya[:, na.index(ca)], tb, yb[:, nb.index(cb)], tol, exclude,
                                     use_envelope, floor=floor)
        out.append(ChannelError(ca, cb, err, tw, ok))
    return out
