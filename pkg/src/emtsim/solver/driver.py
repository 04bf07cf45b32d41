"""Event-aware integration loop shared by both schemes."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bdf import BdfIntegrator
from .be import BackwardEulerIntegrator
from .core import (CountingResidual, InconsistentInitialConditions, SolverConfig, SolverStats,
                   consistent_xdot)


@dataclass(order=True)
class TimeEvent:
    t: float
    action: Callable[[float, np.ndarray], None] = field(compare=False)
    label: str = field(default="", compare=False)


@dataclass
class StateEvent:
    """``fires(t, x)`` is the predicate whose turning true marks the event;
    it must be false right after the event has been applied."""
    fires: Callable[[float, np.ndarray], bool]
    action: Callable[[float, np.ndarray], None]
    label: str = ""


@dataclass
class DaeProblem:
    residual: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    scale: np.ndarray
    commit: Callable[[float, np.ndarray], None] | None = None
    groups: list | None = None


@dataclass
class SimResult:
    t: float
    x: np.ndarray
    xd: np.ndarray
    stats: SolverStats
    events: list


def _integrator(problem: DaeProblem, cfg: SolverConfig, stats: SolverStats):
    f = CountingResidual(problem.residual, stats)
    cls = BdfIntegrator if cfg.scheme == "bdf" else BackwardEulerIntegrator
    return f, cls(f, problem.scale, cfg, stats, problem.groups)


def simulate(problem: DaeProblem, cfg: SolverConfig, t0: float, x0: np.ndarray, xd0: np.ndarray,
             t_end: float, time_events=(), state_events=(), observer=None,
             consistency_tol: float = 1e-6) -> SimResult:
    """Integrate from ``t0`` to ``t_end``.

    Steps are clipped to land on every time event. State events are located
    by bisection on the dense output to within ``cfg.event_tolerance``. After
    each event the derivative is made consistent and the method restarts at
    order 1. ``observer(t_a, t_b, interp)`` is called for each accepted
    segment (t_a, t_b] before it is committed.
    """
    cfg.validate()
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    stats = SolverStats()
    wall0 = time.perf_counter()
    f, integ = _integrator(problem, cfg, stats)
    x = np.asarray(x0, dtype=float).copy()
    xd = np.asarray(xd0, dtype=float).copy()
    r = f(t0, x, xd)
    if not np.all(np.isfinite(r)) or np.max(np.abs(r)) > consistency_tol:
        raise InconsistentInitialConditions(
            f"initial residual {np.max(np.abs(r)):.3e} exceeds {consistency_tol:.1e}", t0)
    queue = sorted(time_events)
    log = []
    t = t0

    def settle(t_ev, xe, xd_guess):
        return consistent_xdot(f, t_ev, xe, xd_guess, problem.scale, stats, groups=problem.groups)

    # events scheduled at the start time act before the first step
    fired = False
    while queue and queue[0].t <= t0:
        ev = queue.pop(0)
        ev.action(t0, x)
        log.append((t0, ev.label))
        fired = True
    if fired:
        xd = settle(t0, x, xd)
    integ.start(t, x, xd, t_end - t)
    tol_t = 1e-12 * max(1.0, abs(t_end))

    while t < t_end - tol_t:
        t_stop = min(queue[0].t, t_end) if queue else t_end
        t_prev = integ.t
        t = integ.step(t_stop)
        if abs(t - t_stop) <= tol_t:
            t = t_stop
            integ.t = t_stop

        hit = None
        for se in state_events:
            if se.fires(t, integ.x):
                lo, hi = t_prev, t
                while hi - lo > cfg.event_tolerance:
                    mid = 0.5 * (lo + hi)
                    xm, _ = integ.interpolate(mid)
                    if se.fires(mid, xm):
                        hi = mid
                    else:
                        lo = mid
                if hit is None or hi < hit[0]:
                    hit = (float(hi), se)
        if hit is not None:
            t_ev, se = hit
            xe, xde = integ.interpolate(t_ev)
            if observer is not None:
                observer(t_prev, t_ev, integ.interpolate)
            if problem.commit is not None:
                problem.commit(t_ev, xe)
            se.action(t_ev, xe)
            log.append((t_ev, se.label))
            stats.restarts += 1
            t = t_ev
            integ.start(t, xe, settle(t, xe, xde), t_end - t)
            continue

        if observer is not None:
            observer(t_prev, t, integ.interpolate)
        if problem.commit is not None:
            problem.commit(t, integ.x)
        if queue and t >= queue[0].t - tol_t:
            xe = integ.x.copy()
            while queue and queue[0].t <= t + tol_t:
                ev = queue.pop(0)
                ev.action(t, xe)
                log.append((t, ev.label))
            stats.restarts += 1
            integ.start(t, xe, settle(t, xe, integ.xd), t_end - t)

    stats.wall_time = time.perf_counter() - wall0
    return SimResult(t=t, x=integ.x.copy(), xd=integ.xd.copy(), stats=stats, events=log)
