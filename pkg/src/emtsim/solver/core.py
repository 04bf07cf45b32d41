"""Shared solver pieces: configuration, statistics, norms, finite-difference
iteration matrix and consistent-derivative computation."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

UROUND = np.finfo(float).eps
SQRT_UROUND = math.sqrt(UROUND)

Residual = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    """Integration cannot continue."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} at t = {t:.9g} s")
        self.t = t


class InconsistentInitialConditions(SolverError):
    pass


@dataclass
class SolverConfig:
    scheme: str = "bdf"             # "bdf" | "backward_euler"
    dt_fixed: float = 25e-6
    dt_max: float = 25e-6
    dt_min: float = 1e-12
    rel_tol: float = 1e-4
    abs_tol: float = 1e-4
    max_order: int = 5
    newton_max_iters: int = 4
    be_newton_max_iters: int = 10
    jacobian_reuse_tolerance: float = 0.1
    event_tolerance: float = 1e-6
    record_steps: bool = True
    column_groups: list | None = None

    def validate(self) -> None:
        if self.scheme not in ("bdf", "backward_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 1 <= self.max_order <= 5:
            raise ValueError("max_order must be in 1..5")
        if not self.dt_fixed > 0:
            raise ValueError("dt_fixed must be positive")
        if self.newton_max_iters < 1 or self.be_newton_max_iters < 1:
            raise ValueError("newton iteration limits must be positive")


@dataclass
class SolverStats:
    steps: int = 0
    residual_calls: int = 0
    jacobian_evaluations: int = 0
    jacobian_factorizations: int = 0
    jacobian_reuses: int = 0
    newton_iterations: int = 0
    error_test_failures: int = 0
    newton_failures: int = 0
    restarts: int = 0
    dt_min_observed: float = math.inf
    dt_max_observed: float = 0.0
    wall_time: float = 0.0
    jacobian_time: float = 0.0
    step_t: list = field(default_factory=list)
    step_h: list = field(default_factory=list)
    step_order: list = field(default_factory=list)

    def record_step(self, t_new: float, h: float, order: int, keep: bool) -> None:
        self.steps += 1
        self.dt_min_observed = min(self.dt_min_observed, h)
        self.dt_max_observed = max(self.dt_max_observed, h)
        if keep:
            self.step_t.append(t_new)
            self.step_h.append(h)
            self.step_order.append(order)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in (
            "steps", "residual_calls", "jacobian_evaluations", "jacobian_factorizations",
            "jacobian_reuses", "newton_iterations", "error_test_failures", "newton_failures",
            "restarts", "dt_min_observed", "dt_max_observed", "wall_time", "jacobian_time")}


class CountingResidual:
    """Wraps a residual function and counts calls into ``stats``."""

    def __init__(self, fn: Residual, stats: SolverStats):
        self.fn = fn
        self.stats = stats

    def __call__(self, t, x, xd):
        self.stats.residual_calls += 1
        return self.fn(t, x, xd)


def weights(x: np.ndarray, rel_tol: float, abs_tol: float, scale: np.ndarray) -> np.ndarray:
    return rel_tol * np.abs(x) + abs_tol * scale


def wrms(v: np.ndarray, wt: np.ndarray) -> float:
    return float(np.sqrt(np.mean((v / wt) ** 2)))


def fd_jacobian(residual: Residual, t: float, x: np.ndarray, xd: np.ndarray, cj: float,
                wt: np.ndarray | None = None, h: float = 0.0, r0: np.ndarray | None = None,
                groups: list | None = None, floor: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference iteration matrix dF/dx + cj dF/dx'.

    Column j perturbs x_j by d and x'_j by cj*d together, with
    d = sqrt(eps) * max(|x_j|, |h x'_j|, wt_j, floor_j). ``floor`` is the
    typical magnitude of each variable; without it a state passing through
    zero gets an increment near sqrt(eps) * abs_tol and the column drowns
    in roundoff. Without ``r0`` the base
    residual is evaluated too, for n + 1 calls in total. ``groups`` lists
    structurally orthogonal column sets that may share one evaluation.
    """
    n = x.size
    if r0 is None:
        r0 = residual(t, x, xd)
    if wt is None:
        wt = np.ones(n)
    d = SQRT_UROUND * np.maximum(np.maximum(np.abs(x), np.abs(h * xd)), np.abs(wt))
    if floor is not None:
        d = np.maximum(d, SQRT_UROUND * floor)
    d = np.where(h * xd < 0.0, -d, d)
    d = (x + d) - x
    d[d == 0.0] = SQRT_UROUND
    jac = np.empty((n, n))
    if groups is None:
        xp = x.copy()
        xdp = xd.copy()
        for j in range(n):
            xj, xdj = xp[j], xdp[j]
            xp[j] = xj + d[j]
            xdp[j] = xdj + cj * d[j]
            jac[:, j] = (residual(t, xp, xdp) - r0) / d[j]
            xp[j], xdp[j] = xj, xdj
        return jac
    jac[:] = 0.0
    for cols, rows_of in groups:
        xp = x.copy()
        xdp = xd.copy()
        xp[cols] += d[cols]
        xdp[cols] += cj * d[cols]
        diff = residual(t, xp, xdp) - r0
        for j in cols:
            rows = rows_of[j]
            jac[rows, j] = diff[rows] / d[j]
    return jac


def column_groups(pattern) -> list:
    """Greedy colouring of the column intersection graph of a sparse
    boolean pattern (scipy sparse). Returns [(cols, {col: rows})]."""
    csc = pattern.tocsc()
    csr = pattern.tocsr()
    n = csc.shape[1]
    rows_of = [csc.indices[csc.indptr[j]:csc.indptr[j + 1]] for j in range(n)]
    color = -np.ones(n, dtype=int)
    order = np.argsort([-len(r) for r in rows_of], kind="stable")
    for j in order:
        taken = set()
        for r in rows_of[j]:
            for c in csr.indices[csr.indptr[r]:csr.indptr[r + 1]]:
                if color[c] >= 0:
                    taken.add(color[c])
        c = 0
        while c in taken:
            c += 1
        color[j] = c
    groups = []
    for c in range(color.max() + 1):
        cols = np.flatnonzero(color == c)
        groups.append((cols, {int(j): rows_of[j] for j in cols}))
    return groups


class IterationMatrix:
    """LU-factorized iteration matrix with evaluation bookkeeping."""

    def __init__(self, stats: SolverStats, groups=None, floor: np.ndarray | None = None):
        self.stats = stats
        self.lu = None
        self.cj = None
        self.groups = groups
        self.floor = floor

    def evaluate(self, residual, t, x, xd, cj, wt, h, r0=None) -> None:
        t0 = time.perf_counter()
        jac = fd_jacobian(residual, t, x, xd, cj, wt, h, r0, self.groups, self.floor)
        try:
            self.lu = sla.lu_factor(jac, check_finite=True)
        except (ValueError, sla.LinAlgError) as exc:
            raise SolverError(f"iteration matrix factorization failed: {exc}", t) from None
        if np.any(np.diag(self.lu[0]) == 0.0):
            raise SolverError("singular iteration matrix", t)
        self.cj = cj
        self.stats.jacobian_evaluations += 1
        self.stats.jacobian_factorizations += 1
        self.stats.jacobian_time += time.perf_counter() - t0

    def solve(self, r: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu, r, check_finite=False)


def consistent_xdot(residual: Residual, t: float, x: np.ndarray, xd_guess: np.ndarray,
                    scale: np.ndarray, stats: SolverStats | None = None, tol: float = 1e-10,
                    max_iter: int = 4, groups=None, rate_scale: float = 100.0 * math.pi) -> np.ndarray:
    """Solve F(t, x, x') = 0 for x' with x held fixed (Newton, one matrix).

    ``rate_scale`` (1/s) times ``scale`` sets the typical size of x'.
    Residual calls are not counted here; pass a counting residual.
    """
    xd = xd_guess.copy()
    n = x.size
    lu = None
    for _ in range(max_iter):
        r0 = residual(t, x, xd)
        if np.max(np.abs(r0)) <= tol:
            break
        if lu is None:
            t0 = time.perf_counter()
            # F is close to linear in x', so a large increment is safe and keeps
            # tiny capacitive terms above roundoff
            d = 1e-3 * np.maximum(np.abs(xd), rate_scale * scale)
            jac = np.zeros((n, n))
            if groups is None:
                xdp = xd.copy()
                for j in range(n):
                    v = xdp[j]
                    xdp[j] = v + d[j]
                    jac[:, j] = (residual(t, x, xdp) - r0) / d[j]
                    xdp[j] = v
            else:
                for cols, rows_of in groups:
                    xdp = xd.copy()
                    xdp[cols] += d[cols]
                    diff = residual(t, x, xdp) - r0
                    for j in cols:
                        jac[rows_of[j], j] = diff[rows_of[j]] / d[j]
            try:
                lu = sla.lu_factor(jac)
            except (ValueError, sla.LinAlgError):
                raise SolverError("dF/dx' is singular; cannot compute consistent derivatives", t) from None
            if np.any(np.diag(lu[0]) == 0.0):
                raise SolverError("dF/dx' is singular; cannot compute consistent derivatives", t)
            if stats is not None:
                stats.jacobian_evaluations += 1
                stats.jacobian_factorizations += 1
                stats.jacobian_time += time.perf_counter() - t0
        xd = xd - sla.lu_solve(lu, r0)
    return xd
