"""Fixed-step Backward Euler with Newton iterations on a reused LU."""
from __future__ import annotations

import numpy as np

from .core import IterationMatrix, SolverConfig, SolverError, SolverStats, weights, wrms


def backward_euler_step(residual, t: float, x: np.ndarray, h: float, xd_guess: np.ndarray | None = None,
                        tol: float = 1e-10, max_iter: int = 20) -> np.ndarray:
    """One standalone BE step: solve F(t+h, y, (y - x)/h) = 0 for y.

    Uses a fresh finite-difference matrix; intended for small problems and
    tests. The integrator below reuses factorizations across steps.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    stats = SolverStats()
    mat = IterationMatrix(stats)
    y = x + h * (xd_guess if xd_guess is not None else 0.0)
    t1 = t + h
    for _ in range(max_iter):
        yp = (y - x) / h
        r = residual(t1, y, yp)
        if mat.lu is None:
            mat.evaluate(residual, t1, y, yp, 1.0 / h, np.ones_like(x), h, r)
        dy = mat.solve(r)
        y = y - dy
        if np.max(np.abs(dy)) <= tol * (1.0 + np.max(np.abs(y))):
            return y
    raise SolverError("Newton iteration did not converge in backward Euler step", t1)


class BackwardEulerIntegrator:
    def __init__(self, residual, scale: np.ndarray, cfg: SolverConfig, stats: SolverStats, groups=None):
        self.f = residual
        self.scale = scale
        self.cfg = cfg
        self.stats = stats
        self.n = scale.size
        self.mat = IterationMatrix(stats, groups, scale)
        self.s = 100.0

    def start(self, t: float, x: np.ndarray, xd: np.ndarray, horizon: float = 0.0) -> None:
        self.t = self.t_prev = t
        self.x = x.copy()
        self.xd = xd.copy()
        self.x_prev = x.copy()
        self.mat.lu = None   # events change the system: always refresh

    def step(self, t_stop: float) -> float:
        cfg, st = self.cfg, self.stats
        h = cfg.dt_fixed
        rem = t_stop - self.t
        if rem <= 0:
            raise SolverError("step requested with no room before stop time", self.t)
        if rem <= h * (1.0 + 1e-6):
            h = rem
        elif rem - h < 0.1 * h:
            # avoid a sliver step before the stop time
            h = 0.5 * rem
        t_new = self.t + h
        cj = 1.0 / h
        wt = weights(self.x, cfg.rel_tol, cfg.abs_tol, self.scale)
        x0 = self.x
        y_pred = x0 + h * self.xd
        stale_retry = True
        while True:
            y = y_pred.copy()
            yp = (y - x0) * cj
            if self.mat.lu is None or abs(cj / self.mat.cj - 1.0) > cfg.jacobian_reuse_tolerance:
                self.mat.evaluate(self.f, t_new, y, yp, cj, wt, h)
                fresh = True
            else:
                st.jacobian_reuses += 1
                fresh = False
            ok = self._newton(t_new, y, yp, x0, cj, wt)
            if ok:
                break
            st.newton_failures += 1
            if fresh or not stale_retry:
                raise SolverError(f"backward Euler Newton iteration diverged (h = {h:.3e} s)", self.t)
            self.mat.lu = None
            stale_retry = False
        self.x_prev = self.x
        self.t_prev = self.t
        self.t = t_new
        self.x = y
        self.xd = yp
        st.record_step(t_new, h, 1, cfg.record_steps)
        return t_new

    def _newton(self, t_new, y, yp, x0, cj, wt) -> bool:
        cfg, st = self.cfg, self.stats
        scale = 2.0 / (1.0 + cj / self.mat.cj) if cj != self.mat.cj else 1.0
        # no error test backs up a fixed step, so the rate estimate is not
        # carried over: every step measures its own contraction
        self.s = 100.0
        oldnrm = 0.0
        for m in range(cfg.be_newton_max_iters):
            r = self.f(t_new, y, yp)
            st.newton_iterations += 1
            if not np.all(np.isfinite(r)):
                return False
            delta = self.mat.solve(r) * scale
            y -= delta
            yp[:] = (y - x0) * cj
            delnrm = wrms(delta, wt)
            if delnrm == 0.0:
                return True
            if m > 0:
                rate = (delnrm / oldnrm) ** (1.0 / m)
                if rate > 0.9:
                    return False
                self.s = rate / (1.0 - rate)
            else:
                oldnrm = delnrm
            if self.s * delnrm <= 0.33:
                return True
        return False

    def interpolate(self, tq: float):
        h = self.t - self.t_prev
        if h <= 0:
            return self.x.copy(), self.xd.copy()
        w = (tq - self.t_prev) / h
        return self.x_prev + w * (self.x - self.x_prev), self.xd.copy()

    @property
    def order(self) -> int:
        return 1
