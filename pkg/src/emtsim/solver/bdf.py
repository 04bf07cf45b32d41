"""Variable-order, variable-step fixed-leading-coefficient BDF in the
DASSL style (modified divided differences, orders 1..5).

Arrays use 1-based indexing (slot 0 unused) to keep the coefficient
recurrences readable.
"""
from __future__ import annotations

import numpy as np

from .core import UROUND, IterationMatrix, SolverConfig, SolverError, SolverStats, weights, wrms


class BdfIntegrator:
    def __init__(self, residual, scale: np.ndarray, cfg: SolverConfig, stats: SolverStats, groups=None):
        self.f = residual
        self.scale = scale
        self.cfg = cfg
        self.stats = stats
        self.n = scale.size
        self.mat = IterationMatrix(stats, groups, scale)
        self.kmax = cfg.max_order
        self.t = 0.0
        self.t_prev = 0.0

    # ------------------------------------------------------------------
    def start(self, t: float, x: np.ndarray, xd: np.ndarray, horizon: float) -> None:
        """(Re)start at order 1 from a consistent point."""
        cfg = self.cfg
        km = self.kmax + 3
        self.phi = np.zeros((km, self.n))
        self.psi = np.zeros(km)
        self.alpha = np.zeros(km)
        self.beta = np.zeros(km)
        self.gamma = np.zeros(km)
        self.sigma = np.zeros(km)
        self.t = self.t_prev = t
        self.x = x.copy()
        self.xd = xd.copy()
        self.wt = weights(x, cfg.rel_tol, cfg.abs_tol, self.scale)
        h = 0.001 * max(horizon, 0.0) if horizon > 0 else cfg.dt_max
        ypnorm = wrms(xd, self.wt)
        if ypnorm > 0.5 / h:
            h = 0.5 / ypnorm
        h = max(min(h, cfg.dt_max), cfg.dt_min)
        self.h = h
        self.phi[1] = x
        self.phi[2] = h * xd
        self.psi[1] = h
        self.k = 1
        self.kold = 0
        self.hold = 0.0
        self.iphase = 0
        self.ns = 0
        self.cj = 1.0 / h
        self.cjold = 1.0 / h
        self.jcalc = -1
        self.s = 100.0

    def _set_first_step(self, h: float) -> None:
        # on the very first step phi[2] = h x' must follow any change of h
        self.phi[2] *= h / self.h
        self.psi[1] = h
        self.h = h

    # ------------------------------------------------------------------
    def step(self, t_stop: float) -> float:
        """Advance one accepted step without passing ``t_stop``."""
        cfg, st = self.cfg, self.stats
        h = min(self.h, cfg.dt_max)
        rem = t_stop - self.t
        if rem <= 0:
            raise SolverError("step requested with no room before stop time", self.t)
        if h >= rem * (1.0 - 1e-12):
            h = rem
        elif 2.0 * h > rem:
            h = 0.5 * rem
        if self.kold == 0:
            self._set_first_step(h)
        else:
            self.h = h
        phi, psi, alpha, beta, gamma, sigma = self.phi, self.psi, self.alpha, self.beta, self.gamma, self.sigma
        xold = self.t
        ncf = nef = 0
        if self.jcalc == 0:
            self.jcalc = 1
        while True:
            h = self.h
            k = self.k
            kp1, kp2, km1 = k + 1, k + 2, k - 1
            if h != self.hold or k != self.kold:
                self.ns = 0
            self.ns = min(self.ns + 1, self.kold + 2)
            ns = self.ns
            nsp1 = ns + 1
            if kp1 >= ns:
                beta[1] = 1.0
                alpha[1] = 1.0
                temp1 = h
                gamma[1] = 0.0
                sigma[1] = 1.0
                for i in range(2, kp1 + 1):
                    temp2 = psi[i - 1]
                    psi[i - 1] = temp1
                    beta[i] = beta[i - 1] * psi[i - 1] / temp2
                    temp1 = temp2 + h
                    alpha[i] = h / temp1
                    sigma[i] = (i - 1) * sigma[i - 1] * alpha[i]
                    gamma[i] = gamma[i - 1] + alpha[i - 1] / h
                psi[kp1] = temp1
            alphas = 0.0
            alpha0 = 0.0
            for i in range(1, k + 1):
                alphas -= 1.0 / i
                alpha0 -= alpha[i]
            cjlast = self.cj
            self.cj = cj = -alphas / h
            ck = max(abs(alpha[kp1] + alphas - alpha0), alpha[kp1])
            if abs(cj / self.cjold - 1.0) > cfg.jacobian_reuse_tolerance:
                self.jcalc = -1
            if cj != cjlast:
                self.s = 100.0
            if kp1 >= nsp1:
                for j in range(nsp1, kp1 + 1):
                    phi[j] *= beta[j]
            t_new = xold + h
            if t_new - xold <= 0.0 or h < cfg.dt_min:
                raise SolverError(f"step size {h:.3e} s below dt_min", xold)

            # predictor
            y = phi[1:kp1 + 1].sum(axis=0)
            yp = gamma[2:kp1 + 1] @ phi[2:kp1 + 1]
            pnorm = wrms(y, self.wt)

            convgd, e = self._corrector(t_new, y, yp, pnorm)
            if convgd:
                enorm = wrms(e, self.wt)
                erk = sigma[kp1] * enorm
                terk = kp1 * erk
                est = erk
                knew = k
                terkm1 = 0.0
                erkm1 = 0.0
                if k > 1:
                    delta = phi[kp1] + e
                    erkm1 = sigma[k] * wrms(delta, self.wt)
                    terkm1 = k * erkm1
                    if k > 2:
                        delta = phi[k] + delta
                        erkm2 = sigma[k - 1] * wrms(delta, self.wt)
                        terkm2 = (k - 1) * erkm2
                        if max(terkm1, terkm2) <= terk:
                            knew, est = km1, erkm1
                    elif terkm1 <= 0.5 * terk:
                        knew, est = km1, erkm1
                err = ck * enorm
                if err <= 1.0:
                    self._accept(t_new, y, yp, e, k, knew, est, terk, erkm1, kp1, kp2, km1, ns)
                    return self.t

            # failure: restore history
            self.iphase = 1
            if kp1 >= nsp1:
                for j in range(nsp1, kp1 + 1):
                    phi[j] /= beta[j]
            for i in range(2, kp1 + 1):
                psi[i - 1] = psi[i] - h
            if not convgd:
                ncf += 1
                st.newton_failures += 1
                r = 0.25
                hn = h * r
                if ncf >= 10 or hn < cfg.dt_min:
                    raise SolverError("Newton iteration failed repeatedly; step size underflow", xold)
            else:
                nef += 1
                st.error_test_failures += 1
                if nef == 1:
                    self.k = knew
                    r = 0.9 * (2.0 * est + 1e-4) ** (-1.0 / (self.k + 1))
                    r = max(0.25, min(0.9, r))
                elif nef == 2:
                    self.k = knew
                    r = 0.25
                else:
                    self.k = 1
                    r = 0.25
                hn = h * r
                if hn < cfg.dt_min:
                    raise SolverError(f"error test failed with step size {hn:.3e} s below dt_min", xold)
            if self.kold == 0:
                self.psi[1] = hn
                phi[2] *= r
            self.h = hn

    def _corrector(self, t_new, y, yp, pnorm):
        cfg, st = self.cfg, self.stats
        e = np.zeros(self.n)
        y0, yp0 = y.copy(), yp.copy()
        while True:
            cj = self.cj
            if self.jcalc == -1:
                self.mat.evaluate(self.f, t_new, y, yp, cj, self.wt, self.h)
                self.jcalc = 0
                self.cjold = cj
                self.s = 100.0
            else:
                st.jacobian_reuses += 1
            m = 0
            oldnrm = 0.0
            ok = False
            while True:
                delta = self.f(t_new, y, yp)
                st.newton_iterations += 1
                if not np.all(np.isfinite(delta)):
                    break
                delta = self.mat.solve(delta)
                if cj != self.cjold:
                    delta *= 2.0 / (1.0 + cj / self.cjold)
                y -= delta
                e -= delta
                yp -= cj * delta
                delnrm = wrms(delta, self.wt)
                if delnrm <= 100.0 * UROUND * pnorm:
                    ok = True
                    break
                if m > 0:
                    rate = (delnrm / oldnrm) ** (1.0 / m)
                    if rate > 0.9:
                        break
                    self.s = rate / (1.0 - rate)
                else:
                    oldnrm = delnrm
                if self.s * delnrm <= 0.33:
                    ok = True
                    break
                m += 1
                if m >= cfg.newton_max_iters:
                    break
            if ok:
                return True, e
            if self.jcalc == 0:
                return False, e
            # stale matrix: refresh and redo the corrector from the predictor
            self.jcalc = -1
            y[:] = y0
            yp[:] = yp0
            e[:] = 0.0

    def _accept(self, t_new, y, yp, e, k, knew, est, terk, erkm1, kp1, kp2, km1, ns):
        cfg = self.cfg
        phi = self.phi
        h = self.h
        kdiff = k - self.kold
        self.kold = k
        self.hold = h
        self.stats.record_step(t_new, h, k, cfg.record_steps)
        if knew == km1 or k == self.kmax:
            self.iphase = 1
        hnew = h
        if self.iphase == 0:
            self.k = kp1
            hnew = 2.0 * h
        else:
            newk = k
            if knew == km1:
                newk, est = km1, erkm1
            elif k != self.kmax and not (kp1 >= ns or kdiff == 1):
                delta = e - phi[kp2]
                erkp1 = (1.0 / (k + 2)) * wrms(delta, self.wt)
                terkp1 = (k + 2) * erkp1
                if k > 1:
                    if k * erkm1 <= min(terk, terkp1):
                        newk, est = km1, erkm1
                    elif not (terkp1 >= terk or k == self.kmax):
                        newk, est = kp1, erkp1
                elif terkp1 < 0.5 * terk:
                    newk, est = kp1, erkp1
            self.k = newk
            r = (2.0 * est + 1e-4) ** (-1.0 / (newk + 1))
            if r >= 2.0:
                hnew = 2.0 * h
            elif r <= 1.0:
                r = max(0.5, min(0.9, r))
                hnew = h * r
        self.h = hnew
        # update differences (old k)
        if self.kold < self.kmax:
            phi[kp2] = e
        phi[kp1] += e
        for j in range(kp1 - 1, 0, -1):
            phi[j] += phi[j + 1]
        self.t_prev = self.t
        self.t = t_new
        self.x = y.copy()
        self.xd = yp.copy()
        self.wt = weights(self.x, cfg.rel_tol, cfg.abs_tol, self.scale)

    # ------------------------------------------------------------------
    def interpolate(self, tq: float):
        """Dense output on the last accepted step."""
        temp1 = tq - self.t
        yout = self.phi[1].copy()
        ypout = np.zeros(self.n)
        c = 1.0
        d = 0.0
        psi = self.psi
        gam = temp1 / psi[1]
        for j in range(2, self.kold + 2):
            d = d * gam + c / psi[j - 1]
            c = c * gam
            gam = (temp1 + psi[j - 1]) / psi[j]
            yout += c * self.phi[j]
            ypout += d * self.phi[j]
        return yout, ypout

    @property
    def order(self) -> int:
        return self.kold
