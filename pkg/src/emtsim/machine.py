"""Synchronous generator dq model with field, one d-axis and two q-axis
damper windings, plus TGOV1 governor, SEXS exciter and PSS2A stabilizer.

All machine quantities are per unit on the machine base, time in seconds.
Stator currents follow the generator convention (positive out of the
machine), with the q axis leading the d axis by 90 degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

OMEGA_BASE = 2.0 * math.pi * 50.0

#: electrical states of the machine, in kernel order
SG_ELECTRICAL_STATES = ("psi_d", "psi_q", "psi_0", "psi_fd", "psi_1d", "psi_1q", "psi_2q", "omega", "delta")
GOV_STATES = ("gov_x1", "gov_x2")
EXC_STATES = ("exc_ll", "exc_efd")
PSS_STATES = ("pss_w1", "pss_w2", "pss_t6", "pss_w3", "pss_w4", "pss_t7",
              "pss_r1", "pss_r2", "pss_r3", "pss_r4", "pss_r5", "pss_ll1", "pss_ll2")
SG_STATES = SG_ELECTRICAL_STATES + GOV_STATES + EXC_STATES + PSS_STATES
PSS_MAX_RAMP_ORDER = 5


class MachineParameterError(ValueError):
    pass


class InfeasibleOperatingPoint(ValueError):
    pass


@dataclass(frozen=True)
class SgStandardParams:
    """Standard (terminal) parameters. ``t_d1``/``t_d2`` etc. are the
    short-circuit transient and subtransient time constants."""

    s_n: float
    v_n: float
    x_l: float
    r_s: float
    x_d: float
    x_d1: float
    x_d2: float
    t_d1: float
    t_d2: float
    x_q: float
    x_q1: float
    x_q2: float
    t_q1: float
    t_q2: float
    h: float
    d: float = 0.0

    def validate(self) -> None:
        if not self.x_d > self.x_d1 > self.x_d2 > self.x_l > 0:
            raise MachineParameterError(
                f"d-axis reactances must satisfy x_d > x_d' > x_d'' > x_l > 0, got "
                f"{self.x_d}, {self.x_d1}, {self.x_d2}, {self.x_l}")
        if not self.x_q > self.x_q1 > self.x_q2 > self.x_l:
            raise MachineParameterError(
                f"q-axis reactances must satisfy x_q > x_q' > x_q'' > x_l, got "
                f"{self.x_q}, {self.x_q1}, {self.x_q2}, {self.x_l}")
        for name in ("t_d1", "t_d2", "t_q1", "t_q2", "h", "s_n", "v_n"):
            if not getattr(self, name) > 0:
                raise MachineParameterError(f"{name} must be positive")
        if self.r_s < 0:
            raise MachineParameterError("r_s must be non-negative")
        if not (self.t_d1 > self.t_d2 and self.t_q1 > self.t_q2):
            raise MachineParameterError("transient time constants must exceed subtransient ones")

    def open_circuit_time_constants(self) -> tuple[float, float, float, float]:
        t_d01 = self.t_d1 * self.x_d / self.x_d1
        t_d02 = self.t_d2 * self.x_d1 / self.x_d2
        t_q01 = self.t_q1 * self.x_q / self.x_q1
        t_q02 = self.t_q2 * self.x_q1 / self.x_q2
        return t_d01, t_d02, t_q01, t_q02


@dataclass(frozen=True)
class SgFundamentalParams:
    """Winding parameters (pu). Mutual field/damper leakage is neglected."""

    l_l: float
    r_a: float
    l_ad: float
    l_aq: float
    r_fd: float
    l_fd: float
    r_1d: float
    l_1d: float
    r_1q: float
    l_1q: float
    r_2q: float
    l_2q: float
    h: float
    d: float = 0.0
    omega_b: float = OMEGA_BASE

    def d_matrix(self) -> np.ndarray:
        """Flux linkages [psi_d, psi_fd, psi_1d] = M @ [i_d, i_fd, i_1d]."""
        a = self.l_ad
        return np.array([
            [-(a + self.l_l), a, a],
            [-a, a + self.l_fd, a],
            [-a, a, a + self.l_1d],
        ])

    def q_matrix(self) -> np.ndarray:
        a = self.l_aq
        return np.array([
            [-(a + self.l_l), a, a],
            [-a, a + self.l_1q, a],
            [-a, a, a + self.l_2q],
        ])

    @property
    def efd_gain(self) -> float:
        # converts exciter output (non-reciprocal pu) into field-winding voltage
        return self.r_fd / self.l_ad


def _axis_windings(x: float, x1: float, x2: float, t1: float, t2: float, x_l: float, omega_b: float):
    """Exact rotor-circuit identification for one axis.

    The operational inductance x*(1+sT')(1+sT'')/((1+sT0')(1+sT0'')) is
    expanded in partial fractions around the magnetizing branch; each
    pole/residue pair gives one rotor winding (R, L).
    """
    t01 = t1 * x / x1
    t02 = t2 * x1 / x2
    a = x - x_l
    num = np.polymul([t1, 1.0], [t2, 1.0])
    den = np.polymul([t01, 1.0], [t02, 1.0])
    p_poly = np.polysub(x * num, x_l * den)
    roots = np.roots(p_poly)
    if np.any(np.abs(roots.imag) > 1e-9 * np.abs(roots.real)) or np.any(roots.real >= 0):
        raise MachineParameterError("standard parameters do not map to a passive rotor circuit")
    roots = np.sort(roots.real)[::-1]  # slow winding first
    dp = np.polyder(p_poly)
    windings = []
    for p in roots:
        c = np.polyval(den, p) / (np.polyval(dp, p) * p)
        if c <= 0:
            raise MachineParameterError("negative winding inductance from standard parameters")
        l_k = 1.0 / c
        windings.append((float(-p * l_k / omega_b), float(l_k)))
    return a, windings


def standard_to_fundamental(p: SgStandardParams, omega_b: float = OMEGA_BASE) -> SgFundamentalParams:
    p.validate()
    l_ad, ((r_fd, l_fd), (r_1d, l_1d)) = _axis_windings(p.x_d, p.x_d1, p.x_d2, p.t_d1, p.t_d2, p.x_l, omega_b)
    l_aq, ((r_1q, l_1q), (r_2q, l_2q)) = _axis_windings(p.x_q, p.x_q1, p.x_q2, p.t_q1, p.t_q2, p.x_l, omega_b)
    return SgFundamentalParams(
        l_l=p.x_l, r_a=p.r_s, l_ad=l_ad, l_aq=l_aq,
        r_fd=r_fd, l_fd=l_fd, r_1d=r_1d, l_1d=l_1d,
        r_1q=r_1q, l_1q=l_1q, r_2q=r_2q, l_2q=l_2q,
        h=p.h, d=p.d, omega_b=omega_b,
    )


def _axis_standard(l_l, a, windings, omega_b):
    # L(s) = l_l + 1/Y(s), Y(s) = 1/a + sum s/(s L_k + omega_b R_k)
    branches = [np.array([l_k, omega_b * r_k]) for r_k, l_k in windings]
    q = np.array([1.0])
    for b in branches:
        q = np.polymul(q, b)
    n = q / a
    for k in range(len(branches)):
        term = np.array([1.0, 0.0])
        for j, b in enumerate(branches):
            if j != k:
                term = np.polymul(term, b)
        n = np.polyadd(n, term)
    zeros = np.roots(np.polyadd(l_l * n, q)).real
    poles = np.roots(n).real
    t_sc = np.sort(-1.0 / zeros)[::-1]
    t_oc = np.sort(-1.0 / poles)[::-1]
    x = l_l + a
    x1 = x * t_sc[0] / t_oc[0]
    x2 = x1 * t_sc[1] / t_oc[1]
    return float(x), float(x1), float(x2), float(t_sc[0]), float(t_sc[1])


def fundamental_to_standard(f: SgFundamentalParams, s_n: float = 1.0, v_n: float = 1.0) -> SgStandardParams:
    x_d, x_d1, x_d2, t_d1, t_d2 = _axis_standard(
        f.l_l, f.l_ad, [(f.r_fd, f.l_fd), (f.r_1d, f.l_1d)], f.omega_b)
    x_q, x_q1, x_q2, t_q1, t_q2 = _axis_standard(
        f.l_l, f.l_aq, [(f.r_1q, f.l_1q), (f.r_2q, f.l_2q)], f.omega_b)
    return SgStandardParams(
        s_n=s_n, v_n=v_n, x_l=f.l_l, r_s=f.r_a,
        x_d=x_d, x_d1=x_d1, x_d2=x_d2, t_d1=t_d1, t_d2=t_d2,
        x_q=x_q, x_q1=x_q1, x_q2=x_q2, t_q1=t_q1, t_q2=t_q2, h=f.h, d=f.d,
    )


# ----------------------------------------------------------------------------
# electrical model

def sg_residual(p: SgFundamentalParams, s, sdot, v_dq0, e_fd: float, t_m: float):
    """Residual of the nine electrical/mechanical states.

    ``s`` holds (psi_d, psi_q, psi_0, psi_fd, psi_1d, psi_1q, psi_2q, omega,
    delta); ``e_fd`` is the exciter output in non-reciprocal pu. Returns the
    residual and a dict with the stator currents and electrical torque.
    """
    md_inv = np.linalg.inv(p.d_matrix())
    mq_inv = np.linalg.inv(p.q_matrix())
    return _sg_core(p.omega_b, p.r_a, p.l_l, md_inv, mq_inv, p.r_fd, p.r_1d, p.r_1q, p.r_2q,
                    p.efd_gain, p.h, p.d, s, sdot, v_dq0, e_fd, t_m)


def _sg_core(wb, ra, l0, md_inv, mq_inv, r_fd, r_1d, r_1q, r_2q, efd_gain, h, damping,
             s, sdot, v_dq0, e_fd, t_m):
    psi_d, psi_q, psi_0, psi_fd, psi_1d, psi_1q, psi_2q, omega, _ = s
    i_d, i_fd, i_1d = md_inv @ (psi_d, psi_fd, psi_1d)
    i_q, i_1q, i_2q = mq_inv @ (psi_q, psi_1q, psi_2q)
    i_0 = -psi_0 / l0
    e_d, e_q, e_0 = v_dq0
    t_e = psi_d * i_q - psi_q * i_d
    r = np.empty(9)
    r[0] = sdot[0] / wb - (e_d + omega * psi_q + ra * i_d)
    r[1] = sdot[1] / wb - (e_q - omega * psi_d + ra * i_q)
    r[2] = sdot[2] / wb - (e_0 + ra * i_0)
    r[3] = sdot[3] / wb - (efd_gain * e_fd - r_fd * i_fd)
    r[4] = sdot[4] / wb + r_1d * i_1d
    r[5] = sdot[5] / wb + r_1q * i_1q
    r[6] = sdot[6] / wb + r_2q * i_2q
    r[7] = 2.0 * h * sdot[7] - (t_m - t_e - damping * (omega - 1.0))
    r[8] = sdot[8] - wb * (omega - 1.0)
    out = {"i_d": i_d, "i_q": i_q, "i_0": i_0, "i_fd": i_fd, "i_1d": i_1d, "i_1q": i_1q,
           "i_2q": i_2q, "t_e": t_e}
    return r, out


def sg_initialize(p: SgFundamentalParams, v_terminal: complex, p_out: float, q_out: float):
    """Steady state for a terminal voltage phasor and output power (machine base).

    Returns (state[9], e_fd, t_m) where e_fd is the exciter output that holds
    the field current and t_m the mechanical torque.
    """
    if abs(v_terminal) <= 0.0 or not np.isfinite(abs(v_terminal)):
        raise InfeasibleOperatingPoint("terminal voltage must be non-zero")
    current = np.conj((p_out + 1j * q_out) / v_terminal)
    if not np.isfinite(current):
        raise InfeasibleOperatingPoint("operating point gives non-finite current")
    x_q = p.l_aq + p.l_l
    e_q = v_terminal + (p.r_a + 1j * x_q) * current
    if abs(e_q) < 1e-12:
        raise InfeasibleOperatingPoint("q-axis EMF vanishes")
    delta = float(np.angle(e_q)) - math.pi / 2.0
    rot = np.exp(-1j * delta)
    vdq = v_terminal * rot
    idq = current * rot
    v_d, v_q, i_d, i_q = vdq.real, vdq.imag, idq.real, idq.imag
    psi_d = v_q + p.r_a * i_q
    psi_q = -(v_d + p.r_a * i_d)
    x_d = p.l_ad + p.l_l
    i_fd = (psi_d + x_d * i_d) / p.l_ad
    psi_fd = (p.l_ad + p.l_fd) * i_fd - p.l_ad * i_d
    psi_1d = p.l_ad * i_fd - p.l_ad * i_d
    psi_1q = -p.l_aq * i_q
    psi_2q = -p.l_aq * i_q
    state = np.array([psi_d, psi_q, 0.0, psi_fd, psi_1d, psi_1q, psi_2q, 1.0, delta])
    e_fd = p.l_ad * i_fd
    t_m = psi_d * i_q - psi_q * i_d
    if not np.all(np.isfinite(state)):
        raise InfeasibleOperatingPoint("non-finite machine state")
    return state, e_fd, t_m


# ----------------------------------------------------------------------------
# control blocks

def _limited_lag(u, x, t, lo, hi):
    f = (u - x) / t
    if (x >= hi and f > 0.0) or (x <= lo and f < 0.0):
        return 0.0
    return f


class Tgov1Params(NamedTuple):
    r: float = 0.05
    t1: float = 0.5
    t2: float = 3.0
    t3: float = 10.0
    dt: float = 0.0
    v_max: float = 1.0
    v_min: float = 0.0


def tgov1_residual(p: Tgov1Params, x, xdot, d_omega: float, p_ref: float):
    """Returns (residual[2], mechanical power)."""
    u = p_ref - d_omega / p.r
    y1 = min(max(x[0], p.v_min), p.v_max)
    f1 = _limited_lag(u, x[0], p.t1, p.v_min, p.v_max)
    f2 = (y1 - x[1]) / p.t3
    p_m = x[1] + (p.t2 / p.t3) * (y1 - x[1]) - p.dt * d_omega
    return np.array([xdot[0] - f1, xdot[1] - f2]), p_m


def tgov1_init(p: Tgov1Params, p_m: float):
    if not p.v_min <= p_m <= p.v_max:
        raise InfeasibleOperatingPoint(f"mechanical power {p_m:.4f} outside governor limits")
    return np.array([p_m, p_m]), p_m


class SexsParams(NamedTuple):
    k: float = 100.0
    ta: float = 1.0
    tb: float = 10.0
    te: float = 0.1
    e_min: float = 0.0
    e_max: float = 5.0


def sexs_residual(p: SexsParams, x, xdot, v_err: float):
    """``v_err`` is V_ref - V_t + V_pss. Returns (residual[2], e_fd)."""
    f1 = (v_err - x[0]) / p.tb
    y = x[0] + (p.ta / p.tb) * (v_err - x[0])
    f2 = _limited_lag(p.k * y, x[1], p.te, p.e_min, p.e_max)
    e_fd = min(max(x[1], p.e_min), p.e_max)
    return np.array([xdot[0] - f1, xdot[1] - f2]), e_fd


def sexs_init(p: SexsParams, e_fd: float, v_t: float):
    """Returns (states, v_ref)."""
    if not p.e_min <= e_fd <= p.e_max:
        raise InfeasibleOperatingPoint(f"field voltage {e_fd:.4f} outside exciter limits")
    v_err = e_fd / p.k
    return np.array([v_err, e_fd]), v_t + v_err


class Pss2aParams(NamedTuple):
    tw1: float = 2.0
    tw2: float = 2.0
    t6: float = 0.01
    tw3: float = 2.0
    tw4: float = 2.0
    t7: float = 2.0
    ks2: float = 0.2
    ks3: float = 1.0
    t8: float = 0.5
    t9: float = 0.1
    m: int = 5
    ks1: float = 10.0
    t1: float = 0.15
    t2: float = 0.025
    t3: float = 0.15
    t4: float = 0.025
    vst_max: float = 0.1
    vst_min: float = -0.1


def pss2a_residual(p: Pss2aParams, x, xdot, d_omega: float, p_e: float):
    """Dual-input stabilizer. Returns (residual[13], stabilizing signal)."""
    f = np.zeros(13)
    f[0] = (d_omega - x[0]) / p.tw1
    y = d_omega - x[0]
    f[1] = (y - x[1]) / p.tw2
    y = y - x[1]
    f[2] = (y - x[2]) / p.t6
    y1 = x[2]
    f[3] = (p_e - x[3]) / p.tw3
    y = p_e - x[3]
    f[4] = (y - x[4]) / p.tw4
    y = y - x[4]
    f[5] = (p.ks2 * y - x[5]) / p.t7
    y2 = x[5]
    u = y1 + p.ks3 * y2
    m = int(p.m)
    f[6] = (u - x[6]) / p.t9
    o = x[6] + (p.t8 / p.t9) * (u - x[6])
    for k in range(1, m):
        f[6 + k] = (o - x[6 + k]) / p.t9
        o = x[6 + k]
    v = p.ks1 * (o - y2)
    f[11] = (v - x[11]) / p.t2
    o = x[11] + (p.t1 / p.t2) * (v - x[11])
    f[12] = (o - x[12]) / p.t4
    o = x[12] + (p.t3 / p.t4) * (o - x[12])
    v_s = min(max(o, p.vst_min), p.vst_max)
    return np.asarray(xdot, dtype=float) - f, v_s


def pss2a_init(p: Pss2aParams, p_e: float):
    x = np.zeros(13)
    x[3] = p_e
    return x


@dataclass
class GeneratorControls:
    gov: Tgov1Params = field(default_factory=Tgov1Params)
    exc: SexsParams = field(default_factory=SexsParams)
    pss: Pss2aParams = field(default_factory=Pss2aParams)
    gov_enabled: bool = True
    exc_enabled: bool = True
    pss_enabled: bool = True
