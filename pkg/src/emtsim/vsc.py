"""Average-value two-level VSC with PLL, DSC sequence separation, dual
frame current control, frequency/voltage droop and LVRT.

Control quantities are per unit on the converter base with peak-value
(amplitude-invariant) dq scaling, so P = v_d i_d + v_q i_q and
Q = v_q i_d - v_d i_q. Injected current is positive into the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT3_2 = math.sqrt(3.0) / 2.0

VSC_STATES = ("i_a", "i_b", "i_c", "pll_int", "pll_phi", "pq_p", "pq_q",
              "cc_dp", "cc_qp", "cc_dn", "cc_qn")


class VscParameterError(ValueError):
    pass


@dataclass(frozen=True)
class VscParams:
    s_n: float = 100.0          # MVA
    v_n: float = 220.0          # kV line-to-line
    r: float = 0.005            # pu filter resistance
    l: float = 0.15             # pu filter reactance
    i_max: float = 1.1
    tau_current: float = 0.01
    tau_pq: float = 0.1
    k_f: float = 20.0
    k_v: float = 10.0
    v_lvrt: float = 0.9
    k_lvrt: float = 2.0
    pll_bandwidth_hz: float = 10.0
    pll_damping: float = 0.707
    f_n: float = 50.0
    neg_seq_control: bool = True
    lvrt_enabled: bool = True

    def validate(self) -> None:
        for name in ("tau_current", "tau_pq", "i_max", "l", "s_n", "v_n", "f_n", "pll_bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise VscParameterError(f"{name} must be positive")
        if not 0.0 < self.v_lvrt < 1.0:
            raise VscParameterError("v_lvrt must lie in (0, 1)")
        if self.r < 0:
            raise VscParameterError("filter resistance must be non-negative")

    @property
    def omega_b(self) -> float:
        return 2.0 * math.pi * self.f_n

    @property
    def v_base(self) -> float:
        """Peak phase voltage base in V."""
        return self.v_n * 1e3 * math.sqrt(2.0 / 3.0)

    @property
    def i_base(self) -> float:
        """Peak phase current base in A."""
        return 2.0 * self.s_n * 1e6 / (3.0 * self.v_base)

    @property
    def z_base(self) -> float:
        return self.v_base / self.i_base

    @property
    def kp_cc(self) -> float:
        return self.l / (self.omega_b * self.tau_current)

    @property
    def ki_cc(self) -> float:
        return self.r / self.tau_current

    @property
    def kp_pq(self) -> float:
        return self.tau_current / self.tau_pq

    @property
    def ki_pq(self) -> float:
        return 1.0 / self.tau_pq

    @property
    def kp_pll(self) -> float:
        wn = 2.0 * math.pi * self.pll_bandwidth_hz
        return 2.0 * self.pll_damping * wn / self.omega_b

    @property
    def ki_pll(self) -> float:
        wn = 2.0 * math.pi * self.pll_bandwidth_hz
        return wn * wn / self.omega_b

    @property
    def quarter_period(self) -> float:
        return 0.25 / self.f_n


# ----------------------------------------------------------------------------
# frame transforms

def clarke(a: float, b: float, c: float) -> tuple[float, float]:
    return (2.0 * a - b - c) / 3.0, (b - c) / math.sqrt(3.0)


def inverse_clarke(alpha: float, beta: float) -> tuple[float, float, float]:
    return alpha, -0.5 * alpha + SQRT3_2 * beta, -0.5 * alpha - SQRT3_2 * beta


def rotate(x: float, y: float, angle: float) -> tuple[float, float]:
    """Multiply (x + jy) by exp(j angle)."""
    c, s = math.cos(angle), math.sin(angle)
    return x * c - y * s, x * s + y * c


# ----------------------------------------------------------------------------
# control chain

def pll_step(v_q_pos: float, x_int: float, xdot_int: float, xdot_phi: float,
             kp: float, ki: float, omega_b: float):
    """SRF-PLL acting on the positive-sequence q voltage.

    Returns (omega_est, residual[2]) for the states (integrator, phase
    offset relative to the nominal rotating frame).
    """
    omega_est = 1.0 + kp * v_q_pos + x_int
    res = (xdot_int - ki * v_q_pos, xdot_phi - omega_b * (omega_est - 1.0))
    return omega_est, res


def dsc_extract(v_now, v_delayed, theta: float):
    """Delayed signal cancellation on alpha-beta vectors.

    ``v_delayed`` is the same signal a quarter of a nominal period earlier.
    Returns the positive-sequence dq pair (frame at +theta) and the
    negative-sequence dq pair (frame at -theta).
    """
    a, b = v_now
    ad, bd = v_delayed
    pa, pb = 0.5 * (a - bd), 0.5 * (b + ad)
    na, nb = 0.5 * (a + bd), 0.5 * (b - ad)
    return rotate(pa, pb, -theta), rotate(na, nb, theta)


def droop_pq(f_meas: float, v_meas: float, p_set: float, q_set: float, k_f: float, k_v: float):
    return p_set - k_f * (f_meas - 1.0), q_set - k_v * (v_meas - 1.0)


def lvrt_logic(v_pos_mag: float, v_lvrt: float = 0.9, k_lvrt: float = 2.0, i_max: float = 1.1):
    """Returns (active, reactive current magnitude to inject)."""
    active = v_pos_mag < v_lvrt
    if not active:
        return False, 0.0
    return True, min(k_lvrt * (v_lvrt - v_pos_mag), i_max)


def current_limit(ref_pos, ref_neg, i_max: float, lvrt_mode: bool):
    """Saturate the positive-sequence reference, then give the negative
    sequence whatever magnitude is left."""
    d, q = ref_pos
    if lvrt_mode:
        q = min(max(q, -i_max), i_max)
        d_room = math.sqrt(max(i_max * i_max - q * q, 0.0))
        d = min(max(d, -d_room), d_room)
    else:
        mag = math.hypot(d, q)
        if mag > i_max:
            d, q = d * i_max / mag, q * i_max / mag
    room = max(i_max - math.hypot(d, q), 0.0)
    dn, qn = ref_neg
    mag_n = math.hypot(dn, qn)
    if mag_n > room:
        if mag_n > 0.0:
            dn, qn = dn * room / mag_n, qn * room / mag_n
    return (d, q), (dn, qn)


def current_control(ref_pos, ref_neg, meas_pos, meas_neg, v_pos, v_neg, x_int, l: float,
                    kp: float, ki: float, neg_enabled: bool = True):
    """PI current control with cross-coupling decoupling and voltage
    feed-forward in both sequence frames.

    Returns (v_conv_pos, v_conv_neg, integrator derivatives[4]).
    """
    edp = ref_pos[0] - meas_pos[0]
    eqp = ref_pos[1] - meas_pos[1]
    vdp = v_pos[0] - l * meas_pos[1] + kp * edp + x_int[0]
    vqp = v_pos[1] + l * meas_pos[0] + kp * eqp + x_int[1]
    if neg_enabled:
        edn = ref_neg[0] - meas_neg[0]
        eqn = ref_neg[1] - meas_neg[1]
        vdn = v_neg[0] + l * meas_neg[1] + kp * edn + x_int[2]
        vqn = v_neg[1] - l * meas_neg[0] + kp * eqn + x_int[3]
        derivs = (ki * edp, ki * eqp, ki * edn, ki * eqn)
    else:
        vdn, vqn = v_neg
        derivs = (ki * edp, ki * eqp, 0.0, 0.0)
    return (vdp, vqp), (vdn, vqn), derivs


def conv_voltage_abc(v_conv_pos, v_conv_neg, theta: float):
    pa, pb = rotate(v_conv_pos[0], v_conv_pos[1], theta)
    na, nb = rotate(v_conv_neg[0], v_conv_neg[1], -theta)
    return inverse_clarke(pa + na, pb + nb)


@dataclass
class VscSetpoints:
    p_set: float = 0.0
    q_set: float = 0.0
    p_enabled: bool = True
    q_enabled: bool = True
    lvrt_active: bool = False


def vsc_eval(p: VscParams, sp: VscSetpoints, t: float, s, sdot, v_node, delayed):
    """Evaluate the converter: residual of its 11 states plus control signals.

    ``s``/``sdot`` follow VSC_STATES (filter currents in A), ``v_node`` is
    the terminal abc voltage in V and ``delayed`` holds (v_alpha, v_beta,
    i_alpha, i_beta) in pu a quarter period earlier.
    """
    vb, ib, wb = p.v_base, p.i_base, p.omega_b
    va, vbeta = clarke(v_node[0] / vb, v_node[1] / vb, v_node[2] / vb)
    ia, ibeta = clarke(s[0] / ib, s[1] / ib, s[2] / ib)
    theta = wb * t + s[4]
    v_pos, v_neg = dsc_extract((va, vbeta), (delayed[0], delayed[1]), theta)
    i_pos, i_neg = dsc_extract((ia, ibeta), (delayed[2], delayed[3]), theta)

    omega_est, pll_res = pll_step(v_pos[1], s[3], sdot[3], sdot[4], p.kp_pll, p.ki_pll, wb)
    v_mag = math.hypot(v_pos[0], v_pos[1])
    p_meas = v_pos[0] * i_pos[0] + v_pos[1] * i_pos[1]
    q_meas = v_pos[1] * i_pos[0] - v_pos[0] * i_pos[1]
    p_ref, q_ref = droop_pq(omega_est, v_mag,
                            sp.p_set if sp.p_enabled else 0.0,
                            sp.q_set if sp.q_enabled else 0.0, p.k_f, p.k_v)
    e_p = p_ref - p_meas
    e_q = q_ref - q_meas
    id_raw = p.kp_pq * e_p + s[5]
    lvrt = sp.lvrt_active and p.lvrt_enabled
    if lvrt:
        i_r = min(max(p.k_lvrt * (p.v_lvrt - v_mag), 0.0), p.i_max)
        iq_raw = -i_r
    else:
        iq_raw = -(p.kp_pq * e_q + s[6])
    ref_pos, ref_neg = current_limit((id_raw, iq_raw), (0.0, 0.0), p.i_max, lvrt)
    dxp = p.ki_pq * e_p + p.ki_pq * (ref_pos[0] - id_raw)
    dxq = 0.0 if lvrt else p.ki_pq * e_q - p.ki_pq * (ref_pos[1] - iq_raw)
    vc_pos, vc_neg, dcc = current_control(ref_pos, ref_neg, i_pos, i_neg, v_pos, v_neg, s[7:11],
                                          p.l, p.kp_cc, p.ki_cc, p.neg_seq_control)
    vc = conv_voltage_abc(vc_pos, vc_neg, theta)

    l_si = p.l * p.z_base / wb
    r_si = p.r * p.z_base
    res = np.empty(11)
    for k in range(3):
        res[k] = l_si * sdot[k] + r_si * s[k] - vb * vc[k] + v_node[k]
    res[3], res[4] = pll_res
    res[5] = sdot[5] - dxp
    res[6] = sdot[6] - dxq
    for k in range(4):
        res[7 + k] = sdot[7 + k] - dcc[k]
    signals = {
        "theta": theta, "omega_est": omega_est, "v_pos_mag": v_mag,
        "v_d_pos": v_pos[0], "v_q_pos": v_pos[1], "v_d_neg": v_neg[0], "v_q_neg": v_neg[1],
        "i_d_pos": i_pos[0], "i_q_pos": i_pos[1], "i_d_neg": i_neg[0], "i_q_neg": i_neg[1],
        "p": p_meas, "q": q_meas, "p_ref": p_ref, "q_ref": q_ref,
        "i_d_ref": ref_pos[0], "i_q_ref": ref_pos[1], "lvrt": float(lvrt),
    }
    return res, signals


def vsc_initialize(p: VscParams, v_terminal: complex, p_out: float, q_out: float):
    """Steady state for a terminal voltage phasor (pu, peak-aligned at t=0)
    and injected power (pu on converter base).

    Returns (state vector with SI filter currents, setpoints).
    """
    if abs(v_terminal) == 0.0:
        raise VscParameterError("terminal voltage must be non-zero")
    cur = np.conj((p_out + 1j * q_out) / v_terminal)
    phi = float(np.angle(v_terminal))
    rot = np.exp(-1j * phi)
    idq = cur * rot
    vmag = abs(v_terminal)
    i_d, i_q = idq.real, idq.imag
    s = np.zeros(11)
    ph = np.exp(-2j * math.pi / 3.0 * np.arange(3))
    s[0:3] = np.real(cur * ph) * p.i_base
    s[3] = 0.0
    s[4] = phi
    s[5] = i_d
    s[6] = -i_q
    s[7] = p.r * i_d
    s[8] = p.r * i_q
    sp = VscSetpoints(p_set=p_out, q_set=q_out + p.k_v * (vmag - 1.0),
                      lvrt_active=p.lvrt_enabled and vmag < p.v_lvrt)
    return s, sp


# ----------------------------------------------------------------------------
# quarter-period delay line

class DelayLine:
    """Ring buffer of signals on a fixed sampling grid, fed from accepted
    solver points by linear interpolation and read back with interpolation.

    Samples before the first pushed point read as zero unless prefilled.
    """

    def __init__(self, channels: int, delay: float, dt: float = 25e-6):
        self.dt = dt
        self.delay = delay
        self.channels = channels
        self.capacity = int(math.ceil(delay / dt)) + 16
        self.buf = np.zeros((self.capacity, channels))
        self.k_first = None
        self.k_last = None
        self.t_last = None
        self.v_last = None
        self._cache_t = None
        self._cache_v = None

    def copy(self) -> "DelayLine":
        d = DelayLine(self.channels, self.delay, self.dt)
        d.buf = self.buf.copy()
        d.k_first, d.k_last = self.k_first, self.k_last
        d.t_last = self.t_last
        d.v_last = None if self.v_last is None else self.v_last.copy()
        return d

    def _grid_index(self, t: float) -> int:
        # tolerate round-off just below a grid point
        return int(math.floor(t / self.dt + 1e-9))

    def start(self, t0: float, values) -> None:
        """Begin a zero-padded history at t0."""
        values = np.asarray(values, dtype=float)
        k0 = self._grid_index(t0)
        self.buf[:] = 0.0
        self.k_first = k0 + 1
        self.k_last = k0
        self.t_last = t0
        self.v_last = values.copy()
        if abs(k0 * self.dt - t0) < 1e-12:
            self.buf[k0 % self.capacity] = values
            self.k_first = k0
        self._cache_t = None

    def prefill(self, t0: float, func) -> None:
        """History from a callable ``func(t) -> values`` up to t0."""
        k0 = self._grid_index(t0)
        for k in range(k0 - self.capacity + 1, k0 + 1):
            self.buf[k % self.capacity] = func(k * self.dt)
        self.k_first = k0 - self.capacity + 1
        self.k_last = k0
        self.t_last = t0
        self.v_last = np.asarray(func(t0), dtype=float)
        self._cache_t = None

    def push(self, t: float, values) -> None:
        values = np.asarray(values, dtype=float)
        if self.t_last is None:
            self.start(t, values)
            return
        if t < self.t_last:
            raise ValueError("delay line fed out of order")
        span = t - self.t_last
        k = self.k_last + 1
        while k * self.dt <= t + 1e-15:
            tk = k * self.dt
            w = 0.0 if span <= 0.0 else (tk - self.t_last) / span
            self.buf[k % self.capacity] = self.v_last + w * (values - self.v_last)
            self.k_last = k
            k += 1
        self.t_last = t
        self.v_last = values.copy()
        self._cache_t = None

    def lookup(self, t: float) -> np.ndarray:
        """Values at absolute time ``t - delay``."""
        if self._cache_t == t:
            return self._cache_v
        tau = t - self.delay
        if self.t_last is None or tau > self.t_last + 1e-12:
            raise ValueError("delayed sample requested beyond committed history")
        k = self._grid_index(tau)
        if k <= self.k_last - self.capacity:
            raise ValueError("delayed sample already overwritten in the ring buffer")
        frac = tau / self.dt - k
        if frac < 1e-9:
            frac = 0.0
        if k < self.k_first:
            lo = np.zeros(self.channels)
        else:
            lo = self.buf[k % self.capacity]
        if frac == 0.0:
            out = lo.copy()
        else:
            if k + 1 <= self.k_last:
                hi = self.buf[(k + 1) % self.capacity] if k + 1 >= self.k_first else np.zeros(self.channels)
                out = lo + frac * (hi - lo)
            else:
                # between the last grid sample and the last committed point
                span = self.t_last - k * self.dt
                w = 0.0 if span <= 0.0 else (tau - k * self.dt) / span
                out = lo + w * (self.v_last - lo)
        self._cache_t = t
        self._cache_v = out
        return out
