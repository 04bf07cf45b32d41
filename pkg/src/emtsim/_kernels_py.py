"""Pure-Python device kernels. Line-for-line mirror of ``_kernels.pyx``.

Kernels add their contributions into ``res`` and write monitoring signals
into ``out``; node currents injected by a device are subtracted from the
node KCL rows.
"""
from __future__ import annotations

import math

from ._layout import SG_NOUT, SG_NPAR, SG_PARAMS, VSC_NOUT, VSC_NPAR, VSC_PARAMS

BACKEND = "python"
TWO_PI_3 = 2.0 * math.pi / 3.0
SQRT3 = math.sqrt(3.0)


def layout():
    return SG_PARAMS, VSC_PARAMS, SG_NOUT, VSC_NOUT


def _lag(u, x, t, lo, hi):
    f = (u - x) / t
    if (x >= hi and f > 0.0) or (x <= lo and f < 0.0):
        return 0.0
    return f


def sg_kernel(t, x, xd, res, P, I, out):
    n = P.shape[0]
    for m in range(n):
        p = P[m]
        k0 = int(I[m, 0])
        nd = int(I[m, 1])
        wb = p[0]
        ra = p[1]
        l_l = p[2]
        psi_d = x[k0]
        psi_q = x[k0 + 1]
        psi_0 = x[k0 + 2]
        psi_fd = x[k0 + 3]
        psi_1d = x[k0 + 4]
        psi_1q = x[k0 + 5]
        psi_2q = x[k0 + 6]
        omega = x[k0 + 7]
        delta = x[k0 + 8]

        i_d = p[3] * psi_d + p[4] * psi_fd + p[5] * psi_1d
        i_fd = p[6] * psi_d + p[7] * psi_fd + p[8] * psi_1d
        i_1d = p[9] * psi_d + p[10] * psi_fd + p[11] * psi_1d
        i_q = p[12] * psi_q + p[13] * psi_1q + p[14] * psi_2q
        i_1q = p[15] * psi_q + p[16] * psi_1q + p[17] * psi_2q
        i_2q = p[18] * psi_q + p[19] * psi_1q + p[20] * psi_2q
        i_0 = -psi_0 / l_l

        theta = wb * t + delta
        ca = math.cos(theta)
        sa = math.sin(theta)
        cb = math.cos(theta - TWO_PI_3)
        sb = math.sin(theta - TWO_PI_3)
        cc = math.cos(theta + TWO_PI_3)
        sc = math.sin(theta + TWO_PI_3)
        vb = p[28]
        va_ = x[nd] / vb
        vb_ = x[nd + 1] / vb
        vc_ = x[nd + 2] / vb
        e_d = (2.0 / 3.0) * (va_ * ca + vb_ * cb + vc_ * cc)
        e_q = -(2.0 / 3.0) * (va_ * sa + vb_ * sb + vc_ * sc)
        e_0 = (va_ + vb_ + vc_) / 3.0

        t_e = psi_d * i_q - psi_q * i_d
        p_e = e_d * i_d + e_q * i_q
        q_e = e_q * i_d - e_d * i_q
        v_t = math.sqrt(e_d * e_d + e_q * e_q)
        d_omega = omega - 1.0

        # governor
        g = k0 + 9
        u = p[37] - d_omega / p[30]
        y1 = min(max(x[g], p[36]), p[35])
        res[g] += xd[g] - _lag(u, x[g], p[31], p[36], p[35])
        res[g + 1] += xd[g + 1] - (y1 - x[g + 1]) / p[33]
        p_m = x[g + 1] + (p[32] / p[33]) * (y1 - x[g + 1]) - p[34] * d_omega

        # stabilizer
        s = k0 + 13
        y = d_omega - x[s]
        res[s] += xd[s] - y / p[45]
        res[s + 1] += xd[s + 1] - (y - x[s + 1]) / p[46]
        y = y - x[s + 1]
        res[s + 2] += xd[s + 2] - (y - x[s + 2]) / p[47]
        y1 = x[s + 2]
        y = p_e - x[s + 3]
        res[s + 3] += xd[s + 3] - y / p[48]
        res[s + 4] += xd[s + 4] - (y - x[s + 4]) / p[49]
        y = y - x[s + 4]
        res[s + 5] += xd[s + 5] - (p[51] * y - x[s + 5]) / p[50]
        y2 = x[s + 5]
        uu = y1 + p[52] * y2
        t8 = p[53]
        t9 = p[54]
        mm = int(p[55])
        res[s + 6] += xd[s + 6] - (uu - x[s + 6]) / t9
        o = x[s + 6] + (t8 / t9) * (uu - x[s + 6])
        for k in range(1, 5):
            if k < mm:
                res[s + 6 + k] += xd[s + 6 + k] - (o - x[s + 6 + k]) / t9
                o = x[s + 6 + k]
            else:
                res[s + 6 + k] += xd[s + 6 + k]
        v = p[56] * (o - y2)
        res[s + 11] += xd[s + 11] - (v - x[s + 11]) / p[58]
        o = x[s + 11] + (p[57] / p[58]) * (v - x[s + 11])
        res[s + 12] += xd[s + 12] - (o - x[s + 12]) / p[60]
        o = x[s + 12] + (p[59] / p[60]) * (o - x[s + 12])
        v_s = min(max(o, p[62]), p[61]) if p[65] != 0.0 else 0.0

        # exciter
        e = k0 + 11
        v_err = p[44] - v_t + v_s
        y = x[e] + (p[39] / p[40]) * (v_err - x[e])
        res[e] += xd[e] - (v_err - x[e]) / p[40]
        res[e + 1] += xd[e + 1] - _lag(p[38] * y, x[e + 1], p[41], p[42], p[43])
        if p[64] != 0.0:
            e_fd = min(max(x[e + 1], p[42]), p[43])
        else:
            e_fd = p[66]
        if p[63] != 0.0:
            t_m = p_m / omega
        else:
            t_m = p[67]
            p_m = t_m * omega

        res[k0] += xd[k0] / wb - (e_d + omega * psi_q + ra * i_d)
        res[k0 + 1] += xd[k0 + 1] / wb - (e_q - omega * psi_d + ra * i_q)
        res[k0 + 2] += xd[k0 + 2] / wb - (e_0 + ra * i_0)
        res[k0 + 3] += xd[k0 + 3] / wb - (p[25] * e_fd - p[21] * i_fd)
        res[k0 + 4] += xd[k0 + 4] / wb + p[22] * i_1d
        res[k0 + 5] += xd[k0 + 5] / wb + p[23] * i_1q
        res[k0 + 6] += xd[k0 + 6] / wb + p[24] * i_2q
        res[k0 + 7] += 2.0 * p[26] * xd[k0 + 7] - (t_m - t_e - p[27] * d_omega)
        res[k0 + 8] += xd[k0 + 8] - wb * d_omega

        ib = p[29]
        ia_ = i_d * ca - i_q * sa + i_0
        ib_ = i_d * cb - i_q * sb + i_0
        ic_ = i_d * cc - i_q * sc + i_0
        res[nd] -= ia_ * ib
        res[nd + 1] -= ib_ * ib
        res[nd + 2] -= ic_ * ib

        o_ = out[m]
        o_[0] = ia_
        o_[1] = ib_
        o_[2] = ic_
        o_[3] = i_d
        o_[4] = i_q
        o_[5] = t_e
        o_[6] = p_e
        o_[7] = q_e
        o_[8] = v_t
        o_[9] = e_fd
        o_[10] = p_m
        o_[11] = v_s
        o_[12] = omega
        o_[13] = theta


def vsc_kernel(t, x, xd, res, P, I, D, out):
    n = P.shape[0]
    for m in range(n):
        p = P[m]
        k0 = int(I[m, 0])
        nd = int(I[m, 1])
        wb = p[0]
        vb = p[1]
        ib = p[2]
        va_ = x[nd] / vb
        vb_ = x[nd + 1] / vb
        vc_ = x[nd + 2] / vb
        v_al = (2.0 * va_ - vb_ - vc_) / 3.0
        v_be = (vb_ - vc_) / SQRT3
        ia_ = x[k0] / ib
        ib_ = x[k0 + 1] / ib
        ic_ = x[k0 + 2] / ib
        i_al = (2.0 * ia_ - ib_ - ic_) / 3.0
        i_be = (ib_ - ic_) / SQRT3
        dv_al = D[m, 0]
        dv_be = D[m, 1]
        di_al = D[m, 2]
        di_be = D[m, 3]

        theta = wb * t + x[k0 + 4]
        ct = math.cos(theta)
        st = math.sin(theta)
        # DSC then rotation: positive by -theta, negative by +theta
        pa = 0.5 * (v_al - dv_be)
        pb = 0.5 * (v_be + dv_al)
        na = 0.5 * (v_al + dv_be)
        nb = 0.5 * (v_be - dv_al)
        vdp = pa * ct + pb * st
        vqp = -pa * st + pb * ct
        vdn = na * ct - nb * st
        vqn = na * st + nb * ct
        pa = 0.5 * (i_al - di_be)
        pb = 0.5 * (i_be + di_al)
        na = 0.5 * (i_al + di_be)
        nb = 0.5 * (i_be - di_al)
        idp = pa * ct + pb * st
        iqp = -pa * st + pb * ct
        idn = na * ct - nb * st
        iqn = na * st + nb * ct

        omega_est = 1.0 + p[10] * vqp + x[k0 + 3]
        v_mag = math.sqrt(vdp * vdp + vqp * vqp)
        p_meas = vdp * idp + vqp * iqp
        q_meas = vqp * idp - vdp * iqp
        p_set = p[17] if p[19] != 0.0 else 0.0
        q_set = p[18] if p[20] != 0.0 else 0.0
        p_ref = p_set - p[12] * (omega_est - 1.0)
        q_ref = q_set - p[13] * (v_mag - 1.0)
        e_p = p_ref - p_meas
        e_q = q_ref - q_meas
        kp = p[8]
        ki = p[9]
        i_max = p[16]
        id_raw = kp * e_p + x[k0 + 5]
        lvrt = p[21] != 0.0 and p[22] != 0.0
        if lvrt:
            i_r = p[15] * (p[14] - v_mag)
            if i_r < 0.0:
                i_r = 0.0
            if i_r > i_max:
                i_r = i_max
            iq_raw = -i_r
            iq_ref = iq_raw
            d_room = math.sqrt(max(i_max * i_max - iq_ref * iq_ref, 0.0))
            id_ref = min(max(id_raw, -d_room), d_room)
        else:
            iq_raw = -(kp * e_q + x[k0 + 6])
            mag = math.sqrt(id_raw * id_raw + iq_raw * iq_raw)
            if mag > i_max:
                id_ref = id_raw * i_max / mag
                iq_ref = iq_raw * i_max / mag
            else:
                id_ref = id_raw
                iq_ref = iq_raw
        res[k0 + 5] += xd[k0 + 5] - ki * (e_p + id_ref - id_raw)
        if lvrt:
            res[k0 + 6] += xd[k0 + 6]
        else:
            res[k0 + 6] += xd[k0 + 6] - ki * (e_q + iq_raw - iq_ref)

        # current control; negative-sequence references are zero
        l = p[5]
        kpc = p[6]
        kic = p[7]
        edp = id_ref - idp
        eqp = iq_ref - iqp
        ud = vdp - l * iqp + kpc * edp + x[k0 + 7]
        uq = vqp + l * idp + kpc * eqp + x[k0 + 8]
        res[k0 + 7] += xd[k0 + 7] - kic * edp
        res[k0 + 8] += xd[k0 + 8] - kic * eqp
        if p[23] != 0.0:
            edn = -idn
            eqn = -iqn
            udn = vdn + l * iqn + kpc * edn + x[k0 + 9]
            uqn = vqn - l * idn + kpc * eqn + x[k0 + 10]
            res[k0 + 9] += xd[k0 + 9] - kic * edn
            res[k0 + 10] += xd[k0 + 10] - kic * eqn
        else:
            udn = vdn
            uqn = vqn
            res[k0 + 9] += xd[k0 + 9]
            res[k0 + 10] += xd[k0 + 10]
        c_al = ud * ct - uq * st + udn * ct + uqn * st
        c_be = ud * st + uq * ct - udn * st + uqn * ct
        vca = c_al * vb
        vcb = (-0.5 * c_al + 0.5 * SQRT3 * c_be) * vb
        vcc = (-0.5 * c_al - 0.5 * SQRT3 * c_be) * vb

        r_si = p[3]
        l_si = p[4]
        res[k0] += l_si * xd[k0] + r_si * x[k0] - vca + x[nd]
        res[k0 + 1] += l_si * xd[k0 + 1] + r_si * x[k0 + 1] - vcb + x[nd + 1]
        res[k0 + 2] += l_si * xd[k0 + 2] + r_si * x[k0 + 2] - vcc + x[nd + 2]
        res[k0 + 3] += xd[k0 + 3] - p[11] * vqp
        res[k0 + 4] += xd[k0 + 4] - wb * (omega_est - 1.0)
        res[nd] -= x[k0]
        res[nd + 1] -= x[k0 + 1]
        res[nd + 2] -= x[k0 + 2]

        o_ = out[m]
        o_[0] = v_mag
        o_[1] = p_meas
        o_[2] = q_meas
        o_[3] = p_ref
        o_[4] = q_ref
        o_[5] = id_ref
        o_[6] = iq_ref
        o_[7] = omega_est
        o_[8] = theta
        o_[9] = vdp
        o_[10] = vqp
        o_[11] = idp
        o_[12] = iqp
        o_[13] = idn
        o_[14] = iqn
        o_[15] = vdn
        o_[16] = vqn
        o_[17] = 1.0 if lvrt else 0.0


assert SG_NPAR == 68 and VSC_NPAR == 24
