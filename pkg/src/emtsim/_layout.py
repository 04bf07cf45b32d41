"""Packed parameter layouts shared by the compiled and pure-Python kernels.

Each device type is described by one row of a float64 parameter matrix and
one row of an int64 index matrix (state offset, first node-voltage offset).
"""
from __future__ import annotations

SG_PARAMS = (
    "omega_b", "r_a", "l_l",
    "md00", "md01", "md02", "md10", "md11", "md12", "md20", "md21", "md22",
    "mq00", "mq01", "mq02", "mq10", "mq11", "mq12", "mq20", "mq21", "mq22",
    "r_fd", "r_1d", "r_1q", "r_2q", "efd_gain", "h", "d", "v_base", "i_base",
    "gov_r", "gov_t1", "gov_t2", "gov_t3", "gov_dt", "gov_vmax", "gov_vmin", "p_ref",
    "exc_k", "exc_ta", "exc_tb", "exc_te", "exc_emin", "exc_emax", "v_ref",
    "pss_tw1", "pss_tw2", "pss_t6", "pss_tw3", "pss_tw4", "pss_t7", "pss_ks2", "pss_ks3",
    "pss_t8", "pss_t9", "pss_m", "pss_ks1", "pss_t1", "pss_t2", "pss_t3", "pss_t4",
    "pss_vmax", "pss_vmin",
    "gov_on", "exc_on", "pss_on", "efd_fixed", "tm_fixed",
)
SG_OUTPUTS = ("i_a", "i_b", "i_c", "i_d", "i_q", "t_e", "p_e", "q_e", "v_t", "e_fd", "p_m", "v_s",
              "omega", "theta")

VSC_PARAMS = (
    "omega_b", "v_base", "i_base", "r_si", "l_si", "l_pu", "kp_cc", "ki_cc", "kp_pq", "ki_pq",
    "kp_pll", "ki_pll", "k_f", "k_v", "v_lvrt", "k_lvrt", "i_max", "p_set", "q_set",
    "p_on", "q_on", "lvrt_active", "lvrt_enabled", "neg_on",
)
VSC_OUTPUTS = ("v_pos_mag", "p", "q", "p_ref", "q_ref", "i_d_ref", "i_q_ref", "omega_est", "theta",
               "v_d_pos", "v_q_pos", "i_d_pos", "i_q_pos", "i_d_neg", "i_q_neg", "v_d_neg", "v_q_neg",
               "lvrt")
#: delayed channels per converter (pu): v_alpha, v_beta, i_alpha, i_beta
VSC_DELAYED = 4

SG_NPAR = len(SG_PARAMS)
SG_NOUT = len(SG_OUTPUTS)
VSC_NPAR = len(VSC_PARAMS)
VSC_NOUT = len(VSC_OUTPUTS)

SG = {name: k for k, name in enumerate(SG_PARAMS)}
VSC = {name: k for k, name in enumerate(VSC_PARAMS)}
