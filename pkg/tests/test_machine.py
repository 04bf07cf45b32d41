import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emtsim.machine import (MachineParameterError, SgStandardParams, fundamental_to_standard,
                            sg_initialize, sg_residual, standard_to_fundamental)
from emtsim.netmodel import inverse_park, park, phasor_to_abc


def test_park_balanced_set_maps_to_constant_dq():
    ph = 0.9 * np.exp(0.3j)
    for t in (0.0, 0.0037, 0.013):
        theta = 2 * math.pi * 50 * t
        d, q, z = park(phasor_to_abc(ph, 1.0, t), theta)
        assert d == pytest.approx(ph.real, abs=1e-12)
        assert q == pytest.approx(ph.imag, abs=1e-12)
        assert z == pytest.approx(0.0, abs=1e-12)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(-7, 7))
def test_park_roundtrip(v, theta):
    back = inverse_park(park(v, theta), theta)
    assert np.allclose(back, v, atol=1e-9)


def test_round_trip_all_network_machines(cigre_cfg):
    assert len(cigre_cfg.generators) == 4
    fields = ("x_d", "x_d1", "x_d2", "t_d1", "t_d2", "x_q", "x_q1", "x_q2", "t_q1", "t_q2", "x_l", "r_s")
    for g in cigre_cfg.generators:
        p = g.params
        back = fundamental_to_standard(standard_to_fundamental(p), p.s_n, p.v_n)
        for f in fields:
            assert getattr(back, f) == pytest.approx(getattr(p, f), rel=1e-6, abs=1e-12), (g.id, f)


@settings(max_examples=40, deadline=None)
@given(x_l=st.floats(0.1, 0.2), xd=st.floats(1.5, 2.5), r1=st.floats(0.15, 0.4), r2=st.floats(0.5, 0.9),
       td1=st.floats(0.5, 2.0), td2=st.floats(0.01, 0.05))
def test_round_trip_random(x_l, xd, r1, r2, td1, td2):
    x_d1 = max(xd * r1, x_l * 1.5)
    x_d2 = max(x_d1 * r2, x_l * 1.1)
    p = SgStandardParams(s_n=1, v_n=1, x_l=x_l, r_s=0.003, x_d=xd, x_d1=x_d1, x_d2=x_d2, t_d1=td1,
                         t_d2=td2, x_q=0.9 * xd, x_q1=max(0.9 * x_d1, x_l * 1.3), x_q2=max(x_d2, x_l * 1.05),
                         t_q1=0.5 * td1, t_q2=td2, h=4.0)
    try:
        f = standard_to_fundamental(p)
    except MachineParameterError:
        return
    back = fundamental_to_standard(f)
    for name in ("x_d", "x_d1", "x_d2", "t_d1", "t_d2", "x_q", "x_q1", "x_q2", "t_q1", "t_q2"):
        assert getattr(back, name) == pytest.approx(getattr(p, name), rel=1e-6)


def test_invalid_reactance_order_rejected():
    p = SgStandardParams(s_n=1, v_n=1, x_l=0.1, r_s=0, x_d=0.3, x_d1=0.5, x_d2=0.2, t_d1=1, t_d2=0.03,
                         x_q=1.5, x_q1=0.5, x_q2=0.2, t_q1=0.5, t_q2=0.05, h=3)
    with pytest.raises(MachineParameterError):
        standard_to_fundamental(p)


def test_initialized_machine_is_in_equilibrium(cigre_cfg):
    f = standard_to_fundamental(cigre_cfg.generators[1].params)
    v = 1.02 * np.exp(0.2j)
    state, e_fd, t_m = sg_initialize(f, v, 0.7, 0.25)
    vdq = v * np.exp(-1j * state[8])
    res, out = sg_residual(f, state, np.zeros(9), (vdq.real, vdq.imag, 0.0), e_fd, t_m)
    assert np.max(np.abs(res)) < 1e-12
    # electrical power at the terminal equals the requested output
    idq = complex(out["i_d"], out["i_q"])
    s = vdq * np.conj(idq)
    assert s.real == pytest.approx(0.7, abs=1e-10)
    assert s.imag == pytest.approx(0.25, abs=1e-10)
