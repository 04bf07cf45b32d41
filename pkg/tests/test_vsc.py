import math

import numpy as np
import pytest

from emtsim.vsc import (DelayLine, VscParameterError, VscParams, VscSetpoints, clarke, current_limit,
                        dsc_extract, lvrt_logic, vsc_eval, vsc_initialize)

W = 2 * math.pi * 50


def _ab(t, pos, neg, phi=0.3):
    v = pos * np.exp(1j * (W * t + phi)) + neg * np.exp(-1j * (W * t + phi))
    return np.array([v.real, v.imag])


def test_dsc_separates_sequences_through_delay_line():
    dt = 25e-6
    dl = DelayLine(2, 0.005, dt)
    dl.start(0.0, _ab(0.0, 0.8, 0.2))
    checked = 0
    for k in range(1, 401):
        t = k * dt
        dl.push(t, _ab(t, 0.8, 0.2))
        if t >= 0.005:
            pos, neg = dsc_extract(_ab(t, 0.8, 0.2), dl.lookup(t), W * t + 0.3)
            assert math.hypot(*pos) == pytest.approx(0.8, abs=1e-9)
            assert math.hypot(*neg) == pytest.approx(0.2, abs=1e-9)
            checked += 1
    assert checked == 201
    with pytest.raises(ValueError):
        dl.lookup(0.005)


def test_delay_line_before_history_reads_zero():
    dl = DelayLine(1, 0.005, 25e-6)
    dl.start(0.0, [1.0])
    dl.push(0.001, [2.0])
    assert dl.lookup(0.004)[0] == 0.0
    with pytest.raises(ValueError):
        dl.lookup(0.0061)
    with pytest.raises(ValueError):
        dl.push(0.0005, [0.0])


def test_clarke_of_balanced_set_has_unit_magnitude():
    a, b, c = (math.cos(0.4 - k * 2 * math.pi / 3) for k in range(3))
    assert math.hypot(*clarke(a, b, c)) == pytest.approx(1.0)


def test_lvrt_logic_threshold_and_cap():
    assert lvrt_logic(0.95) == (False, 0.0)
    on, ir = lvrt_logic(0.7)
    assert on and ir == pytest.approx(0.4)
    assert lvrt_logic(0.1)[1] == pytest.approx(1.1)


def test_current_limit_gives_priority_to_reactive_current_in_lvrt():
    (d, q), _ = current_limit((1.0, 0.8), (0, 0), 1.1, lvrt_mode=True)
    assert q == pytest.approx(0.8)
    assert math.hypot(d, q) == pytest.approx(1.1)
    (d, q), (dn, qn) = current_limit((0.6, 0.0), (1.0, 0.0), 1.1, lvrt_mode=False)
    assert (d, q) == (0.6, 0.0) and dn == pytest.approx(0.5)


def test_steady_state_initialization_has_zero_residual():
    p = VscParams()
    v = 1.01 * np.exp(0.7j)
    s, sp = vsc_initialize(p, v, 0.6, 0.2)
    t = 0.0123
    rot = np.exp(1j * W * t)
    v_abc = np.array([(v * rot * np.exp(-2j * math.pi / 3 * k)).real for k in range(3)]) * p.v_base
    # quarter-period delayed alpha-beta of voltage and current
    i = np.conj((0.6 + 0.2j) / v)
    dv, di = v * rot * np.exp(-0.5j * math.pi), i * rot * np.exp(-0.5j * math.pi)
    delayed = (dv.real, dv.imag, di.real, di.imag)
    s_t = s.copy()
    s_t[0:3] = [(i * rot * np.exp(-2j * math.pi / 3 * k)).real * p.i_base for k in range(3)]
    sdot = np.zeros(11)
    sdot[0:3] = [(1j * W * i * rot * np.exp(-2j * math.pi / 3 * k)).real * p.i_base for k in range(3)]
    res, sig = vsc_eval(p, sp, t, s_t, sdot, v_abc, delayed)
    assert np.max(np.abs(res[3:])) < 1e-9
    assert np.max(np.abs(res[:3])) < 1e-6 * p.v_base
    assert sig["p"] == pytest.approx(0.6, abs=1e-9)
    assert sig["q"] == pytest.approx(0.2, abs=1e-9)


def test_parameter_validation():
    with pytest.raises(VscParameterError):
        VscParams(v_lvrt=1.2).validate()
    with pytest.raises(VscParameterError):
        VscParams(tau_current=0).validate()


def test_pll_gains_from_bandwidth():
    p = VscParams()
    wn = 2 * math.pi * 10
    assert p.kp_pll * p.omega_b == pytest.approx(2 * 0.707 * wn)
    assert p.ki_pll * p.omega_b == pytest.approx(wn * wn)
