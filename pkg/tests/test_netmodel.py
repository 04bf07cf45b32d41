import copy
import json

import numpy as np
import pytest

from emtsim.harness import initialize
from emtsim.harness.scenario import data_dir
from emtsim.netmodel import NetworkConfigError, build_network, load_network


def _raw(name):
    return json.loads((data_dir() / name).read_text())


def test_cigre_device_counts(cigre_cfg):
    c = cigre_cfg
    assert len(c.buses) == 12
    assert len(c.lines) == 8
    assert len(c.loads) == 5
    assert len(c.transformers) == 6
    assert len(c.generators) == 4
    assert len(c.converters) == 1
    assert sum(g.slack for g in c.generators) == 1
    net = build_network(c)
    states = 3 * (len(c.buses) + len(c.lines) + len(c.loads) + len(c.shunts) + len(c.transformers)
                  + len(c.sources)) + 26 * 4 + 11
    assert net.layout.n == states


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d["buses"].append(dict(d["buses"][0])), "duplicate bus"),
    (lambda d: d["lines"][0].update(to_bus="99"), "unknown bus"),
    (lambda d: d["transformers"][0].update(vector_group="Dy1"), "vector group"),
    (lambda d: d["loads"][0].update(p_mw=-1), "non-negative"),
    (lambda d: d["lines"][0].update(x_ohm_per_km=0), "inductance"),
    (lambda d: d["loads"][0].pop("bus"), "missing"),
])
def test_invalid_networks_rejected(mutate, msg):
    d = copy.deepcopy(_raw("surrogate_4bus.json"))
    mutate(d)
    with pytest.raises(NetworkConfigError, match=msg):
        build_network(load_network(d))


def _two_bus():
    return {
        "name": "rl", "buses": [{"id": "1", "v_kv": 220.0}],
        "loads": [{"id": "LD", "bus": "1", "p_mw": 200.0, "q_mvar": 80.0}],
        "sources": [{"id": "S", "bus": "1", "v_kv": 230.0, "r_ohm": 1.0, "l_h": 0.08}],
    }


def test_initialized_point_satisfies_kcl_and_load_law():
    init = initialize(build_network(load_network(_two_bus())))
    net = init.net
    res = net.residual(0.0, init.x0, init.xd0)
    assert np.max(np.abs(res)) < 1e-6
    pf = init.pf
    v = abs(pf.voltage("1"))
    # the source EMF is a virtual slack bus behind its impedance
    e, s_e = pf.voltage("S:emf"), pf.s_inj[pf.bus_ids.index("S:emf")]
    z = (1.0 + 1j * 2 * np.pi * 50 * 0.08) / (220.0 ** 2 / pf.s_base_mva)
    s_bus = (s_e - abs(s_e / e) ** 2 * z) * pf.s_base_mva
    # constant-impedance load draws P, Q scaled by |V|^2 (plus the tiny grounding capacitance)
    assert s_bus.real == pytest.approx(200.0 * v * v, rel=1e-6)
    assert s_bus.imag == pytest.approx(80.0 * v * v, rel=1e-3)


def test_residual_is_pure_between_commits(surrogate_init):
    net, x, xd = surrogate_init.net, surrogate_init.x0, surrogate_init.xd0
    r1 = net.residual(0.0, x + 1e-3 * net.layout.scale, xd)
    r2 = net.residual(0.0, x + 1e-3 * net.layout.scale, xd)
    assert np.array_equal(r1, r2)


def test_sparsity_pattern_covers_dense_jacobian(surrogate_init):
    from emtsim.solver import fd_jacobian
    net, x, xd = surrogate_init.net, surrogate_init.x0, surrogate_init.xd0
    jac = fd_jacobian(net.residual, 0.001, x, xd, 1e4, net.layout.scale, 1e-5)
    pat = net.sparsity_pattern().toarray()
    outside = np.abs(jac[~pat])
    assert outside.max(initial=0.0) < 1e-6 * np.abs(jac).max()


def test_breaker_event_changes_shunt_current_only_at_closed_phases():
    d = _two_bus()
    d["shunts"] = [{"id": "CB", "bus": "1", "q_mvar": 50.0, "closed": [False, False, False]}]
    init = initialize(build_network(load_network(d)))
    net = init.net
    before = net.channel_values(0.0, init.x0)
    names = net.channel_names()
    ia = names.index("i_CB_a")
    assert abs(before[ia]) < 1.0
    net.apply_event({"kind": "breaker", "shunt": "CB", "phases": "a", "closed": True})
    after = net.channel_values(0.0, init.x0)
    assert abs(after[ia]) > 50.0
    assert abs(after[names.index("i_CB_b")]) < 1.0
    with pytest.raises(NetworkConfigError):
        net.apply_event({"kind": "breaker", "shunt": "nope"})
