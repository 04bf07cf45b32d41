"""Positive-sequence Newton-Raphson power flow and DAE initialization.

The bus admittance matrix is built from the same device parameters the
dynamic model uses (grounding capacitances, constant-impedance loads,
switched shunts, transformer phase shift), so the initialized trajectory is
a sinusoidal steady state of the EMT model.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._layout import SG, VSC
from .machine import pss2a_init, sexs_init, sg_initialize, tgov1_init
from .netmodel import OMEGA_N, NetworkModel, _bases
from .vsc import vsc_initialize

SLACK, PV, PQ = "slack", "pv", "pq"


class PowerFlowDivergence(RuntimeError):
    pass


class InitializationError(RuntimeError):
    pass


@dataclass
class PfSolution:
    bus_ids: list
    v: np.ndarray                 # complex pu on each bus's nominal voltage
    s_inj: np.ndarray             # net complex injection from sources/machines/converters, pu
    iterations: int
    mismatch: float
    s_base_mva: float
    kinds: list = field(default_factory=list)
    branch_flows: dict = field(default_factory=dict)

    def voltage(self, bus_id: str) -> complex:
        return complex(self.v[self.bus_ids.index(bus_id)])


def newton_raphson(ybus: np.ndarray, kinds, v_set, p_spec, q_spec, tol: float = 1e-10,
                   max_iter: int = 30, v0=None):
    """Polar NR on the mismatch equations.

    ``kinds`` holds "slack"/"pv"/"pq" per bus; ``v_set`` gives the voltage
    magnitude (slack, pv) and the slack angle in radians as a complex value
    for slack buses. Returns (V, iterations, max mismatch).
    """
    n = len(kinds)
    kinds = list(kinds)
    if kinds.count(SLACK) != 1:
        raise PowerFlowDivergence("power flow needs exactly one slack bus")
    v_set = np.asarray(v_set, dtype=complex)
    p_spec = np.asarray(p_spec, dtype=float)
    q_spec = np.asarray(q_spec, dtype=float)
    if v0 is None:
        vm = np.ones(n)
        va = np.zeros(n)
    else:
        vm = np.abs(v0).astype(float)
        va = np.angle(v0).astype(float)
    for k, kd in enumerate(kinds):
        if kd == SLACK:
            vm[k] = abs(v_set[k])
            va[k] = np.angle(v_set[k])
        elif kd == PV:
            vm[k] = abs(v_set[k])
    pvpq = [k for k in range(n) if kinds[k] != SLACK]
    pq = [k for k in range(n) if kinds[k] == PQ]
    npv = len(pvpq)
    worst = np.inf
    for it in range(max_iter + 1):
        v = vm * np.exp(1j * va)
        s = v * np.conj(ybus @ v)
        dp = s.real - p_spec
        dq = s.imag - q_spec
        mis = np.concatenate([dp[pvpq], dq[pq]])
        worst = float(np.max(np.abs(mis))) if mis.size else 0.0
        if not np.isfinite(worst):
            break
        if worst <= tol:
            return v, it, worst
        if it == max_iter:
            break
        # derivatives of S w.r.t. angle and magnitude
        ib = ybus @ v
        d_sva = 1j * np.diag(v) @ np.conj(np.diag(ib) - ybus @ np.diag(v))
        d_svm = np.diag(v) @ np.conj(ybus @ np.diag(v / vm)) + np.diag(v / vm) @ np.diag(np.conj(ib))
        jac = np.block([
            [d_sva.real[np.ix_(pvpq, pvpq)], d_svm.real[np.ix_(pvpq, pq)]],
            [d_sva.imag[np.ix_(pq, pvpq)], d_svm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(jac, -mis)
        except np.linalg.LinAlgError:
            raise PowerFlowDivergence("singular power-flow Jacobian (isolated bus?)") from None
        va[pvpq] += dx[:npv]
        vm[pq] += dx[npv:]
        if np.any(vm <= 0) or not np.all(np.isfinite(vm)):
            break
    raise PowerFlowDivergence(f"power flow did not converge (max mismatch {worst:.3e} pu)")


# ----------------------------------------------------------------------------
# network admittance

def _stamp(Y, i, j, y):
    Y[i, i] += y
    Y[j, j] += y
    Y[i, j] -= y
    Y[j, i] -= y


def build_ybus(net: NetworkModel):
    """Positive-sequence admittance matrix in pu on per-bus voltage bases.

    Thevenin sources get an extra internal bus each, appended after the
    network buses. Returns (Y, bus ids, base kV list).
    """
    cfg = net.cfg
    ids = [b.id for b in cfg.buses] + [f"{s.id}:emf" for s in cfg.sources]
    kv = [b.v_kv for b in cfg.buses] + [net.bus_kv[s.bus] for s in cfg.sources]
    n = len(ids)
    idx = {b: k for k, b in enumerate(ids)}
    Y = np.zeros((n, n), dtype=complex)   # SI, per phase
    w = OMEGA_N
    for b in cfg.buses:
        Y[idx[b.id], idx[b.id]] += 1j * w * b.c_ground
    for ln in cfg.lines:
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        _stamp(Y, i, j, 1.0 / complex(ln.r, w * ln.l))
        Y[i, i] += 0.5j * w * ln.c
        Y[j, j] += 0.5j * w * ln.c
    for ld in cfg.loads:
        g, gam = ld.elements(net.bus_kv[ld.bus])
        Y[idx[ld.bus], idx[ld.bus]] += g - 1j * gam / w
    for sh in cfg.shunts:
        c = sh.capacitance(net.bus_kv[sh.bus])
        g = sh.conductances()[0]
        if not all(gg == g for gg in sh.conductances()):
            raise InitializationError(f"shunt {sh.id}: unbalanced breaker state at initialization")
        Y[idx[sh.bus], idx[sh.bus]] += 1.0 / (1.0 / g + 1.0 / (1j * w * c))
    for tr in cfg.transformers:
        h, l = idx[tr.hv_bus], idx[tr.lv_bus]
        r, lh = tr.impedance()
        y = 1.0 / complex(r, w * lh)
        t = tr.complex_ratio()
        Y[h, h] += y
        Y[h, l] -= y * t
        Y[l, h] -= np.conj(t) * y
        Y[l, l] += abs(t) ** 2 * y
    for fl in cfg.faults:
        gs = fl.conductances()
        if not np.allclose(gs, gs[0]):
            raise InitializationError(f"fault {fl.id}: unbalanced fault at initialization")
        Y[idx[fl.bus], idx[fl.bus]] += gs[0]
    for s in cfg.sources:
        _stamp(Y, idx[s.bus], idx[f"{s.id}:emf"], 1.0 / complex(s.r, w * s.l))
    vb = np.array(kv) * 1e3
    y_pu = Y * np.outer(vb, vb) / (cfg.s_base_mva * 1e6)
    return y_pu, ids, kv


def _vsc_injection(net: NetworkModel, m: int, v_mag: float) -> complex:
    c = net.cfg.converters[m]
    p = net.vsc_P[m]
    pp = c.p_mw if p[VSC["p_on"]] else 0.0
    qq = c.q_mvar if p[VSC["q_on"]] else -c.params.k_v * (v_mag - 1.0) * c.params.s_n
    return complex(pp, qq) / net.cfg.s_base_mva


def solve_power_flow(net: NetworkModel, tol: float = 1e-10, max_iter: int = 30) -> PfSolution:
    """Generators are PV buses (the one flagged ``slack`` is the reference),
    converters are PQ injections, everything else enters the admittance
    matrix."""
    cfg = net.cfg
    ybus, ids, _ = build_ybus(net)
    n = len(ids)
    idx = {b: k for k, b in enumerate(ids)}
    kinds = [PQ] * n
    v_set = np.ones(n, dtype=complex)
    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    slack_gen = [g for g in cfg.generators if g.slack]
    if cfg.sources:
        if len(cfg.sources) > 1 or slack_gen:
            raise InitializationError("at most one Thevenin source, and none alongside a slack generator")
        s = cfg.sources[0]
        k = idx[f"{s.id}:emf"]
        kinds[k] = SLACK
        v_set[k] = s.emf_phasor() / _bases(net.bus_kv[s.bus], 1.0)[0]
    elif not slack_gen and cfg.generators:
        raise InitializationError("no slack generator designated")
    for g in cfg.generators:
        k = idx[g.bus]
        if kinds[k] != PQ:
            raise InitializationError(f"bus {g.bus} hosts more than one voltage-controlling device")
        kinds[k] = SLACK if g.slack else PV
        v_set[k] = g.v_set_pu
        if not g.slack:
            p_spec[k] += g.p_mw / cfg.s_base_mva
    if SLACK not in kinds:
        raise InitializationError("network has no slack bus")

    v = None
    total_it = 0
    for _ in range(50):
        p_load = p_spec.copy()
        q_load = q_spec.copy()
        for m, c in enumerate(cfg.converters):
            k = idx[c.bus]
            vm = 1.0 if v is None else abs(v[k])
            inj = _vsc_injection(net, m, vm)
            p_load[k] += inj.real
            q_load[k] += inj.imag
        v_prev = v
        v, it, mis = newton_raphson(ybus, kinds, v_set, p_load, q_load, tol=tol, max_iter=max_iter, v0=v)
        total_it += it
        if v_prev is not None and np.max(np.abs(v - v_prev)) < tol:
            break
        if not cfg.converters:
            break
    s_inj = v * np.conj(ybus @ v)
    flows = {}
    for ln in cfg.lines:
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        flows[ln.id] = complex(-v[i] * np.conj(ybus[i, j] * (v[j] - v[i])))
    return PfSolution(bus_ids=ids, v=v, s_inj=s_inj, iterations=total_it, mismatch=mis,
                      s_base_mva=cfg.s_base_mva, kinds=kinds, branch_flows=flows)


# ----------------------------------------------------------------------------
# initialization

def _sample(phasor: complex, t: float = 0.0):
    """abc samples and their time derivatives of a peak phasor."""
    rot = np.exp(1j * (OMEGA_N * t + np.array([0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0])))
    z = phasor * rot
    return z.real, (1j * OMEGA_N * z).real


@dataclass
class InitReport:
    residual_norm: float
    per_device: dict
    generator_dispatch: dict


def initialize_from_pf(net: NetworkModel, pf: PfSolution, t0: float = 0.0, tol: float = 1e-6):
    """Set every state from the phasor solution sampled at ``t0``.

    Also writes controller references into the model (governor power,
    exciter voltage reference, converter setpoints) and fills the DSC
    history with the steady-state waveform. Returns (x0, xdot0, report).
    """
    cfg, lay = net.cfg, net.layout
    x = np.zeros(lay.n)
    xd = np.zeros(lay.n)
    w = OMEGA_N
    ph = {}  # bus id -> SI peak phasor at t = 0
    for b in cfg.buses:
        v_b, _ = _bases(b.v_kv, 1.0)
        ph[b.id] = complex(pf.voltage(b.id)) * v_b * np.exp(0j)
    rot_t0 = np.exp(1j * w * t0)

    def put(block_id, phasor):
        s = lay.blocks[block_id].start
        a, ad = _sample(phasor * rot_t0)
        x[s:s + 3] = a
        xd[s:s + 3] = ad

    for b in cfg.buses:
        put(f"bus:{b.id}", ph[b.id])
    for ln in cfg.lines:
        put(ln.id, (ph[ln.from_bus] - ph[ln.to_bus]) / complex(ln.r, w * ln.l))
    for ld in cfg.loads:
        _, gam = ld.elements(net.bus_kv[ld.bus])
        put(ld.id, gam * ph[ld.bus] / (1j * w))
    for sh in cfg.shunts:
        c = sh.capacitance(net.bus_kv[sh.bus])
        zr = 1.0 / sh.conductances()[0]
        zc = 1.0 / (1j * w * c)
        put(sh.id, ph[sh.bus] * zc / (zr + zc))
    for tr in cfg.transformers:
        r, l = tr.impedance()
        put(tr.id, (ph[tr.hv_bus] - tr.complex_ratio() * ph[tr.lv_bus]) / complex(r, w * l))
    for s in cfg.sources:
        put(s.id, (s.emf_phasor() - ph[s.bus]) / complex(s.r, w * s.l))

    # converters: PQ setpoints as dispatched by the power flow
    for m, c in enumerate(cfg.converters):
        p = c.params
        v_pu = complex(pf.voltage(c.bus)) * rot_t0
        inj = _vsc_injection(net, m, abs(v_pu)) * cfg.s_base_mva / p.s_n
        state, spt = vsc_initialize(p, v_pu, inj.real, inj.imag)
        blk = lay.blocks[c.id]
        x[blk] = state
        ia, iad = _sample(complex(np.conj(complex(inj) / v_pu)) * p.i_base)
        x[blk.start:blk.start + 3] = ia
        xd[blk.start:blk.start + 3] = iad
        # the droop already holds the measured voltage: fold it into the setpoint
        row = net.vsc_P[m]
        if row[VSC["q_on"]]:
            row[VSC["q_set"]] = spt.q_set
        if row[VSC["p_on"]]:
            row[VSC["p_set"]] = spt.p_set
        row[VSC["lvrt_active"]] = float(spt.lvrt_active)
        x[blk.start + 4] = float(np.angle(v_pu)) - w * t0

    # generators: dispatch is whatever the network draws at the terminal
    dispatch = {}
    idx = {b: k for k, b in enumerate(pf.bus_ids)}
    for m, g in enumerate(cfg.generators):
        k = idx[g.bus]
        s_bus = complex(pf.s_inj[k])
        for mc, c in enumerate(cfg.converters):
            if c.bus == g.bus:
                s_bus -= _vsc_injection(net, mc, abs(pf.v[k]))
        s_m = s_bus * cfg.s_base_mva / g.params.s_n
        f = net.sg_fund[m]
        v_pu = complex(pf.v[k])
        state, e_fd, t_m = sg_initialize(f, v_pu, s_m.real, s_m.imag)
        blk = lay.blocks[g.id].start
        x[blk:blk + 9] = state
        ctl = g.controls
        gx, p_ref = tgov1_init(ctl.gov, t_m) if ctl.gov_enabled else (np.array([t_m, t_m]), t_m)
        ex, v_ref = sexs_init(ctl.exc, e_fd, abs(v_pu)) if ctl.exc_enabled else (
            np.array([e_fd / ctl.exc.k, e_fd]), abs(v_pu) + e_fd / ctl.exc.k)
        x[blk + 9:blk + 11] = gx
        x[blk + 11:blk + 13] = ex
        x[blk + 13:blk + 26] = pss2a_init(ctl.pss, s_m.real)
        row = net.sg_P[m]
        row[SG["p_ref"]] = p_ref
        row[SG["v_ref"]] = v_ref
        row[SG["efd_fixed"]] = e_fd
        row[SG["tm_fixed"]] = t_m
        dispatch[g.id] = {"p_mw": s_bus.real * cfg.s_base_mva, "q_mvar": s_bus.imag * cfg.s_base_mva,
                          "e_fd": e_fd, "t_m": t_m, "delta_rad": float(state[8])}

    net.start_history(t0, x, steady=True)
    res = net.residual(t0, x, xd)
    per_device = {}
    for dev, blk in lay.blocks.items():
        per_device[dev] = float(np.max(np.abs(res[blk]))) if blk.stop > blk.start else 0.0
    norm = float(np.max(np.abs(res)))
    if norm > tol:
        worst = max(per_device, key=per_device.get)
        raise InitializationError(
            f"initial residual {norm:.3e} exceeds {tol:.1e}; worst device {worst} ({per_device[worst]:.3e})")
    return x, xd, InitReport(norm, per_device, dispatch)


def write_pf_report(pf: PfSolution, dest) -> None:
    """Bus table as CSV, to a path or an open text stream."""
    if hasattr(dest, "write"):
        _pf_rows(pf, csv.writer(dest, lineterminator="\n"))
        return
    with open(dest, "w", newline="") as fh:
        _pf_rows(pf, csv.writer(fh))


def _pf_rows(pf: PfSolution, wr) -> None:
    wr.writerow(["bus", "type", "v_pu", "angle_deg", "p_mw", "q_mvar"])
    for k, b in enumerate(pf.bus_ids):
        v = pf.v[k]
        s = pf.s_inj[k] * pf.s_base_mva
        wr.writerow([b, pf.kinds[k] if pf.kinds else "", f"{abs(v):.6f}",
                     f"{math.degrees(np.angle(v)):.6f}", f"{s.real:.6f}", f"{s.imag:.6f}"])
