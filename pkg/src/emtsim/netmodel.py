"""Three-phase network model and global DAE residual F(t, x, x') = 0.

Every variable is a differential state. Node voltages carry a small
grounding capacitance, so the iteration matrix stays nonsingular and no
algebraic constraints arise. The linear network part is kept as sparse
matrices ``F_lin = M x' + K x - u(t)``; machines and converters are added
by the kernels in :mod:`emtsim.kernels`.

Units: node voltages in V, branch currents in A, machine states in pu on
the machine base, converter control states in pu on the converter base.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

from . import kernels
from ._layout import SG, SG_NOUT, SG_NPAR, SG_OUTPUTS, VSC, VSC_NOUT, VSC_NPAR, VSC_OUTPUTS
from .machine import (SG_STATES, GeneratorControls, Pss2aParams, SexsParams, SgStandardParams,
                      Tgov1Params, standard_to_fundamental)
from .vsc import VSC_STATES, DelayLine, VscParams

PHASES = "abc"
F_NOMINAL = 50.0
OMEGA_N = 2.0 * math.pi * F_NOMINAL
OPEN_RESISTANCE = 1e6
FAULT_OFF_CONDUCTANCE = 1e-6
DEFAULT_GROUNDING_C = 1e-9


class NetworkConfigError(ValueError):
    """Invalid network description."""


# ----------------------------------------------------------------------------
# Park transform

_SHIFT = np.array([0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0])


def park(v_abc, theta: float) -> np.ndarray:
    """Amplitude-invariant Park transform; d axis on the phase-a peak at theta."""
    v = np.asarray(v_abc, dtype=float)
    ang = theta + _SHIFT
    d = 2.0 / 3.0 * np.dot(v, np.cos(ang))
    q = -2.0 / 3.0 * np.dot(v, np.sin(ang))
    return np.array([d, q, v.sum() / 3.0])


def inverse_park(v_dq0, theta: float) -> np.ndarray:
    d, q, z = v_dq0
    ang = theta + _SHIFT
    return d * np.cos(ang) - q * np.sin(ang) + z


def phasor_to_abc(phasor: complex, amplitude: float = 1.0, t: float = 0.0, omega: float = OMEGA_N) -> np.ndarray:
    """Instantaneous balanced set with phase-a phasor ``phasor`` (peak scaling)."""
    rot = phasor * np.exp(1j * (omega * t + _SHIFT))
    return amplitude * rot.real


# ----------------------------------------------------------------------------
# device descriptions

def _bases(v_kv: float, s_mva: float) -> tuple[float, float]:
    v_b = v_kv * 1e3 * math.sqrt(2.0 / 3.0)
    return v_b, 2.0 * s_mva * 1e6 / (3.0 * v_b)


@dataclass
class Bus:
    id: str
    v_kv: float
    c_ground: float = DEFAULT_GROUNDING_C


@dataclass
class PiLine:
    id: str
    from_bus: str
    to_bus: str
    r: float
    l: float
    c: float
    n_states = 3


@dataclass
class RlLoad:
    id: str
    bus: str
    p_mw: float
    q_mvar: float
    n_states = 3

    def elements(self, v_kv: float) -> tuple[float, float]:
        """(conductance S, inverse inductance 1/H) per phase."""
        v2 = (v_kv * 1e3) ** 2
        return self.p_mw * 1e6 / v2, OMEGA_N * self.q_mvar * 1e6 / v2


@dataclass
class ShuntCapacitor:
    id: str
    bus: str
    q_mvar: float
    closed: list = field(default_factory=lambda: [True, True, True])
    r_on: float = 1.0
    r_off: float = OPEN_RESISTANCE
    n_states = 3

    def capacitance(self, v_kv: float) -> float:
        return self.q_mvar * 1e6 / (OMEGA_N * (v_kv * 1e3) ** 2)

    def conductances(self) -> np.ndarray:
        return np.array([1.0 / (self.r_on if c else self.r_off) for c in self.closed])


@dataclass
class Transformer:
    id: str
    hv_bus: str
    lv_bus: str
    s_mva: float
    v_hv_kv: float
    v_lv_kv: float
    x_pu: float
    r_pu: float = 0.0
    vector_group: str = "YNd11"
    n_states = 3

    @property
    def ratio(self) -> float:
        return self.v_hv_kv / self.v_lv_kv

    def impedance(self) -> tuple[float, float]:
        """Series (R ohm, L henry) referred to the HV side."""
        z_b = (self.v_hv_kv * 1e3) ** 2 / (self.s_mva * 1e6)
        return self.r_pu * z_b, self.x_pu * z_b / OMEGA_N

    def complex_ratio(self) -> complex:
        if self.vector_group == "YNd11":
            return self.ratio * complex(math.cos(-math.pi / 6), math.sin(-math.pi / 6))
        return complex(self.ratio, 0.0)

    def emf_matrix(self) -> np.ndarray:
        """HV-referred winding EMF = E @ v_lv; LV node injection = E.T @ i."""
        if self.vector_group == "YNd11":
            k = self.ratio / math.sqrt(3.0)
            return k * np.array([[1.0, 0.0, -1.0], [-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
        return self.ratio * np.eye(3)


@dataclass
class FaultBranch:
    id: str
    bus: str
    phases: str
    r_ohm: float
    active: bool = False
    n_states = 0

    def conductances(self) -> np.ndarray:
        if not self.active:
            return np.full(3, FAULT_OFF_CONDUCTANCE)
        return np.array([1.0 / self.r_ohm if ph in self.phases else FAULT_OFF_CONDUCTANCE for ph in PHASES])


@dataclass
class TheveninSource:
    id: str
    bus: str
    v_kv: float
    angle_deg: float
    r: float
    l: float
    n_states = 3

    def emf_phasor(self) -> complex:
        return self.v_kv * 1e3 * math.sqrt(2.0 / 3.0) * np.exp(1j * math.radians(self.angle_deg))


@dataclass
class Generator:
    id: str
    bus: str
    params: SgStandardParams
    controls: GeneratorControls
    p_mw: float = 0.0
    v_set_pu: float = 1.0
    slack: bool = False
    n_states = len(SG_STATES)


@dataclass
class Converter:
    id: str
    bus: str
    params: VscParams
    p_mw: float
    q_mvar: float
    p_enable_s: float = 0.0
    q_enable_s: float = 0.0
    n_states = len(VSC_STATES)


DEVICE_ORDER = ("lines", "loads", "shunts", "transformers", "sources", "generators", "converters")


@dataclass
class NetworkConfig:
    name: str
    buses: list
    lines: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    shunts: list = field(default_factory=list)
    transformers: list = field(default_factory=list)
    sources: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    converters: list = field(default_factory=list)
    faults: list = field(default_factory=list)
    s_base_mva: float = 100.0


@dataclass
class DaeLayout:
    names: list
    index: dict
    blocks: dict
    scale: np.ndarray
    row_scale: np.ndarray
    differential: np.ndarray

    @property
    def n(self) -> int:
        return len(self.names)


# ----------------------------------------------------------------------------
# JSON loading

def _req(d: dict, key: str, where: str):
    if key not in d:
        raise NetworkConfigError(f"{where}: missing key '{key}'")
    return d[key]


def _line_from_json(d: dict) -> PiLine:
    where = f"line {d.get('id', '?')}"
    if "length_km" in d:
        km = float(d["length_km"])
        r = float(_req(d, "r_ohm_per_km", where)) * km
        l = float(_req(d, "x_ohm_per_km", where)) * km / OMEGA_N
        c = float(d.get("c_nf_per_km", 0.0)) * 1e-9 * km
    else:
        r = float(_req(d, "r_ohm_per_phase", where))
        l = float(_req(d, "l_h_per_phase", where))
        c = float(d.get("c_f_per_phase", 0.0))
    return PiLine(str(_req(d, "id", where)), str(_req(d, "from_bus", where)),
                  str(_req(d, "to_bus", where)), r, l, c)


def _generator_from_json(d: dict) -> Generator:
    where = f"generator {d.get('id', '?')}"
    keys = ("s_n_mva", "v_n_kv", "x_l", "r_s", "x_d", "x_d1", "x_d2", "t_d1_s", "t_d2_s",
            "x_q", "x_q1", "x_q2", "t_q1_s", "t_q2_s", "h_s")
    m = _req(d, "machine", where)
    vals = [float(_req(m, k, where)) for k in keys]
    params = SgStandardParams(*vals, d=float(m.get("d", 0.0)))
    ctl = d.get("controls", {})
    controls = GeneratorControls(
        gov=Tgov1Params(**ctl.get("tgov1", {})),
        exc=SexsParams(**ctl.get("sexs", {})),
        pss=Pss2aParams(**ctl.get("pss2a", {})),
        gov_enabled=bool(ctl.get("gov_enabled", True)),
        exc_enabled=bool(ctl.get("exc_enabled", True)),
        pss_enabled=bool(ctl.get("pss_enabled", True)),
    )
    return Generator(str(_req(d, "id", where)), str(_req(d, "bus", where)), params, controls,
                     p_mw=float(d.get("p_mw", 0.0)), v_set_pu=float(d.get("v_set_pu", 1.0)),
                     slack=bool(d.get("slack", False)))


def _converter_from_json(d: dict) -> Converter:
    where = f"converter {d.get('id', '?')}"
    kw = {}
    ren = {"s_mva": "s_n", "v_kv": "v_n"}
    for k, v in d.get("params", {}).items():
        kw[ren.get(k, k)] = v
    params = VscParams(**kw)
    return Converter(str(_req(d, "id", where)), str(_req(d, "bus", where)), params,
                     float(d.get("p_mw", 0.0)), float(d.get("q_mvar", 0.0)),
                     float(d.get("p_enable_s", 0.0)), float(d.get("q_enable_s", 0.0)))


def config_from_dict(data: dict) -> NetworkConfig:
    try:
        buses = [Bus(str(b["id"]), float(b["v_kv"]), float(b.get("c_ground_f", DEFAULT_GROUNDING_C)))
                 for b in data["buses"]]
        cfg = NetworkConfig(
            name=str(data.get("name", "network")),
            buses=buses,
            lines=[_line_from_json(d) for d in data.get("lines", [])],
            loads=[RlLoad(str(d["id"]), str(d["bus"]), float(d["p_mw"]), float(d["q_mvar"]))
                   for d in data.get("loads", [])],
            shunts=[ShuntCapacitor(str(d["id"]), str(d["bus"]), float(d["q_mvar"]),
                                   closed=[bool(c) for c in d.get("closed", [True] * 3)],
                                   r_on=float(d.get("r_on_ohm", 1.0)),
                                   r_off=float(d.get("r_off_ohm", OPEN_RESISTANCE)))
                    for d in data.get("shunts", [])],
            transformers=[Transformer(str(d["id"]), str(d["hv_bus"]), str(d["lv_bus"]),
                                      float(d["s_mva"]), float(d["v_hv_kv"]), float(d["v_lv_kv"]),
                                      float(d["x_pu"]), float(d.get("r_pu", 0.0)),
                                      str(d.get("vector_group", "YNd11")))
                          for d in data.get("transformers", [])],
            sources=[TheveninSource(str(d["id"]), str(d["bus"]), float(d["v_kv"]),
                                    float(d.get("angle_deg", 0.0)), float(d.get("r_ohm", 0.0)),
                                    float(d["l_h"]))
                     for d in data.get("sources", [])],
            generators=[_generator_from_json(d) for d in data.get("generators", [])
                        if d.get("in_service", True)],
            converters=[_converter_from_json(d) for d in data.get("converters", [])
                        if d.get("in_service", True)],
            faults=[FaultBranch(str(d["id"]), str(d["bus"]), str(d.get("phases", "abc")),
                                float(d["r_ohm"]))
                    for d in data.get("faults", [])],
            s_base_mva=float(data.get("s_base_mva", 100.0)),
        )
    except KeyError as exc:
        raise NetworkConfigError(f"missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NetworkConfigError):
            raise
        raise NetworkConfigError(str(exc)) from None
    return cfg


def load_network(source) -> NetworkConfig:
    """Parse a network description from a path, JSON string or dict."""
    if isinstance(source, NetworkConfig):
        return copy.deepcopy(source)
    if isinstance(source, dict):
        return config_from_dict(source)
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise NetworkConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise NetworkConfigError(f"cannot read {path}: {exc}") from None
    return config_from_dict(data)


# ----------------------------------------------------------------------------
# model

class NetworkModel:
    """Assembled DAE for one network configuration.

    Device parameters may change through :meth:`apply_event`; the variable
    layout never does.
    """

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self._validate()
        self.bus_index = {b.id: k for k, b in enumerate(cfg.buses)}
        self.bus_kv = {b.id: b.v_kv for b in cfg.buses}
        self.layout = self._build_layout()
        self._kernel_setup()
        self.assemble()
        self.residual_calls = 0

    # -- construction -------------------------------------------------------
    def _validate(self) -> None:
        cfg = self.cfg
        ids = [b.id for b in cfg.buses]
        if len(set(ids)) != len(ids):
            raise NetworkConfigError("duplicate bus ids")
        known = set(ids)
        for b in cfg.buses:
            if not b.v_kv > 0:
                raise NetworkConfigError(f"bus {b.id}: nominal voltage must be positive")
            if not b.c_ground > 0:
                raise NetworkConfigError(f"bus {b.id}: grounding capacitance must be positive")
        seen = set()
        for group in DEVICE_ORDER + ("faults",):
            for dev in getattr(cfg, group):
                if dev.id in seen:
                    raise NetworkConfigError(f"duplicate device id '{dev.id}'")
                seen.add(dev.id)
                for attr in ("bus", "from_bus", "to_bus", "hv_bus", "lv_bus"):
                    ref = getattr(dev, attr, None)
                    if ref is not None and ref not in known:
                        raise NetworkConfigError(f"{dev.id}: unknown bus '{ref}'")
        for ln in cfg.lines:
            if not ln.l > 0:
                raise NetworkConfigError(f"line {ln.id}: inductance must be positive")
            if ln.r < 0 or ln.c < 0:
                raise NetworkConfigError(f"line {ln.id}: negative resistance or capacitance")
        for ld in cfg.loads:
            if ld.p_mw < 0 or ld.q_mvar < 0 or (ld.p_mw == 0 and ld.q_mvar == 0):
                raise NetworkConfigError(f"load {ld.id}: p and q must be non-negative and not both zero")
        for sh in cfg.shunts:
            if not sh.q_mvar > 0:
                raise NetworkConfigError(f"shunt {sh.id}: q_mvar must be positive")
        for tr in cfg.transformers:
            if not tr.x_pu > 0:
                raise NetworkConfigError(f"transformer {tr.id}: leakage reactance must be positive")
            if tr.vector_group not in ("YNd11", "YNyn0"):
                raise NetworkConfigError(f"transformer {tr.id}: unsupported vector group {tr.vector_group}")
        for src in cfg.sources:
            if not src.l > 0:
                raise NetworkConfigError(f"source {src.id}: inductance must be positive")
        for fl in cfg.faults:
            if not fl.r_ohm > 0 or not set(fl.phases) <= set(PHASES) or not fl.phases:
                raise NetworkConfigError(f"fault {fl.id}: invalid resistance or phases")
        for g in cfg.generators:
            g.params.validate()
        for c in cfg.converters:
            c.params.validate()
        if sum(g.slack for g in cfg.generators) > 1:
            raise NetworkConfigError("more than one slack generator")

    def _build_layout(self) -> DaeLayout:
        cfg = self.cfg
        names, scale, row_scale, blocks = [], [], [], {}
        s_ref = cfg.s_base_mva

        def add(dev_id, labels, sc, rs):
            start = len(names)
            names.extend(f"{dev_id}.{lab}" for lab in labels)
            scale.extend(sc)
            row_scale.extend(rs)
            blocks[dev_id] = slice(start, len(names))

        for b in cfg.buses:
            v_b, i_b = _bases(b.v_kv, s_ref)
            add(f"bus:{b.id}", [f"v_{p}" for p in PHASES], [v_b] * 3, [1.0 / i_b] * 3)
        for ln in cfg.lines:
            v_b, i_b = _bases(self.bus_kv[ln.from_bus], s_ref)
            add(ln.id, [f"i_{p}" for p in PHASES], [i_b] * 3, [1.0 / v_b] * 3)
        for ld in cfg.loads:
            v_b, i_b = _bases(self.bus_kv[ld.bus], s_ref)
            add(ld.id, [f"iL_{p}" for p in PHASES], [i_b] * 3, [1.0 / (OMEGA_N * i_b)] * 3)
        for sh in cfg.shunts:
            v_b, i_b = _bases(self.bus_kv[sh.bus], s_ref)
            add(sh.id, [f"vc_{p}" for p in PHASES], [v_b] * 3, [1.0 / i_b] * 3)
        for tr in cfg.transformers:
            v_b, i_b = _bases(tr.v_hv_kv, s_ref)
            add(tr.id, [f"i_{p}" for p in PHASES], [i_b] * 3, [1.0 / v_b] * 3)
        for src in cfg.sources:
            v_b, i_b = _bases(self.bus_kv[src.bus], s_ref)
            add(src.id, [f"i_{p}" for p in PHASES], [i_b] * 3, [1.0 / v_b] * 3)
        for g in cfg.generators:
            add(g.id, SG_STATES, [1.0] * len(SG_STATES), [1.0] * len(SG_STATES))
        for c in cfg.converters:
            p = c.params
            add(c.id, VSC_STATES, [p.i_base] * 3 + [1.0] * 8, [1.0 / p.v_base] * 3 + [1.0] * 8)
        n = len(names)
        return DaeLayout(names=names, index={nm: k for k, nm in enumerate(names)}, blocks=blocks,
                         scale=np.array(scale), row_scale=np.array(row_scale),
                         differential=np.ones(n, dtype=bool))

    def node(self, bus_id: str) -> int:
        """Index of the phase-a voltage of a bus."""
        return self.layout.blocks[f"bus:{bus_id}"].start

    def _kernel_setup(self) -> None:
        cfg = self.cfg
        ng, nc = len(cfg.generators), len(cfg.converters)
        self.sg_P = np.zeros((ng, SG_NPAR))
        self.sg_I = np.zeros((ng, 2), dtype=np.int64)
        self.sg_out = np.zeros((ng, SG_NOUT))
        self.sg_fund = []
        for m, g in enumerate(cfg.generators):
            f = standard_to_fundamental(g.params)
            self.sg_fund.append(f)
            v_b, i_b = _bases(self.bus_kv[g.bus], g.params.s_n)
            row = self.sg_P[m]
            row[SG["omega_b"]] = f.omega_b
            row[SG["r_a"]] = f.r_a
            row[SG["l_l"]] = f.l_l
            row[SG["md00"]:SG["md22"] + 1] = np.linalg.inv(f.d_matrix()).ravel()
            row[SG["mq00"]:SG["mq22"] + 1] = np.linalg.inv(f.q_matrix()).ravel()
            for k in ("r_fd", "r_1d", "r_1q", "r_2q", "h", "d"):
                row[SG[k]] = getattr(f, k)
            row[SG["efd_gain"]] = f.efd_gain
            row[SG["v_base"]] = v_b
            row[SG["i_base"]] = i_b
            gv, ex, ps = g.controls.gov, g.controls.exc, g.controls.pss
            for k in ("r", "t1", "t2", "t3", "dt"):
                row[SG[f"gov_{k}"]] = getattr(gv, k)
            row[SG["gov_vmax"]] = gv.v_max
            row[SG["gov_vmin"]] = gv.v_min
            for k in ("k", "ta", "tb", "te"):
                row[SG[f"exc_{k}"]] = getattr(ex, k)
            row[SG["exc_emin"]] = ex.e_min
            row[SG["exc_emax"]] = ex.e_max
            for k in ("tw1", "tw2", "t6", "tw3", "tw4", "t7", "ks2", "ks3", "t8", "t9", "m", "ks1",
                      "t1", "t2", "t3", "t4"):
                row[SG[f"pss_{k}"]] = getattr(ps, k)
            if not 1 <= int(ps.m) <= 5:
                raise NetworkConfigError(f"{g.id}: PSS2A ramp-filter order must be 1..5")
            row[SG["pss_vmax"]] = ps.vst_max
            row[SG["pss_vmin"]] = ps.vst_min
            row[SG["gov_on"]] = float(g.controls.gov_enabled)
            row[SG["exc_on"]] = float(g.controls.exc_enabled)
            row[SG["pss_on"]] = float(g.controls.pss_enabled)
            self.sg_I[m] = (self.layout.blocks[g.id].start, self.node(g.bus))

        self.vsc_P = np.zeros((nc, VSC_NPAR))
        self.vsc_I = np.zeros((nc, 2), dtype=np.int64)
        self.vsc_out = np.zeros((nc, VSC_NOUT))
        self.vsc_D = np.zeros((nc, 4))
        self.delay_lines = []
        for m, c in enumerate(cfg.converters):
            p = c.params
            if abs(p.v_n - self.bus_kv[c.bus]) > 1e-9 * p.v_n:
                raise NetworkConfigError(f"{c.id}: converter voltage differs from bus nominal voltage")
            row = self.vsc_P[m]
            row[VSC["omega_b"]] = p.omega_b
            row[VSC["v_base"]] = p.v_base
            row[VSC["i_base"]] = p.i_base
            row[VSC["r_si"]] = p.r * p.z_base
            row[VSC["l_si"]] = p.l * p.z_base / p.omega_b
            row[VSC["l_pu"]] = p.l
            row[VSC["kp_cc"]] = p.kp_cc
            row[VSC["ki_cc"]] = p.ki_cc
            row[VSC["kp_pq"]] = p.kp_pq
            row[VSC["ki_pq"]] = p.ki_pq
            row[VSC["kp_pll"]] = p.kp_pll
            row[VSC["ki_pll"]] = p.ki_pll
            for k in ("k_f", "k_v", "v_lvrt", "k_lvrt", "i_max"):
                row[VSC[k]] = getattr(p, k)
            row[VSC["p_set"]] = c.p_mw / p.s_n
            row[VSC["q_set"]] = c.q_mvar / p.s_n
            row[VSC["p_on"]] = float(c.p_enable_s <= 0.0)
            row[VSC["q_on"]] = float(c.q_enable_s <= 0.0)
            row[VSC["lvrt_enabled"]] = float(p.lvrt_enabled)
            row[VSC["neg_on"]] = float(p.neg_seq_control)
            self.vsc_I[m] = (self.layout.blocks[c.id].start, self.node(c.bus))
            self.delay_lines.append(DelayLine(4, p.quarter_period))

    def assemble(self) -> None:
        """(Re)build the sparse linear part from current device parameters."""
        cfg, lay = self.cfg, self.layout
        n = lay.n
        mr, mc, mv = [], [], []
        kr, kc, kv = [], [], []

        def m_add(r, c, v):
            mr.append(r)
            mc.append(c)
            mv.append(v)

        def k_add(r, c, v):
            kr.append(r)
            kc.append(c)
            kv.append(v)

        for b in cfg.buses:
            nd = self.node(b.id)
            for ph in range(3):
                m_add(nd + ph, nd + ph, b.c_ground)
        for ln in cfg.lines:
            s = lay.blocks[ln.id].start
            nf, nt = self.node(ln.from_bus), self.node(ln.to_bus)
            for ph in range(3):
                m_add(nf + ph, nf + ph, 0.5 * ln.c)
                m_add(nt + ph, nt + ph, 0.5 * ln.c)
                k_add(nf + ph, s + ph, 1.0)
                k_add(nt + ph, s + ph, -1.0)
                m_add(s + ph, s + ph, ln.l)
                k_add(s + ph, s + ph, ln.r)
                k_add(s + ph, nf + ph, -1.0)
                k_add(s + ph, nt + ph, 1.0)
        for ld in cfg.loads:
            s = lay.blocks[ld.id].start
            nd = self.node(ld.bus)
            g, gam = ld.elements(self.bus_kv[ld.bus])
            for ph in range(3):
                k_add(nd + ph, nd + ph, g)
                k_add(nd + ph, s + ph, 1.0)
                m_add(s + ph, s + ph, 1.0)
                k_add(s + ph, nd + ph, -gam)
        for sh in cfg.shunts:
            s = lay.blocks[sh.id].start
            nd = self.node(sh.bus)
            c = sh.capacitance(self.bus_kv[sh.bus])
            gs = sh.conductances()
            for ph in range(3):
                g = gs[ph]
                k_add(nd + ph, nd + ph, g)
                k_add(nd + ph, s + ph, -g)
                m_add(s + ph, s + ph, c)
                k_add(s + ph, s + ph, g)
                k_add(s + ph, nd + ph, -g)
        for tr in cfg.transformers:
            s = lay.blocks[tr.id].start
            nh, nl = self.node(tr.hv_bus), self.node(tr.lv_bus)
            r, l = tr.impedance()
            e = tr.emf_matrix()
            for ph in range(3):
                k_add(nh + ph, s + ph, 1.0)
                m_add(s + ph, s + ph, l)
                k_add(s + ph, s + ph, r)
                k_add(s + ph, nh + ph, -1.0)
                for q in range(3):
                    if e[ph, q] != 0.0:
                        k_add(s + ph, nl + q, e[ph, q])
                        k_add(nl + q, s + ph, -e[ph, q])
        for src in cfg.sources:
            s = lay.blocks[src.id].start
            nd = self.node(src.bus)
            for ph in range(3):
                k_add(nd + ph, s + ph, -1.0)
                m_add(s + ph, s + ph, src.l)
                k_add(s + ph, s + ph, src.r)
                k_add(s + ph, nd + ph, 1.0)
        for fl in cfg.faults:
            nd = self.node(fl.bus)
            for ph, g in enumerate(fl.conductances()):
                k_add(nd + ph, nd + ph, g)

        rs = lay.row_scale
        M = sp.csr_matrix((mv, (mr, mc)), shape=(n, n))
        K = sp.csr_matrix((kv, (kr, kc)), shape=(n, n))
        D = sp.diags(rs)
        self.M = (D @ M).tocsr()
        self.K = (D @ K).tocsr()
        self.M.sum_duplicates()
        self.K.sum_duplicates()
        self._src_rows = []
        for src in cfg.sources:
            s = lay.blocks[src.id].start
            self._src_rows.append((s, src.emf_phasor() * rs[s]))

    # -- evaluation ---------------------------------------------------------
    def source_vector(self, t: float) -> np.ndarray:
        u = np.zeros(self.layout.n)
        for s, e in self._src_rows:
            u[s:s + 3] = phasor_to_abc(e, 1.0, t)
        return u

    def delayed_values(self, t: float) -> np.ndarray:
        for m, dl in enumerate(self.delay_lines):
            self.vsc_D[m] = dl.lookup(t)
        return self.vsc_D

    def residual(self, t: float, x: np.ndarray, xd: np.ndarray) -> np.ndarray:
        """Row-scaled residual. Pure in (t, x, xd) between commits."""
        self.residual_calls += 1
        res = self.M @ xd
        res += self.K @ x
        if self._src_rows:
            res -= self.source_vector(t)
        if len(self.cfg.generators) or len(self.cfg.converters):
            raw = np.zeros_like(res)
            self._kernels(t, x, xd, raw)
            res += raw * self.layout.row_scale
        return res

    def _kernels(self, t, x, xd, raw) -> None:
        if self.sg_P.shape[0]:
            kernels.sg_kernel(t, x, xd, raw, self.sg_P, self.sg_I, self.sg_out)
        if self.vsc_P.shape[0]:
            d = self.delayed_values(t)
            kernels.vsc_kernel(t, x, xd, raw, self.vsc_P, self.vsc_I, d, self.vsc_out)

    def sparsity_pattern(self) -> sp.csr_matrix:
        """Structural nonzeros of dF/dx + c dF/dx' (boolean), valid for every
        breaker/fault state since those only change values on the diagonal
        blocks already present."""
        n = self.layout.n
        pat = (abs(self.M) + abs(self.K)).tolil()
        for c in range(n):
            pat[c, c] = 1.0
        for dev, rows in ((self.cfg.generators, self.sg_I), (self.cfg.converters, self.vsc_I)):
            for d, (start, nd) in zip(dev, rows):
                blk = self.layout.blocks[d.id]
                idx = np.r_[blk.start:blk.stop, nd:nd + 3]
                for r in idx:
                    pat[r, idx] = 1.0
        for fl in self.cfg.faults:
            nd = self.node(fl.bus)
            for r in range(nd, nd + 3):
                pat[r, nd:nd + 3] = 1.0
        return pat.tocsr().astype(bool)

    def evaluate_outputs(self, t: float, x: np.ndarray, xd: np.ndarray | None = None):
        """Fill and return the machine and converter monitoring arrays."""
        if xd is None:
            xd = np.zeros_like(x)
        raw = np.zeros(self.layout.n)
        self._kernels(t, x, xd, raw)
        return self.sg_out.copy(), self.vsc_out.copy()

    # -- commit and events --------------------------------------------------
    def vsc_alpha_beta(self, x: np.ndarray, m: int) -> np.ndarray:
        c = self.cfg.converters[m]
        p = c.params
        nd = self.node(c.bus)
        s = self.layout.blocks[c.id].start
        v = x[nd:nd + 3] / p.v_base
        i = x[s:s + 3] / p.i_base
        return np.array([(2 * v[0] - v[1] - v[2]) / 3.0, (v[1] - v[2]) / math.sqrt(3.0),
                         (2 * i[0] - i[1] - i[2]) / 3.0, (i[1] - i[2]) / math.sqrt(3.0)])

    def commit(self, t: float, x: np.ndarray) -> None:
        """Record an accepted solution point (feeds the DSC delay lines)."""
        for m, dl in enumerate(self.delay_lines):
            dl.push(t, self.vsc_alpha_beta(x, m))

    def start_history(self, t0: float, x0: np.ndarray, steady: bool) -> None:
        """Initialize delay lines: sinusoidal steady-state history or zeros."""
        for m, dl in enumerate(self.delay_lines):
            ab = self.vsc_alpha_beta(x0, m)
            if steady:
                v = complex(ab[0], ab[1]) * np.exp(-1j * OMEGA_N * t0)
                i = complex(ab[2], ab[3]) * np.exp(-1j * OMEGA_N * t0)

                def hist(tt, v=v, i=i):
                    rv = v * np.exp(1j * OMEGA_N * tt)
                    ri = i * np.exp(1j * OMEGA_N * tt)
                    return np.array([rv.real, rv.imag, ri.real, ri.imag])
                dl.prefill(t0, hist)
            else:
                dl.start(t0, ab)

    def snapshot(self) -> dict:
        """Mutable runtime parameters (for scenario restarts)."""
        return {"cfg": copy.deepcopy(self.cfg), "vsc_P": self.vsc_P.copy(), "sg_P": self.sg_P.copy(),
                "delay": [d.copy() for d in self.delay_lines]}

    def restore(self, snap: dict) -> None:
        self.cfg = copy.deepcopy(snap["cfg"])
        self.vsc_P[:] = snap["vsc_P"]
        self.sg_P[:] = snap["sg_P"]
        self.delay_lines = [d.copy() for d in snap["delay"]]
        self.assemble()

    def _find(self, group: str, dev_id: str):
        for dev in getattr(self.cfg, group):
            if dev.id == dev_id:
                return dev
        raise NetworkConfigError(f"event targets unknown {group[:-1]} '{dev_id}'")

    def apply_event(self, event: dict, t: float | None = None) -> None:
        """Apply a parameter change. ``event['kind']`` selects the action."""
        kind = event.get("kind")
        if kind == "load_step":
            ld = self._find("loads", event["load"])
            ld.p_mw += float(event.get("dp_mw", 0.0))
            ld.q_mvar += float(event.get("dq_mvar", 0.0))
            if ld.p_mw < 0 or ld.q_mvar < 0:
                raise NetworkConfigError(f"load {ld.id}: step makes power negative")
        elif kind in ("fault_apply", "fault_clear"):
            fl = self._find("faults", event["fault"])
            fl.active = kind == "fault_apply"
        elif kind == "breaker":
            sh = self._find("shunts", event["shunt"])
            phases = event.get("phases", PHASES)
            for ph in phases:
                sh.closed[PHASES.index(ph)] = bool(event.get("closed", True))
        elif kind == "vsc_enable":
            m = self._converter_index(event["converter"])
            what = event.get("what", "pq")
            if "p" in what:
                self.vsc_P[m, VSC["p_on"]] = 1.0
            if "q" in what:
                self.vsc_P[m, VSC["q_on"]] = 1.0
            return
        elif kind == "lvrt":
            m = self._converter_index(event["converter"])
            self.vsc_P[m, VSC["lvrt_active"]] = 1.0 if event["active"] else 0.0
            return
        else:
            raise NetworkConfigError(f"unknown event kind {kind!r}")
        self.assemble()

    def _converter_index(self, cid: str) -> int:
        for m, c in enumerate(self.cfg.converters):
            if c.id == cid:
                return m
        raise NetworkConfigError(f"event targets unknown converter '{cid}'")

    def lvrt_guards(self):
        """State-event guards: one per converter with LVRT enabled.

        Each entry is (converter id, guard(t, x) -> v_pos - v_lvrt, is_active()).
        """
        guards = []
        for m, c in enumerate(self.cfg.converters):
            if not c.params.lvrt_enabled:
                continue

            def guard(t, x, m=m):
                _, vo = self.evaluate_outputs(t, x)
                return vo[m, 0] - self.vsc_P[m, VSC["v_lvrt"]]

            def active(m=m):
                return self.vsc_P[m, VSC["lvrt_active"]] != 0.0
            guards.append((c.id, guard, active))
        return guards

    def time_events(self) -> list:
        """Events implied by the network itself (converter enable times)."""
        out = []
        for c in self.cfg.converters:
            if c.p_enable_s > 0:
                out.append((c.p_enable_s, {"kind": "vsc_enable", "converter": c.id, "what": "p"}))
            if c.q_enable_s > 0:
                out.append((c.q_enable_s, {"kind": "vsc_enable", "converter": c.id, "what": "q"}))
        return out

    # -- channels -----------------------------------------------------------
    def channel_names(self) -> list:
        names = []
        for b in self.cfg.buses:
            names += [f"v_{b.id}_{p}" for p in PHASES]
        for sh in self.cfg.shunts:
            names += [f"i_{sh.id}_{p}" for p in PHASES]
        for g in self.cfg.generators:
            names += [f"{g.id}_{k}" for k in ("omega", "t_e", "p_e", "q_e", "v_t", "e_fd", "p_m")]
        for c in self.cfg.converters:
            names += [f"{c.id}_{k}" for k in VSC_OUTPUTS if k != "theta"]
            names += [f"{c.id}_i_{p}" for p in PHASES]
        return names

    def channel_values(self, t: float, x: np.ndarray) -> np.ndarray:
        vals = []
        for b in self.cfg.buses:
            nd = self.node(b.id)
            vals.extend(x[nd:nd + 3])
        for sh in self.cfg.shunts:
            nd = self.node(sh.bus)
            s = self.layout.blocks[sh.id].start
            vals.extend(sh.conductances() * (x[nd:nd + 3] - x[s:s + 3]))
        so, vo = self.evaluate_outputs(t, x)
        sg_pick = [SG_OUTPUTS.index(k) for k in ("omega", "t_e", "p_e", "q_e", "v_t", "e_fd", "p_m")]
        for m in range(len(self.cfg.generators)):
            vals.extend(so[m, sg_pick])
        vsc_pick = [k for k, nm in enumerate(VSC_OUTPUTS) if nm != "theta"]
        for m, c in enumerate(self.cfg.converters):
            vals.extend(vo[m, vsc_pick])
            s = self.layout.blocks[c.id].start
            vals.extend(x[s:s + 3])
        return np.array(vals, dtype=float)


def build_network(config) -> NetworkModel:
    """Validate a description (path, dict or NetworkConfig) and build the model."""
    return NetworkModel(load_network(config))
