"""Scenario files: network reference, event schedule, solver and outputs.

Scenario times are absolute from t = 0 of the initialized system.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..netmodel import FaultBranch, NetworkConfig, NetworkConfigError, ShuntCapacitor, load_network
from ..solver import SolverConfig

PACKAGE_DATA = Path(__file__).resolve().parent.parent / "data"


class ScenarioError(ValueError):
    """Malformed scenario description."""


def data_dir() -> Path:
    """Bundled data location, overridable through ``EMTSIM_DATA_DIR``."""
    env = os.environ.get("EMTSIM_DATA_DIR")
    return Path(env) if env else PACKAGE_DATA


def resolve(name: str | os.PathLike, base: Path | None = None, sub: str = "") -> Path:
    """Find a file as given, next to ``base``, or in the data directory."""
    p = Path(name)
    candidates = [p]
    if not p.is_absolute():
        if base is not None:
            candidates.append(base / p)
        candidates += [data_dir() / sub / p, data_dir() / p]
        if p.suffix == "":
            candidates += [data_dir() / sub / f"{p}.json", data_dir() / f"{p}.json"]
    for c in candidates:
        if c.is_file():
            return c
    raise ScenarioError(f"file not found: {name}")


@dataclass
class Scenario:
    name: str
    network: NetworkConfig
    t_end: float
    solver: SolverConfig
    events: list = field(default_factory=list)      # (t, net event dict), time ordered
    channels: list | None = None
    sample_dt: float = 1e-4
    plots: list = field(default_factory=list)
    source: Path | None = None


_SOLVER_KEYS = {"scheme", "dt_fixed", "dt_max", "dt_min", "rel_tol", "abs_tol", "max_order",
                "newton_max_iters", "be_newton_max_iters", "jacobian_reuse_tolerance",
                "event_tolerance"}


def solver_from_dict(d: dict) -> SolverConfig:
    unknown = set(d) - _SOLVER_KEYS - {"tolerance"}
    if unknown:
        raise ScenarioError(f"unknown solver keys: {sorted(unknown)}")
    kw = {k: v for k, v in d.items() if k in _SOLVER_KEYS}
    if "tolerance" in d:
        kw.setdefault("rel_tol", d["tolerance"])
        kw.setdefault("abs_tol", d["tolerance"])
    if kw.get("scheme") == "be":
        kw["scheme"] = "backward_euler"
    cfg = SolverConfig(**kw)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return cfg


def _num(d: dict, key: str, where: str) -> float:
    try:
        return float(d[key])
    except KeyError:
        raise ScenarioError(f"{where}: missing '{key}'") from None
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: '{key}' must be a number") from None


def expand_events(specs: list, net: NetworkConfig) -> list:
    """Turn scenario-level events into timed network events, adding fault
    branches and capacitor banks to ``net`` where needed."""
    bus_ids = {b.id for b in net.buses}
    out = []
    for k, ev in enumerate(specs):
        kind = ev.get("type")
        where = f"event {k} ({kind})"
        bus = str(ev.get("bus", ""))
        if bus not in bus_ids:
            raise ScenarioError(f"{where}: unknown bus '{bus}'")
        if kind == "load_step":
            load = next((ld for ld in net.loads if ld.bus == bus), None)
            if load is None:
                raise ScenarioError(f"{where}: no load at bus {bus}")
            out.append((_num(ev, "t", where), {"kind": "load_step", "load": load.id,
                                               "dp_mw": float(ev.get("dp_mw", 0.0)),
                                               "dq_mvar": float(ev.get("dq_mvar", 0.0))}))
        elif kind == "fault":
            t_on, t_off = _num(ev, "t_apply", where), _num(ev, "t_clear", where)
            if not t_off > t_on:
                raise ScenarioError(f"{where}: t_clear must follow t_apply")
            fid = f"fault{k}_bus{bus}"
            net.faults.append(FaultBranch(fid, bus, str(ev.get("phases", "abc")),
                                          _num(ev, "r_ohm", where)))
            out.append((t_on, {"kind": "fault_apply", "fault": fid}))
            out.append((t_off, {"kind": "fault_clear", "fault": fid}))
        elif kind == "cap_switch":
            q = float(ev.get("q_mvar", 0.0))
            bank = next((s for s in net.shunts if s.bus == bus and not any(s.closed)
                         and (q == 0.0 or abs(s.q_mvar - q) < 1e-9)), None)
            if bank is None:
                if not q > 0:
                    raise ScenarioError(f"{where}: no open bank at bus {bus} and no q_mvar given")
                bank = ShuntCapacitor(f"bank{k}_bus{bus}", bus, q, closed=[False] * 3)
                net.shunts.append(bank)
            times = ev.get("close_times")
            if not isinstance(times, dict) or not set(times) <= set("abc") or not times:
                raise ScenarioError(f"{where}: close_times must map phases a/b/c to times")
            for ph, t in sorted(times.items()):
                out.append((float(t), {"kind": "breaker", "shunt": bank.id, "phases": ph,
                                       "closed": True}))
        else:
            raise ScenarioError(f"{where}: unknown event type")
    out.sort(key=lambda e: e[0])
    return out


def scenario_from_dict(d: dict, base: Path | None = None) -> Scenario:
    try:
        net_file = resolve(d["network"], base)
    except KeyError:
        raise ScenarioError("scenario needs a 'network' entry") from None
    try:
        net = load_network(net_file)
    except NetworkConfigError as exc:
        raise ScenarioError(f"{net_file}: {exc}") from None
    for cid, over in d.get("converter_overrides", {}).items():
        conv = next((c for c in net.converters if c.id == cid), None)
        if conv is None:
            raise ScenarioError(f"override for unknown converter '{cid}'")
        for k in ("p_mw", "q_mvar", "p_enable_s", "q_enable_s"):
            if k in over:
                setattr(conv, k, float(over[k]))
        params = {k: v for k, v in over.items() if k not in ("p_mw", "q_mvar", "p_enable_s", "q_enable_s")}
        try:
            conv.params = replace(conv.params, **params)
        except TypeError as exc:
            raise ScenarioError(f"converter override: {exc}") from None
    if d.get("disconnect_converters"):
        net.converters = []
    t_end = float(d.get("t_end", 1.0))
    if not t_end > 0:
        raise ScenarioError("t_end must be positive")
    events = expand_events(d.get("events", []), net)
    if any(t < 0 or t > t_end for t, _ in events):
        raise ScenarioError("event time outside [0, t_end]")
    out = d.get("output", {})
    return Scenario(name=str(d.get("name", "scenario")), network=net, t_end=t_end,
                    solver=solver_from_dict(d.get("solver", {})), events=events,
                    channels=out.get("channels"), sample_dt=float(out.get("sample_dt", 1e-4)),
                    plots=out.get("plots", []), source=None)


def load_scenario(path: str | os.PathLike) -> Scenario:
    p = resolve(path, sub="scenarios")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: {exc}") from None
    sc = scenario_from_dict(d, p.parent)
    sc.source = p
    return sc
