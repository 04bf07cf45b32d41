import json
import shutil

import numpy as np
import pytest

from emtsim.harness import (ScenarioError, Trace, write_trace_csv, compare_arrays, envelope, load_scenario, read_trace_csv,
                            run_scenario, scenario_from_dict)
from emtsim.harness.cli import main
from emtsim.harness.scenario import data_dir


def test_bundled_scenarios_load():
    names = {"load_step", "sym_fault", "slg_fault", "cap_switch", "surrogate_flat"}
    for n in names:
        sc = load_scenario(n)
        assert sc.name == n
        assert sc.t_end > 0
    sym = load_scenario("sym_fault")
    kinds = [e["kind"] for _, e in sym.events]
    assert kinds == ["fault_apply", "fault_clear"]
    assert [t for t, _ in sym.events] == [0.1, 0.4]
    cap = load_scenario("cap_switch")
    assert [(t, e["phases"]) for t, e in cap.events] == [(0.101, "a"), (0.109, "b"), (0.117, "c")]
    assert cap.solver.scheme == "backward_euler" and cap.solver.dt_fixed == 5e-6


@pytest.mark.parametrize("patch, msg", [
    ({"network": "missing_net"}, "not found"),
    ({"events": [{"type": "fault", "bus": "99", "t_apply": 0.1, "t_clear": 0.2, "r_ohm": 5}]}, "unknown bus"),
    ({"events": [{"type": "fault", "bus": "3", "t_apply": 0.2, "t_clear": 0.1, "r_ohm": 5}]}, "follow"),
    ({"events": [{"type": "warp", "bus": "3"}]}, "unknown event"),
    ({"solver": {"scheme": "rk4"}}, "scheme"),
    ({"solver": {"step": 1}}, "unknown solver"),
    ({"t_end": -1}, "positive"),
])
def test_bad_scenarios(patch, msg):
    d = {"name": "x", "network": "surrogate_4bus", "t_end": 0.5}
    d.update(patch)
    with pytest.raises(ScenarioError, match=msg):
        scenario_from_dict(d)


def test_data_dir_override(tmp_path, monkeypatch):
    shutil.copytree(data_dir(), tmp_path / "data")
    sc_file = tmp_path / "data" / "scenarios" / "surrogate_flat.json"
    d = json.loads(sc_file.read_text())
    d["name"] = "relocated"
    sc_file.write_text(json.dumps(d))
    monkeypatch.setenv("EMTSIM_DATA_DIR", str(tmp_path / "data"))
    assert data_dir() == tmp_path / "data"
    assert load_scenario("surrogate_flat").name == "relocated"


def test_run_writes_rfc4180_csv_and_is_deterministic(tmp_path):
    a = run_scenario("surrogate_flat", tmp_path / "a", t_end=0.01, plots=False)
    b = run_scenario("surrogate_flat", tmp_path / "b", t_end=0.01, plots=False)
    raw = a.files["trace"].read_bytes()
    assert raw.count(b"\r\n") == raw.count(b"\n") > 10
    assert raw == b.files["trace"].read_bytes()
    t, names, data = read_trace_csv(a.files["trace"])
    assert names[0] == "v_1_a" and data.shape == (t.size, len(names))
    assert t[-1] == pytest.approx(0.01)
    header_row = raw.split(b"\r\n")[1].split(b",")[0]
    assert header_row == b"0"
    stats = json.loads(a.files["stats"].read_text())
    for key in ("solver", "tolerance", "dt_max_s", "dt_min_s", "steps_taken", "residual_calls",
                "jacobian_evaluations", "jacobian_evaluation_time_s", "total_simulation_time_s"):
        assert key in stats


def test_time_column_keeps_nine_significant_digits(tmp_path):
    tr = Trace(["x"])
    times = [0.0, 0.123456789, 0.1234567891, 1.000000001]
    for k, t in enumerate(times):
        tr.append(t, np.array([float(k)]))
    write_trace_csv(tr, tmp_path / "t.csv")
    t, names, data = read_trace_csv(tmp_path / "t.csv")
    assert names == ["x"]
    assert np.array_equal(t, times)
    assert len(set(t)) == 4


def test_envelope_and_compare():
    t = np.arange(0, 0.2, 1e-4)
    y = np.sin(2 * np.pi * 50 * t)
    env = envelope(t, y)
    assert np.all(env[100:-100] > 0.99)
    err, _, ok = compare_arrays(t, y, t, 1.003 * y, 0.005)
    assert ok and err == pytest.approx(0.003, rel=0.05)
    err, tw, ok = compare_arrays(t, y, t, np.where(t > 0.1, 1.1 * y, y), 0.005)
    assert not ok and tw > 0.09
    err, _, ok = compare_arrays(t, y, t, np.where(t > 0.1, 1.1 * y, y), 0.005, exclude=[(0.08, 0.2)])
    assert ok


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--scenario", "surrogate_flat", "--t-end", "0.005", "--out", str(tmp_path / "o"),
                 "--no-plots"]) == 0
    assert main(["run", "--scenario", "surrogate_flat", "--t-end", "0.005", "--solver", "be",
                 "--dt", "5e-5", "--out", str(tmp_path / "p"), "--no-plots"]) == 0
    a = tmp_path / "o" / "surrogate_flat_trace.csv"
    b = tmp_path / "p" / "surrogate_flat_trace.csv"
    mp = tmp_path / "map.json"
    mp.write_text(json.dumps(["v_3_a", "v_4_b"]))
    assert main(["compare", str(a), str(b), "--map", str(mp), "--tol", "0.05"]) == 0
    assert main(["compare", str(a), str(b), "--map", str(mp), "--tol", "1e-12"]) == 1
    assert main(["run", "--scenario", "does_not_exist"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--scenario", str(bad)]) == 2
    assert main(["pf", "--network", "cigre_hv"]) == 0
    out = capsys.readouterr().out
    assert "converged" in out and "bus,type,v_pu" in out


def test_cli_power_flow_failure_exit_code(tmp_path):
    d = json.loads((data_dir() / "surrogate_4bus.json").read_text())
    d["loads"][0]["p_mw"] = 1e5
    net = tmp_path / "heavy.json"
    net.write_text(json.dumps(d))
    assert main(["pf", "--network", str(net)]) == 3


def test_cli_solver_failure_exit_code(tmp_path):
    sc = {"name": "tiny", "network": "surrogate_4bus", "t_end": 0.01,
          "solver": {"scheme": "bdf", "dt_max": 25e-6, "dt_min": 2e-6, "tolerance": 1e-12,
                     "newton_max_iters": 1}}
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(sc))
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o"), "--no-plots"]) == 4
