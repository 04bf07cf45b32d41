"""``emtsim`` command line: run scenarios, compare traces, solve power flows.

Exit codes: 0 success, 1 comparison mismatch, 2 configuration error,
3 power-flow or initialization failure, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..machine import InfeasibleOperatingPoint, MachineParameterError
from ..netmodel import NetworkConfigError, build_network, load_network
from ..powerflow import InitializationError, PowerFlowDivergence, solve_power_flow, write_pf_report
from ..solver import SolverError
from ..vsc import VscParameterError
from .compare import compare_traces, load_mapping
from .runner import run_scenario
from .scenario import ScenarioError, resolve

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_INIT, EXIT_SOLVER = 0, 1, 2, 3, 4

log = logging.getLogger("emtsim")


def _window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected t0:t1, got '{text}'") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty window '{text}'")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="emtsim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario")
    run.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    run.add_argument("--solver", choices=("be", "bdf"))
    run.add_argument("--dt", type=float, help="fixed step (be) or maximum step (bdf), seconds")
    run.add_argument("--tol", type=float, help="relative and absolute tolerance (bdf)")
    run.add_argument("--t-end", type=float)
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--no-plots", action="store_true")

    cmp_ = sub.add_parser("compare", help="compare two trace CSV files")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--map", help="JSON channel mapping (default: channels common to both)")
    cmp_.add_argument("--tol", type=float, default=0.005)
    cmp_.add_argument("--exclude", type=_window, nargs="*", default=[], metavar="T0:T1")
    cmp_.add_argument("--floor", type=float, default=0.0,
                      help="lower bound on the normalizing peak, in channel units")
    cmp_.add_argument("--raw", action="store_true", help="compare samples instead of envelopes")

    pf = sub.add_parser("pf", help="solve the power flow of a network")
    pf.add_argument("--network", required=True)
    pf.add_argument("--out", help="write the bus table to this CSV file")
    return ap


def _cmd_run(args) -> int:
    rep = run_scenario(args.scenario, args.out, solver=args.solver, dt=args.dt, tol=args.tol,
                       t_end=args.t_end, plots=not args.no_plots)
    s = rep.stats
    print(f"{s['scenario']}: {s['solver']}, {s['steps_taken']} steps, "
          f"{s['jacobian_evaluations']} Jacobians, {s['total_simulation_time_s']:.2f} s")
    for kind, path in rep.files.items():
        print(f"  {kind}: {path}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    mapping = load_mapping(args.map) if args.map else None
    results = compare_traces(args.a, args.b, mapping, args.tol, args.exclude, not args.raw,
                             args.floor)
    for r in results:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.a} ~ {r.b}: error {r.error:.3e} at t = {r.t_worst:.6f} s")
    return EXIT_OK if all(r.passed for r in results) else EXIT_MISMATCH


def _cmd_pf(args) -> int:
    net = build_network(load_network(resolve(args.network, sub="")))
    pf = solve_power_flow(net)
    print(f"converged in {pf.iterations} iterations, mismatch {pf.mismatch:.2e}")
    if args.out:
        write_pf_report(pf, args.out)
    else:
        write_pf_report(pf, sys.stdout)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "compare": _cmd_compare, "pf": _cmd_pf}[args.command]
    try:
        return handler(args)
    except (ScenarioError, NetworkConfigError, MachineParameterError, VscParameterError,
            KeyError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PowerFlowDivergence, InitializationError, InfeasibleOperatingPoint) as exc:
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_INIT
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
