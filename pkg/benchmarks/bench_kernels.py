"""Compare the compiled and pure-Python kernel backends.

Times the raw machine/converter kernels, the full network residual and a
short BDF run on the surrogate network, once per backend.

    python3 benchmarks/bench_kernels.py [--repeat N] [--t-end T] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import time
from contextlib import contextmanager

import numpy as np

from emtsim import kernels
from emtsim.harness import initialize, load_scenario, simulate_network
from emtsim.netmodel import build_network


@contextmanager
def use_backend(name: str):
    mod = kernels.backend_module(name)
    saved = kernels.sg_kernel, kernels.vsc_kernel
    kernels.sg_kernel, kernels.vsc_kernel = mod.sg_kernel, mod.vsc_kernel
    try:
        yield
    finally:
        kernels.sg_kernel, kernels.vsc_kernel = saved


def per_call(fn, repeat: int) -> float:
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench(name: str, repeat: int, t_end: float) -> dict:
    sc = load_scenario("surrogate_flat")
    with use_backend(name):
        init = initialize(build_network(sc.network))
        net = init.net
        x, xd = init.x0.copy(), init.xd0.copy()
        raw = np.zeros_like(x)
        row = {
            "backend": name,
            "kernels_us": 1e6 * per_call(lambda: net._kernels(0.0, x, xd, raw), repeat),
            "residual_us": 1e6 * per_call(lambda: net.residual(0.0, x, xd), repeat),
        }
        t0 = time.perf_counter()
        res, _ = simulate_network(init, sc.solver, t_end, sample_dt=1e-3)
        row["simulation_s"] = time.perf_counter() - t0
        row["steps"] = res.stats.steps
    return row


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--t-end", type=float, default=0.05)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = []
    for name in ("cython", "python"):
        try:
            rows.append(bench(name, args.repeat, args.t_end))
        except ImportError:
            print(f"{name}: backend not built, skipped")
    print(f"{'backend':8s} {'kernels us':>11s} {'residual us':>12s} {'sim s':>8s} {'steps':>6s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['kernels_us']:11.1f} {r['residual_us']:12.1f} "
              f"{r['simulation_s']:8.2f} {r['steps']:6d}")
    if len(rows) == 2:
        print(f"speed-up: kernels x{rows[1]['kernels_us'] / rows[0]['kernels_us']:.1f}, "
              f"simulation x{rows[1]['simulation_s'] / rows[0]['simulation_s']:.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
