#!/usr/bin/env python3
"""Compiled kernel vs pure-Python fallback: timing and exactness.

The numerical core ships as one source file that runs either as a compiled
extension or as plain Python. This script loads both variants side by side,
pushes identical workloads through each, asserts the outputs are
bit-identical, and prints a timing table. Run it from anywhere:

    python benchmarks/bench_kernels.py [--repeat N]

Exit status is nonzero if any workload output differs between the modes or
if the compiled extension is missing.
"""
import argparse
import importlib.util
import sys
import time
from pathlib import Path

import numpy as np

import powersplit
from powersplit.params import Plant
from powersplit.plant import PackedPlant
from powersplit import default_config


def load_pure_kernel():
    """Execute the kernel source as plain Python, bypassing the extension."""
    src = Path(powersplit.__file__).parent / "_kernel.py"
    spec = importlib.util.spec_from_file_location("powersplit._kernel_pure", src)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


# ---- workloads -------------------------------------------------------------
# Each returns a tuple of arrays; the harness times the call and compares
# the tuples element-wise for exact equality across kernel variants.

def bench_friction(k, pp, cfg):
    tire = cfg.plant.tire
    lams = np.linspace(-1.0, 1.0, 20_001)
    out = np.empty_like(lams)
    for i in range(lams.shape[0]):
        out[i] = k.magic_mu(lams[i], tire.B, tire.C, tire.D, tire.E,
                            tire.mu_max)
    return (out,)


def bench_battery(k, pp, cfg):
    b = cfg.plant.battery
    powers = np.linspace(-100_000.0, 200_000.0, 20_001)
    out = np.empty_like(powers)
    for i in range(powers.shape[0]):
        out[i] = k.battery_current_c(powers[i], b.V_oc, b.R_batt)
    return (out,)


def bench_axle(k, pp, cfg):
    rng = np.random.default_rng(3)
    n = 5_000
    v = rng.uniform(0.0, 30.0, n)
    om_f = rng.uniform(0.0, 120.0, n)
    om_r = rng.uniform(0.0, 120.0, n)
    theta = rng.uniform(-0.08, 0.08, n)
    ax = np.empty(11)
    acc = np.empty(n)
    loads = np.empty((n, 2))
    for i in range(n):
        rc = k.axle_solve_c(v[i], om_f[i], om_r[i], theta[i], 1, 1, pp.par, ax)
        assert rc == 0
        acc[i] = ax[2]
        loads[i, 0], loads[i, 1] = ax[0], ax[1]
    return (acc, loads)


def bench_plant_step(k, pp, cfg):
    n = 600
    dt = 0.1
    out = np.empty(14)
    work = np.empty(17)
    hist = np.empty((n, 4))
    v, om_f, om_r, soc = 0.0, 0.0, 0.0, 0.9
    for i in range(n):
        # gentle launch/cruise/brake profile, battery-feasible throughout
        p = 3_000.0 * np.sin(0.02 * i) + 2_000.0
        rc = k.step_core(v, om_f, om_r, soc, 0.0, 0.5 * p, 0.5 * p, dt,
                         pp.par, pp.om_nodes, pp.tq_nodes, pp.eta_t, pp.eta_r,
                         out, work)
        assert rc == 0
        v, om_f, om_r, soc = out[0], out[1], out[2], out[3]
        hist[i] = (v, om_f, om_r, soc)
    return (hist,)


def bench_cost_tables(k, pp, cfg):
    g = cfg.grid
    v_grid = np.array([0.0, 10.0])
    lam_grid = np.array([-0.35, 0.0, 0.35])
    n_det = v_grid.size * lam_grid.size ** 2
    n_s = g.p_grid.size * n_det
    n_u = g.u_grid.size
    cost = np.empty((n_s, n_u))
    nxt = np.empty((n_s, n_u), dtype=np.intc)
    work = np.empty(37)
    extend = 1 if cfg.skid.extend_to_traction else 0
    for ip in range(g.p_grid.size):
        lo = ip * n_det
        rc = k.build_tables(g.p_grid, v_grid, lam_grid, g.u_grid,
                            pp.par, pp.om_nodes, pp.tq_nodes,
                            pp.eta_t, pp.eta_r,
                            cfg.sdp.soc_nominal, 0.0, cfg.sdp.dt_sdp,
                            cfg.sdp.alpha, cfg.skid.lambda_crit, extend,
                            cfg.sdp.lam_drive_cap, cost, nxt,
                            lo, lo + n_det, work)
        assert rc == 0
    return (cost, nxt.copy())


WORKLOADS = [
    ("friction lookup x20k", bench_friction),
    ("battery current x20k", bench_battery),
    ("axle closed form x5k", bench_axle),
    ("plant step x600", bench_plant_step),
    ("cost tables 576x32", bench_cost_tables),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=1,
                    help="timing repetitions per workload (best is reported)")
    args = ap.parse_args(argv)

    compiled = powersplit._kernel
    info = compiled.kernel_info()
    if not info["compiled"]:
        print("error: the installed kernel is not compiled; build the "
              "extension first (pip install -e .)", file=sys.stderr)
        return 1
    pure = load_pure_kernel()
    assert not pure.kernel_info()["compiled"]

    cfg = default_config()
    pp = PackedPlant(cfg.plant)

    print(f"{'workload':<24} {'compiled':>12} {'pure':>12} {'speedup':>9}")
    mismatches = 0
    for name, fn in WORKLOADS:
        results, times = {}, {}
        for label, mod in (("compiled", compiled), ("pure", pure)):
            best = np.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                out = fn(mod, pp, cfg)
                best = min(best, time.perf_counter() - t0)
            results[label], times[label] = out, best
        same = all(np.array_equal(a, b) for a, b
                   in zip(results["compiled"], results["pure"]))
        if not same:
            mismatches += 1
        tag = "" if same else "   OUTPUT MISMATCH"
        print(f"{name:<24} {times['compiled'] * 1e3:>10.1f}ms "
              f"{times['pure'] * 1e3:>10.1f}ms "
              f"{times['pure'] / times['compiled']:>8.1f}x{tag}")

    if mismatches:
        print(f"\n{mismatches} workload(s) differ between modes", file=sys.stderr)
        return 1
    print("\nall workload outputs are bit-identical across modes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
