"""Command-line front end: build artifacts, train, simulate, compare, calibrate.

Artifacts flow through a working directory (--out): build-tpm writes the
demand-transition matrix, train-sdp consumes it and writes the policy table,
fit-grdp writes the fitted linear rule, and the evaluation commands load
whatever they need. Exit codes: 0 success, 2 validation or artifact errors,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .baselines import deterministic_dp, grdp_fit, load_rule, save_dp_trajectory, save_rule
from .config import default_config, load_config
from .cycles import DriveCycle, resolve_cycle
from .errors import NonConvergence, PowersplitError
from .harness import (calibrate_rbatt, compare, save_sweep, save_trace,
                      simulate, sweep_sensitivity, trace_summary)
from .markov import estimate_tpm, load_tpm, save_tpm
from .sdp import load_policy, save_policy, train_policy


def _split_names(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def _split_floats(text: str) -> list:
    try:
        return [float(s) for s in _split_names(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _truncate(cycle: DriveCycle, duration: float) -> DriveCycle:
    if duration is None or duration >= cycle.duration:
        return cycle
    keep = cycle.t - cycle.t[0] <= duration + 1e-9
    return DriveCycle(name=cycle.name, t=cycle.t[keep], v=cycle.v[keep])


def _progress_line(done: int, total: int) -> None:
    sys.stderr.write(f"\r  {done}/{total} states")
    if done >= total:
        sys.stderr.write("\n")
    sys.stderr.flush()


def cmd_build_tpm(args, cfg) -> int:
    names = _split_names(args.cycles)
    sequences = []
    for name in names:
        trace = simulate(resolve_cycle(name), "ed", cfg, mu_max=args.mu,
                         seed=args.seed)
        sequences.append(trace.p_dem)
        print(f"  {name}: {len(trace)} samples, dSoC {trace.dsoc_pp:.3f} pp")
    tpm = estimate_tpm(sequences, cfg.grid)
    path = os.path.join(args.out, "tpm.csv")
    save_tpm(tpm, path, cfg.grid, cfg.sdp.dt_sdp, cycles=names)
    diag = float(np.trace(tpm.p) / tpm.n)
    print(f"wrote {path} ({tpm.n} levels, mean self-transition {diag:.3f})")
    return 0


def cmd_train_sdp(args, cfg) -> int:
    tpm_path = args.tpm or os.path.join(args.out, "tpm.csv")
    tpm, meta = load_tpm(tpm_path, grid=cfg.grid)
    print(f"loaded {tpm_path} (cycles: {', '.join(meta.get('cycles', []) or ['?'])})")
    policy, value = train_policy(cfg, tpm, progress=_progress_line)
    path = os.path.join(args.out, "policy.csv")
    save_policy(policy, path)
    changes = policy.diagnostics.get("changes", [])
    print(f"policy iteration changes per sweep: {changes}")
    print(f"value range [{value.table.min():.4g}, {value.table.max():.4g}]")
    print(f"wrote {path}")
    return 0


def cmd_fit_grdp(args, cfg) -> int:
    cycle = _truncate(resolve_cycle(args.cycle), args.duration)
    print(f"solving DP on {cycle.name} ({cycle.duration:.0f} s)...")
    traj = deterministic_dp(cycle, cfg, v_bin=args.v_bin, p_bin=args.p_bin)
    rule = grdp_fit(traj)
    rule_path = os.path.join(args.out, "grdp.json")
    save_rule(rule_path, rule, meta={"cycle": cycle.name,
                                     "duration_s": cycle.duration,
                                     "v_bin": args.v_bin, "p_bin": args.p_bin})
    traj_path = os.path.join(args.out, "dp_trajectory.csv")
    save_dp_trajectory(traj_path, traj)
    print(f"rule: P_f = {rule.a:.4f} * P_dem + {rule.b:.1f}  "
          f"(R^2 {rule.r_squared:.3f}, {rule.n_points} points)")
    print(f"wrote {rule_path} and {traj_path}")
    return 0


def _load_strategy(name: str, args, cfg):
    key = name.lower()
    if key == "ed":
        return "ed"
    if key == "grdp":
        return load_rule(args.rule or os.path.join(args.out, "grdp.json"))
    if key == "sdp":
        return load_policy(args.policy or os.path.join(args.out, "policy.csv"),
                           grid=cfg.grid)
    raise argparse.ArgumentTypeError(f"unknown strategy {name!r}")


def cmd_simulate(args, cfg) -> int:
    strategy = _load_strategy(args.strategy, args, cfg)
    trace = simulate(resolve_cycle(args.cycle), strategy, cfg, mu_max=args.mu,
                     skid_overlay=not args.no_skid, seed=args.seed)
    if args.trace:
        save_trace(args.trace, trace)
        print(f"wrote {args.trace}")
    print(json.dumps(trace_summary(trace), sort_keys=True))
    return 0


def cmd_compare(args, cfg) -> int:
    strategies = _split_names(args.strategies)
    policy = rule = None
    if "sdp" in strategies:
        policy = load_policy(args.policy or os.path.join(args.out, "policy.csv"),
                             grid=cfg.grid)
    if "grdp" in strategies:
        rule = load_rule(args.rule or os.path.join(args.out, "grdp.json"))
    table = compare(_split_names(args.cycles), _split_floats(args.mu),
                    strategies, cfg, policy=policy, rule=rule,
                    skid_overlay=not args.no_skid, seed=args.seed)
    csv_path = os.path.join(args.out, "comparison.csv")
    json_path = os.path.join(args.out, "comparison.json")
    table.to_csv(csv_path)
    table.to_json(json_path)
    for r in table.rows:
        cells = "  ".join(f"{s} {r.dsoc_pp[s]:8.4f}" for s in table.strategies)
        print(f"  {r.cycle:<8} mu={r.mu_max:.1f}  {cells}  "
              f"improvement {r.improvement_pct:6.2f}%")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_sweep(args, cfg) -> int:
    p_f, dsoc = sweep_sensitivity(args.p_dem, args.v, args.lam_f, args.lam_r,
                                  args.points, cfg)
    path = os.path.join(args.out, "sweep.csv")
    save_sweep(path, p_f, dsoc)
    finite = np.isfinite(dsoc)
    if finite.any():
        i = int(np.flatnonzero(finite)[np.argmin(dsoc[finite])])
        print(f"minimizer P_f = {p_f[i]:.1f} W (dSoC {dsoc[i]:.6g} pp)")
    print(f"wrote {path}")
    return 0


def cmd_calibrate(args, cfg) -> int:
    ref = np.genfromtxt(args.reference, delimiter=",", names=True)
    try:
        t_ref, soc_ref = ref["t_s"], ref["soc"]
    except (KeyError, ValueError):
        raise PowersplitError(
            f"{args.reference}: expected CSV columns t_s and soc") from None
    span = _split_floats(args.span)
    if len(span) != 2:
        raise PowersplitError("--span expects two numbers: lo,hi")
    result = calibrate_rbatt((t_ref, soc_ref), resolve_cycle(args.cycle), cfg,
                             (span[0], span[1]), xtol=args.xtol)
    print(json.dumps({"r_batt_ohm": result.r_batt, "rmse": result.rmse,
                      "degenerate": result.degenerate,
                      "n_evals": result.n_evals}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML or JSON configuration file")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for optional demand-noise injection")
    common.add_argument("--out", default=".", metavar="DIR",
                        help="artifact directory (default: current)")

    p = argparse.ArgumentParser(
        prog="powersplit",
        description="Stochastic front/rear power-split management for a "
                    "four-in-wheel-motor electric vehicle.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-tpm", parents=[common],
                       help="estimate the demand transition matrix from drive cycles")
    s.add_argument("--cycles", default="ftp75,hwfet,nycc",
                   help="comma-separated bundled names or CSV paths")
    s.add_argument("--mu", type=float, default=None, help="peak friction override")
    s.set_defaults(func=cmd_build_tpm)

    s = sub.add_parser("train-sdp", parents=[common],
                       help="train the stochastic split policy from a TPM artifact")
    s.add_argument("--tpm", metavar="PATH", help="TPM artifact (default: OUT/tpm.csv)")
    s.set_defaults(func=cmd_train_sdp)

    s = sub.add_parser("fit-grdp", parents=[common],
                       help="solve cycle-specific DP and fit the linear rule")
    s.add_argument("--cycle", default="ftp75")
    s.add_argument("--duration", type=float, default=None,
                   help="truncate the cycle to this many seconds")
    s.add_argument("--v-bin", type=float, default=0.25,
                   help="stage-table speed bin [m/s]")
    s.add_argument("--p-bin", type=float, default=250.0,
                   help="stage-table demand bin [W]")
    s.set_defaults(func=cmd_fit_grdp)

    s = sub.add_parser("simulate", parents=[common],
                       help="closed-loop run of one strategy over one cycle")
    s.add_argument("--cycle", default="udds")
    s.add_argument("--strategy", default="ed", choices=("ed", "grdp", "sdp"))
    s.add_argument("--mu", type=float, default=None)
    s.add_argument("--policy", metavar="PATH")
    s.add_argument("--rule", metavar="PATH")
    s.add_argument("--no-skid", action="store_true", help="disable the slip overlay")
    s.add_argument("--trace", metavar="PATH", help="write per-step CSV here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", parents=[common],
                       help="depletion table over cycles x friction levels")
    s.add_argument("--cycles", default="ftp75,hwfet,nycc,udds")
    s.add_argument("--mu", default="0.2,0.5,0.9")
    s.add_argument("--strategies", default="ed,sdp")
    s.add_argument("--policy", metavar="PATH")
    s.add_argument("--rule", metavar="PATH")
    s.add_argument("--no-skid", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", parents=[common],
                       help="one-step depletion versus front share at one state")
    s.add_argument("--p-dem", type=float, required=True, help="total demand [W]")
    s.add_argument("--v", type=float, default=10.0, help="speed [m/s]")
    s.add_argument("--lam-f", type=float, default=0.0)
    s.add_argument("--lam-r", type=float, default=0.0)
    s.add_argument("--points", type=int, default=41)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("calibrate", parents=[common],
                       help="recover battery resistance from a reference SoC trace")
    s.add_argument("--reference", required=True, metavar="PATH",
                   help="CSV with columns t_s,soc")
    s.add_argument("--cycle", default="udds")
    s.add_argument("--span", default="0.02,0.15", help="search span lo,hi [ohm]")
    s.add_argument("--xtol", type=float, default=1e-4)
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        os.makedirs(args.out, exist_ok=True)
        return args.func(args, cfg)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PowersplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
