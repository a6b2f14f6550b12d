"""Closed-loop evaluation: simulate strategies over cycles, compare, calibrate.

One simulate() loop serves every split strategy; a strategy is either the
string "ed", a fitted LinearRule, a trained Policy, or any callable taking
(p_dem, state, lam_f, lam_r) and returning an AxleCommand. The skid overlay
is owned by the loop so all strategies face identical safety behavior, and
can be switched off to measure its cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .baselines import LinearRule, ed_policy
from .config import Config
from .cycles import DriveCycle, Driver, resample, resolve_cycle, target_accel
from .errors import MissingArtifact, PowersplitError, SpanTooNarrow
from .plant import AxleCommand, PackedPlant, VehicleState, plant_step
from .sdp import Policy, lookup_control, one_step_cost
from .skid import CASE_PASS, apply_skid_rules, rule_case

#: extra slip beyond the rule threshold counted as a violation in summaries
SLIP_MARGIN = 0.05


@dataclass(frozen=True)
class SimTrace:
    """Per-step records plus summary scalars for one closed-loop run.

    Record i holds the state seen by the driver at t[i] (v, soc carried in),
    the commanded split for the step starting there, and the slip/battery
    measurements produced while that step ran. soc[i] is the state of charge
    after step i completes, so soc[-1] is the end-of-cycle value.
    """

    t: np.ndarray            # [s]
    v_target: np.ndarray     # [m/s]
    v: np.ndarray            # speed entering the step [m/s]
    p_dem: np.ndarray        # driver demand [W]
    p_f: np.ndarray          # commanded front-axle power after overlay [W]
    p_r: np.ndarray          # commanded rear-axle power after overlay [W]
    delivered_f: np.ndarray  # mean delivered front-axle power [W]
    delivered_r: np.ndarray  # mean delivered rear-axle power [W]
    lam_f: np.ndarray        # front slip measured during the step [-]
    lam_r: np.ndarray        # rear slip measured during the step [-]
    soc: np.ndarray          # state of charge after the step [-]
    p_batt: np.ndarray       # mean battery power over the step [W]
    clamped: np.ndarray      # bool: any motor/battery clamp bound
    skid_case: np.ndarray    # overlay rule cell fired (0 = pass-through)
    dsoc_pp: float           # (soc_start - soc_end) * 100
    rms_speed_error: float   # [m/s]
    slip_violations: int     # samples with |slip| beyond threshold + margin
    strategy: str
    mu_max: float
    cycle_name: str = ""

    def __len__(self) -> int:
        return self.t.shape[0]


def _with_mu(cfg: Config, mu_max: float) -> Config:
    tire = replace(cfg.plant.tire, mu_max=float(mu_max))
    return replace(cfg, plant=replace(cfg.plant, tire=tire))


def _strategy_fn(strategy, cfg: Config):
    """Normalize a strategy spec to (label, splitter callable)."""
    g = cfg.grid
    lo, hi = float(g.u_grid[0]), float(g.u_grid[-1])
    if isinstance(strategy, str):
        if strategy.lower() != "ed":
            raise ValueError(f"unknown strategy name {strategy!r}; expected 'ed'")
        return "ed", lambda p, x, lf, lr: ed_policy(p)
    if isinstance(strategy, LinearRule):
        def rule_split(p, x, lf, lr, _r=strategy):
            p_f = _r.p_f(p, lo=lo, hi=hi)
            return AxleCommand(P_f=p_f, P_r=p - p_f)
        return "grdp", rule_split
    if isinstance(strategy, Policy):
        return "sdp", lambda p, x, lf, lr, _pol=strategy: lookup_control(_pol, p, x.v, lf, lr)
    if callable(strategy):
        return getattr(strategy, "label", "custom"), strategy
    raise TypeError(f"unsupported strategy object: {type(strategy).__name__}")


def simulate(cycle: DriveCycle, strategy, cfg: Config, *, mu_max: float = None,
             skid_overlay: bool = True, seed: int = None) -> SimTrace:
    """Run one strategy over one cycle in closed loop.

    The driver turns the speed target into a demand, the strategy splits it,
    the overlay (if enabled) screens the split against the last measured
    slips, and the plant advances one step. Optional Gaussian demand noise
    (cfg.sim.demand_noise_std > 0) is the only use of the seed. Plant errors
    abort the run annotated with the failing step index.
    """
    if mu_max is not None:
        cfg = _with_mu(cfg, mu_max)
    label, split = _strategy_fn(strategy, cfg)
    rs = resample(cycle, cfg.sdp.dt_sdp)
    acc = target_accel(rs)
    n = len(rs)
    dt = cfg.sdp.dt_sdp
    g = cfg.grid
    plant = cfg.plant
    packed = PackedPlant(plant)
    driver = Driver(cfg.driver, p_min=float(g.p_grid[0]), p_max=float(g.p_grid[-1]))
    noise_std = cfg.sim.demand_noise_std
    rng = np.random.default_rng(seed) if noise_std > 0.0 else None

    cols = {name: np.empty(n) for name in
            ("t", "v_target", "v", "p_dem", "p_f", "p_r", "delivered_f",
             "delivered_r", "lam_f", "lam_r", "soc", "p_batt")}
    clamped = np.zeros(n, dtype=bool)
    skid_case = np.zeros(n, dtype=np.int8)

    v0 = float(rs.v[0])
    omega0 = v0 / plant.vehicle.r_e
    x = VehicleState(v=v0, omega_f=omega0, omega_r=omega0,
                     soc=cfg.sim.soc_initial, theta=cfg.sim.theta)
    soc_start = x.soc
    lam_f_m = 0.0
    lam_r_m = 0.0
    for i in range(n):
        p_dem = driver.demand(x, float(rs.v[i]), float(acc[i]), plant, dt)
        if rng is not None:
            p_dem = min(max(p_dem + noise_std * rng.standard_normal(),
                            driver.p_min), driver.p_max)
        cmd = split(p_dem, x, lam_f_m, lam_r_m)
        case = CASE_PASS
        if skid_overlay:
            case = rule_case(lam_f_m, lam_r_m, p_dem, cfg.skid)
            cmd = apply_skid_rules(lam_f_m, lam_r_m, p_dem, cmd, cfg.skid)
        cols["t"][i] = rs.t[i]
        cols["v_target"][i] = rs.v[i]
        cols["v"][i] = x.v
        cols["p_dem"][i] = p_dem
        cols["p_f"][i] = cmd.P_f
        cols["p_r"][i] = cmd.P_r
        skid_case[i] = case
        try:
            x, diag = plant_step(x, cmd, dt, plant, packed)
        except PowersplitError as exc:
            raise type(exc)(f"aborted at step {i} (t={rs.t[i]:.1f} s): {exc}") from exc
        cols["delivered_f"][i] = diag.delivered_f
        cols["delivered_r"][i] = diag.delivered_r
        cols["lam_f"][i] = diag.lam_f
        cols["lam_r"][i] = diag.lam_r
        cols["soc"][i] = x.soc
        cols["p_batt"][i] = diag.P_batt
        clamped[i] = diag.clamped or diag.pbatt_clamped
        lam_f_m = diag.lam_f
        lam_r_m = diag.lam_r

    thr = cfg.skid.lambda_crit + SLIP_MARGIN
    viol = int(np.sum((np.abs(cols["lam_f"]) > thr) | (np.abs(cols["lam_r"]) > thr)))
    err = cols["v_target"] - cols["v"]
    return SimTrace(**cols, clamped=clamped, skid_case=skid_case,
                    dsoc_pp=(soc_start - x.soc) * 100.0,
                    rms_speed_error=float(np.sqrt(np.mean(err * err))),
                    slip_violations=viol, strategy=label,
                    mu_max=cfg.plant.tire.mu_max, cycle_name=cycle.name)


_TRACE_COLUMNS = ("t", "v_target", "v", "p_dem", "p_f", "p_r", "delivered_f",
                  "delivered_r", "lam_f", "lam_r", "soc", "p_batt")
_TRACE_HEADER = ("t_s,v_target_mps,v_mps,p_dem_w,p_f_w,p_r_w,delivered_f_w,"
                 "delivered_r_w,lam_f,lam_r,soc,p_batt_w,clamped,skid_case")


def save_trace(path, trace: SimTrace) -> None:
    """Write the per-step records as CSV (full double precision)."""
    with open(path, "w", newline="") as fh:
        fh.write(_TRACE_HEADER + "\n")
        for i in range(len(trace)):
            vals = ",".join("%.17g" % getattr(trace, c)[i] for c in _TRACE_COLUMNS)
            fh.write("%s,%d,%d\n" % (vals, trace.clamped[i], trace.skid_case[i]))


def trace_summary(trace: SimTrace) -> dict:
    return {"cycle": trace.cycle_name, "strategy": trace.strategy,
            "mu_max": trace.mu_max, "dsoc_pp": trace.dsoc_pp,
            "rms_speed_error_mps": trace.rms_speed_error,
            "slip_violations": trace.slip_violations, "samples": len(trace)}


# ---------------------------------------------------------------------------
# Strategy comparison


def improvement_pct(dsoc_ed: float, dsoc_other: float) -> float:
    """Relative depletion saved versus equal distribution, in percent."""
    if dsoc_ed == 0.0:
        return math.nan
    return 100.0 * (dsoc_ed - dsoc_other) / dsoc_ed


@dataclass(frozen=True)
class ComparisonRow:
    cycle: str
    mu_max: float
    dsoc_pp: dict                 # strategy label -> depletion [pp]
    improvement_pct: float = math.nan  # ED vs SDP when both present


@dataclass(frozen=True)
class ComparisonTable:
    strategies: tuple
    rows: tuple

    def to_json(self, path) -> None:
        doc = {"kind": "comparison", "strategies": list(self.strategies),
               "rows": [{"cycle": r.cycle, "mu_max": r.mu_max,
                         "dsoc_pp": r.dsoc_pp,
                         "improvement_pct": r.improvement_pct}
                        for r in self.rows]}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            head = ["cycle", "mu_max"] + [f"dsoc_pp_{s}" for s in self.strategies]
            fh.write(",".join(head + ["improvement_pct"]) + "\n")
            for r in self.rows:
                cells = [r.cycle, "%.17g" % r.mu_max]
                cells += ["%.17g" % r.dsoc_pp[s] for s in self.strategies]
                cells.append("%.17g" % r.improvement_pct)
                fh.write(",".join(cells) + "\n")


def compare(cycles, mus, strategies, cfg: Config, *, policy: Policy = None,
            rule: LinearRule = None, skid_overlay: bool = True,
            seed: int = None, progress=None) -> ComparisonTable:
    """Depletion table over the (cycle, friction) cross product.

    cycles is a list of bundled-cycle names, CSV paths, or DriveCycle
    objects; strategies is drawn from {"ed", "grdp", "sdp"}. The cells are
    mutually independent (each run owns its plant and driver), evaluated
    here in a deterministic (cycle, mu) row order.
    """
    resolved = [c if isinstance(c, DriveCycle) else resolve_cycle(c)
                for c in cycles]
    chosen = []
    for s in strategies:
        key = s.lower()
        if key == "ed":
            chosen.append(("ed", "ed"))
        elif key == "grdp":
            if rule is None:
                raise MissingArtifact("comparison includes 'grdp' but no fitted rule was given")
            chosen.append(("grdp", rule))
        elif key == "sdp":
            if policy is None:
                raise MissingArtifact("comparison includes 'sdp' but no trained policy was given")
            chosen.append(("sdp", policy))
        else:
            raise ValueError(f"unknown strategy {s!r}; expected ed, grdp or sdp")
    rows = []
    for cyc in resolved:
        for mu in mus:
            dsoc = {}
            for label, strat in chosen:
                trace = simulate(cyc, strat, cfg, mu_max=mu,
                                 skid_overlay=skid_overlay, seed=seed)
                dsoc[label] = trace.dsoc_pp
                if progress is not None:
                    progress(cyc.name, mu, label, trace.dsoc_pp)
            imp = math.nan
            if "ed" in dsoc and "sdp" in dsoc:
                imp = improvement_pct(dsoc["ed"], dsoc["sdp"])
            rows.append(ComparisonRow(cycle=cyc.name, mu_max=float(mu),
                                      dsoc_pp=dsoc, improvement_pct=imp))
    return ComparisonTable(strategies=tuple(label for label, _ in chosen),
                           rows=tuple(rows))


# ---------------------------------------------------------------------------
# One-step sensitivity sweep


def sweep_sensitivity(p_dem: float, v: float, lam_f: float, lam_r: float,
                      n: int, cfg: Config, *, span: tuple = None) -> tuple:
    """Depletion of one plant step as a function of the front share.

    Evaluates the raw one-step cost with the demand-deviation penalty off
    and the skid overlay disabled, so the curve shows pure electrical
    economics. The default span runs from 0 to P_dem (all-rear to
    all-front), which is symmetric about P_dem/2; for zero demand it falls
    back to the widest grid span symmetric about 0. Symmetric spans use
    mirrored offsets so paired arguments are bitwise equal. Returns
    (p_f, dsoc_pp) arrays.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    g = cfg.grid
    center = 0.5 * p_dem
    if span is None:
        if p_dem != 0.0:
            span = (min(0.0, p_dem), max(0.0, p_dem))
        else:
            half = min(0.0 - g.u_grid[0], g.u_grid[-1] - 0.0)
            span = (-half, half)
    lo, hi = float(span[0]), float(span[1])
    if not lo < hi:
        raise ValueError("span must satisfy lo < hi")
    if n % 2 == 1 and abs((lo + hi) - 2.0 * center) < 1e-9:
        offs = np.linspace(0.0, hi - center, (n + 1) // 2)
        p_f = np.concatenate([(center - offs[:0:-1]), center + offs])
    else:
        p_f = np.linspace(lo, hi, n)
    packed = PackedPlant(cfg.plant)
    dsoc = np.empty(n)
    for i in range(n):
        xi, _ = one_step_cost(cfg, p_dem, v, lam_f, lam_r, float(p_f[i]),
                              alpha=0.0, apply_skid=False, packed=packed)
        dsoc[i] = xi
    return p_f, dsoc


def save_sweep(path, p_f: np.ndarray, dsoc: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("p_f_w,dsoc_pp\n")
        for i in range(p_f.shape[0]):
            fh.write("%.17g,%.17g\n" % (p_f[i], dsoc[i]))


# ---------------------------------------------------------------------------
# Battery-resistance calibration


@dataclass(frozen=True)
class CalibrationResult:
    r_batt: float       # [ohm]
    rmse: float         # SoC RMSE at the minimizer [-]
    degenerate: bool    # objective flat across the span (R unidentifiable)
    n_evals: int
    span: tuple


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def calibrate_rbatt(reference, cycle: DriveCycle, cfg: Config, span: tuple, *,
                    strategy="ed", xtol: float = 1e-4) -> CalibrationResult:
    """Recover the battery internal resistance from a reference SoC trace.

    Golden-section search minimizes the RMSE between the simulated and
    reference SoC over R in the span. The reference must be time-aligned
    with the resampled cycle (same sample times). Raises SpanTooNarrow when
    the minimizer lands on a span edge, unless the objective is flat (a
    zero-demand cycle), which is reported as degenerate instead.
    """
    t_ref = np.asarray(reference[0], dtype=np.float64)
    soc_ref = np.asarray(reference[1], dtype=np.float64)
    rs = resample(cycle, cfg.sdp.dt_sdp)
    if t_ref.shape != rs.t.shape or np.max(np.abs(t_ref - rs.t)) > 1e-9:
        raise ValueError("reference trace is not time-aligned with the cycle")
    lo, hi = float(span[0]), float(span[1])
    if not 0.0 < lo < hi:
        raise ValueError("span must satisfy 0 < lo < hi")
    if xtol <= 0.0:
        raise ValueError("xtol must be > 0")

    evals = {"n": 0}
    seen = []

    def f(r: float) -> float:
        bat = replace(cfg.plant.battery, R_batt=r)
        cfg_r = replace(cfg, plant=replace(cfg.plant, battery=bat))
        trace = simulate(cycle, strategy, cfg_r)
        evals["n"] += 1
        err = trace.soc - soc_ref
        val = float(np.sqrt(np.mean(err * err)))
        seen.append(val)
        return val

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    r_hat = 0.5 * (a + b)
    rmse = fc if fc <= fd else fd
    degenerate = (max(seen) - min(seen)) <= 1e-12
    if not degenerate and (r_hat - lo <= 2.0 * xtol or hi - r_hat <= 2.0 * xtol):
        raise SpanTooNarrow(
            f"minimizer {r_hat:.6g} sits at the edge of span [{lo:.6g}, {hi:.6g}]")
    return CalibrationResult(r_batt=r_hat, rmse=rmse, degenerate=degenerate,
                             n_evals=evals["n"], span=(lo, hi))
