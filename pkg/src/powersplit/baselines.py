"""Benchmark split strategies: equal distribution, cycle-specific DP, a fitted rule.

Equal distribution (ED) sends half the demand to each axle. Deterministic
dynamic programming (DP) optimizes the split over a known demand trace with
the vehicle speed pinned to the cycle, so only the two slip ratios remain as
state. The generalized rule (GRDP) is the least-squares line through the DP
solution's (P_dem, P_f) cloud, usable on cycles the DP never saw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as _k
from .config import Config
from .cycles import DriveCycle, resample
from .errors import ArtifactMismatch, DegenerateFit, InfeasibleStage, MissingArtifact, ParseError
from .markov import quantize
from .plant import AxleCommand, PackedPlant

_NWORK = 37  # scratch length required by the kernel table builders


def ed_policy(p_dem: float) -> AxleCommand:
    """Equal distribution: half the demand to each axle."""
    half = 0.5 * float(p_dem)
    return AxleCommand(P_f=half, P_r=half)


# ---------------------------------------------------------------------------
# Linear rule fitted to a DP solution


@dataclass(frozen=True)
class LinearRule:
    """Front share as a line in total demand: P_f = a * P_dem + b."""

    a: float            # slope [-]
    b: float            # intercept [W]
    r_squared: float = 1.0
    n_points: int = 0

    def __post_init__(self):
        for name in ("a", "b", "r_squared"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def p_f(self, p_dem: float, lo: float = -math.inf, hi: float = math.inf) -> float:
        """Apply the rule, clamped to the feasible front-power span."""
        return min(max(self.a * float(p_dem) + self.b, lo), hi)


def grdp_fit(trajectory: "DpTrajectory") -> LinearRule:
    """Ordinary least squares of the DP front share on total demand."""
    p = np.asarray(trajectory.p_dem, dtype=np.float64)
    f = np.asarray(trajectory.p_f, dtype=np.float64)
    if p.size == 0:
        raise ValueError("trajectory is empty")
    if np.ptp(p) == 0.0:
        raise DegenerateFit("all demand samples identical; slope is unidentifiable")
    a, b = np.polyfit(p, f, 1)
    resid = f - (a * p + b)
    sst = float(np.sum((f - f.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0.0 else 1.0
    return LinearRule(a=float(a), b=float(b), r_squared=r2, n_points=int(p.size))


def save_rule(path, rule: LinearRule, meta: dict = None) -> None:
    """Write a fitted rule as a small JSON artifact."""
    doc = {"kind": "grdp-rule", "a": rule.a, "b": rule.b,
           "r_squared": rule.r_squared, "n_points": rule.n_points}
    if meta:
        doc["meta"] = meta
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_rule(path) -> LinearRule:
    """Read a rule artifact written by save_rule."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise MissingArtifact(f"rule file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"rule file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("kind") != "grdp-rule":
        raise ArtifactMismatch(f"{path} is not a grdp-rule artifact")
    try:
        return LinearRule(a=float(doc["a"]), b=float(doc["b"]),
                          r_squared=float(doc.get("r_squared", 1.0)),
                          n_points=int(doc.get("n_points", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactMismatch(f"rule file {path} malformed: {exc}") from None


# ---------------------------------------------------------------------------
# Deterministic DP with the speed pinned to the cycle


@dataclass(frozen=True)
class StageTables:
    """Per-stage cost/successor tables over the slip-pair state.

    Stages with nearly identical (speed, demand) share one table row: the
    pair is snapped to (v_bin, p_bin) bin centres before evaluation, which
    bounds the number of kernel sweeps by the number of distinct bins
    rather than the trace length. Both DP and any fixed sequence evaluated
    through evaluate_sequence see the same binned stage model, so their
    costs are exactly comparable.
    """

    t: np.ndarray        # stage start times [s]
    v: np.ndarray        # pinned stage speeds [m/s]
    p_dem: np.ndarray    # stage demand [W]
    bins: np.ndarray     # table row used by each stage
    vp: np.ndarray       # (n_bins, 2) bin-centre (v, P_dem) actually evaluated
    cost: np.ndarray     # (n_bins, n_lam^2, n_u) stage cost [SoC pp + penalty]
    nxt: np.ndarray      # (n_bins, n_lam^2, n_u) successor slip-pair index
    lam_grid: np.ndarray
    u_grid: np.ndarray

    @property
    def n_stages(self) -> int:
        return self.t.shape[0]

    def slip_index(self, lam_f: float, lam_r: float) -> int:
        """Packed index of the nearest slip-node pair."""
        nl = self.lam_grid.shape[0]
        return quantize(lam_f, self.lam_grid) * nl + quantize(lam_r, self.lam_grid)


def build_stage_tables(t, v, p_dem, cfg: Config, *, v_bin: float = 0.25,
                       p_bin: float = 250.0) -> StageTables:
    """Evaluate stage cost/successor tables for a pinned (speed, demand) trace."""
    t = np.ascontiguousarray(t, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    p = np.ascontiguousarray(p_dem, dtype=np.float64)
    if not (t.shape == v.shape == p.shape) or t.ndim != 1 or t.size == 0:
        raise ValueError("t, v and p_dem must be equal-length nonempty 1-d arrays")
    if v_bin <= 0.0 or p_bin <= 0.0:
        raise ValueError("bin widths must be > 0")
    g = cfg.grid
    iv = np.rint(v / v_bin).astype(np.int64)
    ip = np.rint(p / p_bin).astype(np.int64)
    if np.any(iv < 0) or np.any(np.abs(ip) >= (1 << 31)):
        raise ValueError("speed must be nonnegative and demand within the bin key range")
    keys = iv * (1 << 32) + (ip + (1 << 31))
    uniq, bins = np.unique(keys, return_inverse=True)
    vp = np.empty((uniq.shape[0], 2), dtype=np.float64)
    vp[:, 0] = (uniq >> 32) * v_bin
    vp[:, 1] = ((uniq & 0xFFFFFFFF) - (1 << 31)) * p_bin
    nl, nu = g.n_lam, g.n_u
    cost = np.empty((vp.shape[0], nl * nl, nu), dtype=np.float64)
    nxt = np.empty((vp.shape[0], nl * nl, nu), dtype=np.intc)
    pp = PackedPlant(cfg.plant)
    work = np.empty(_NWORK)
    _k.build_split_tables(vp, g.lam_grid, g.u_grid, pp.par,
                          pp.om_nodes, pp.tq_nodes, pp.eta_t, pp.eta_r,
                          cfg.sdp.soc_nominal, 0.0, cfg.sdp.dt_sdp, cfg.sdp.alpha,
                          cfg.skid.lambda_crit,
                          1 if cfg.skid.extend_to_traction else 0,
                          cfg.sdp.lam_drive_cap, cost, nxt, work)
    cost[cost >= _k.COST_INF] = np.inf  # kernel sentinel -> real inf
    return StageTables(t=t, v=v, p_dem=p, bins=bins.astype(np.intp), vp=vp,
                       cost=cost, nxt=nxt.astype(np.intp),
                       lam_grid=g.lam_grid.copy(), u_grid=g.u_grid.copy())


@dataclass(frozen=True)
class DpTrajectory:
    """Forward rollout of the optimal split sequence."""

    t: np.ndarray          # [s]
    p_dem: np.ndarray      # [W]
    p_f: np.ndarray        # optimal front share [W]
    u_idx: np.ndarray = None
    cost: float = math.nan  # total stage cost along the rollout
    diagnostics: dict = field(default_factory=dict)


def evaluate_sequence(tables: StageTables, u_idx, lam0=(0.0, 0.0)) -> float:
    """Total stage cost of a fixed control-index sequence through the tables."""
    u_idx = np.asarray(u_idx, dtype=np.intp)
    if u_idx.shape != (tables.n_stages,):
        raise ValueError("sequence length must equal the stage count")
    d = tables.slip_index(*lam0)
    total = 0.0
    for i in range(tables.n_stages):
        b = tables.bins[i]
        c = tables.cost[b, d, u_idx[i]]
        if not np.isfinite(c):
            raise InfeasibleStage(
                f"control {u_idx[i]} inadmissible at stage {i} (t={tables.t[i]:.1f} s)")
        total += c
        d = tables.nxt[b, d, u_idx[i]]
    return total


def ed_sequence(tables: StageTables) -> np.ndarray:
    """Equal distribution expressed on the control grid: nearest node to P_dem/2."""
    out = np.empty(tables.n_stages, dtype=np.intp)
    for i in range(tables.n_stages):
        out[i] = quantize(0.5 * tables.p_dem[i], tables.u_grid)
    return out


def dp_solve(tables: StageTables, lam0=(0.0, 0.0)) -> DpTrajectory:
    """Backward induction plus forward rollout over prebuilt stage tables.

    Ties at a stage break to the node closest to half the demand, then to
    the lower index, matching the stochastic solver's convention.
    """
    n = tables.n_stages
    nl2 = tables.cost.shape[1]
    value = np.zeros(nl2)
    pi = np.empty((n, nl2), dtype=np.int16)
    for i in range(n - 1, -1, -1):
        b = tables.bins[i]
        q = tables.cost[b] + value[tables.nxt[b]]
        qmin = q.min(axis=1)
        w = np.abs(tables.u_grid[None, :] - 0.5 * tables.p_dem[i])
        pi[i] = np.argmin(np.where(q <= qmin[:, None], w, np.inf), axis=1)
        value = qmin

    d = tables.slip_index(*lam0)
    u_idx = np.empty(n, dtype=np.intp)
    p_f = np.empty(n)
    total = 0.0
    for i in range(n):
        b = tables.bins[i]
        u = int(pi[i, d])
        c = tables.cost[b, d, u]
        if not np.isfinite(c):
            raise InfeasibleStage(
                f"no admissible control at stage {i} (t={tables.t[i]:.1f} s)")
        u_idx[i] = u
        p_f[i] = tables.u_grid[u]
        total += c
        d = tables.nxt[b, d, u]
    diag = {"n_stages": n, "n_bins": int(tables.vp.shape[0]),
            "value_at_start": float(value[tables.slip_index(*lam0)])}
    return DpTrajectory(t=tables.t.copy(), p_dem=tables.p_dem.copy(), p_f=p_f,
                        u_idx=u_idx, cost=total, diagnostics=diag)


def deterministic_dp(cycle: DriveCycle, cfg: Config, *, demand=None,
                     lam0=(0.0, 0.0), v_bin: float = 0.25,
                     p_bin: float = 250.0) -> DpTrajectory:
    """Optimal split sequence for one cycle under a known demand trace.

    The speed profile is pinned to the resampled cycle; the demand trace
    defaults to a closed-loop equal-distribution pass so the DP problem is
    fully determined before optimization starts.
    """
    rs = resample(cycle, cfg.sdp.dt_sdp)
    if demand is None:
        from .harness import simulate
        demand = simulate(cycle, "ed", cfg).p_dem
    demand = np.asarray(demand, dtype=np.float64)
    if demand.shape != rs.t.shape:
        raise ValueError("demand trace length must match the resampled cycle")
    tables = build_stage_tables(rs.t, rs.v, demand, cfg, v_bin=v_bin, p_bin=p_bin)
    return dp_solve(tables, lam0=lam0)


def save_dp_trajectory(path, traj: DpTrajectory) -> None:
    """Write the (t, P_dem, P_f) trajectory as CSV for downstream plotting."""
    with open(path, "w", newline="") as fh:
        fh.write("t_s,p_dem_w,p_f_w\n")
        for i in range(traj.t.shape[0]):
            fh.write("%.17g,%.17g,%.17g\n" % (traj.t[i], traj.p_dem[i], traj.p_f[i]))
