"""Stochastic power-split solver for the vehicle problem.

Assembles the demand-factored MDP from the plant and the state grids:
each state is a (demand, speed, front slip, rear slip) node, each control
a front-axle power level, the one-step cost is battery depletion over one
decision period plus a small penalty on undelivered demand, and the next
demand level is drawn from the estimated transition matrix. Policy
iteration then yields a time-invariant front-power lookup table, persisted
as CSV with a JSON sidecar that pins the grids, the settings, and the
checksum of the TPM it was trained against.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernel as _k
from . import mdp
from .config import Config
from .errors import ArtifactMismatch, MissingArtifact, ParseError
from .markov import StateGrid, Tpm, tpm_checksum
from .params import Plant, SdpSettings
from .plant import AxleCommand, PackedPlant, VehicleState
from .skid import apply_skid_rules

__all__ = ["Policy", "ValueFunction", "reconstruct_state", "one_step_cost",
           "build_cost_tables", "tie_weight_table", "train_policy",
           "lookup_control", "save_policy", "load_policy"]

_NEV = 6        # eval_cell output slots: cost, v', lam_f', lam_r', dSoC, shortfall
_NWORK = 37     # scratch length required by the kernel table builders
_CRIT_OFF = 10.0  # slip threshold no |lambda| <= 1 can reach: overlay disabled


@dataclass(frozen=True)
class Policy:
    """Trained control law: a control index for every state node."""

    grid: StateGrid
    table: np.ndarray              # (n_states,) index into grid.u_grid
    settings: SdpSettings
    tpm_checksum: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        table = np.ascontiguousarray(self.table, dtype=np.intp)
        if table.shape != (self.grid.n_states,):
            raise ValueError("policy table must have one entry per state")
        if table.min() < 0 or table.max() >= self.grid.n_u:
            raise ValueError("policy table entries must index u_grid")
        object.__setattr__(self, "table", table)

    def p_f(self, s: int) -> float:
        """Front-axle power [W] commanded at state index s."""
        return float(self.grid.u_grid[self.table[s]])


@dataclass(frozen=True)
class ValueFunction:
    """Expected discounted cost-to-go per state [percentage points]."""

    grid: StateGrid
    table: np.ndarray

    def __post_init__(self):
        table = np.ascontiguousarray(self.table, dtype=np.float64)
        if table.shape != (self.grid.n_states,):
            raise ValueError("value table must have one entry per state")
        if not np.all(np.isfinite(table)):
            raise ValueError("value table must be finite")
        object.__setattr__(self, "table", table)


def reconstruct_state(grid: StateGrid, plant: Plant, ip: int, iv: int,
                      ilf: int, ilr: int, soc_nominal: float = 0.7,
                      lam_drive_cap: float = 0.98) -> tuple:
    """Rebuild (VehicleState, P_dem) from grid indices.

    Wheel speeds invert the slip definition for the branch selected by the
    demand sign; the v = 0 node maps to stopped wheels regardless of slip,
    and driving slips are capped below 1 so the inversion stays finite.
    """
    p_dem = float(grid.p_grid[ip])
    v = float(grid.v_grid[iv])
    r_e = plant.vehicle.r_e
    omegas = []
    for il in (ilf, ilr):
        lam = float(grid.lam_grid[il])
        if v <= 0.0:
            omegas.append(0.0)
        elif p_dem >= 0.0:
            omegas.append(v / (r_e * (1.0 - min(lam, lam_drive_cap))))
        else:
            omegas.append(max(0.0, v * (1.0 + lam) / r_e))
    x = VehicleState(v=v, omega_f=omegas[0], omega_r=omegas[1],
                     soc=soc_nominal, theta=0.0)
    return x, p_dem


def one_step_cost(cfg: Config, p_dem: float, v: float, lam_f: float,
                  lam_r: float, p_f: float, *, alpha: float = None,
                  apply_skid: bool = True, packed: PackedPlant = None) -> tuple:
    """Cost and propagated state for one candidate split at one state.

    Returns (xi, info) where info holds the propagated speed and slips,
    the SoC drop in percentage points, and the delivery shortfall [W].
    xi is +inf when the plant rejects the cell (infeasible battery draw or
    singular load transfer). alpha overrides the configured demand-deviation
    weight; apply_skid=False evaluates the raw split with the rule overlay
    off, which is what the sensitivity sweeps want.
    """
    pp = packed or PackedPlant(cfg.plant)
    a = cfg.sdp.alpha if alpha is None else alpha
    crit = cfg.skid.lambda_crit if apply_skid else _CRIT_OFF
    extend = 1 if (apply_skid and cfg.skid.extend_to_traction) else 0
    ev = np.empty(_NEV)
    work = np.empty(_NWORK - _NEV)
    rc = _k.eval_cell(float(p_dem), float(v), float(lam_f), float(lam_r),
                      float(p_f), cfg.sdp.soc_nominal, 0.0, cfg.sdp.dt_sdp,
                      a, crit, extend, cfg.sdp.lam_drive_cap,
                      pp.par, pp.om_nodes, pp.tq_nodes, pp.eta_t, pp.eta_r,
                      ev, work)
    info = {"v": ev[1], "lam_f": ev[2], "lam_r": ev[3],
            "dsoc_pp": ev[4], "shortfall_w": ev[5]}
    if rc != 0:
        return float("inf"), info
    return float(ev[0]), info


def build_cost_tables(cfg: Config, *, progress=None) -> tuple:
    """One-step cost and successor tables for every (state, control) pair.

    Returns (cost, nxt): cost is (n_states, n_u) float64 with +inf for
    infeasible pairs; nxt holds the quantized deterministic successor
    index over the (speed, slips) block. Work proceeds one demand level at
    a time; progress, if given, is called with (done_states, n_states).
    """
    g = cfg.grid
    pp = PackedPlant(cfg.plant)
    n_s, n_u = g.n_states, g.n_u
    cost = np.empty((n_s, n_u), dtype=np.float64)
    nxt = np.empty((n_s, n_u), dtype=np.intc)
    work = np.empty(_NWORK)
    chunk = g.n_det
    extend = 1 if cfg.skid.extend_to_traction else 0
    for ip in range(g.n_p):
        lo = ip * chunk
        _k.build_tables(g.p_grid, g.v_grid, g.lam_grid, g.u_grid,
                        pp.par, pp.om_nodes, pp.tq_nodes, pp.eta_t, pp.eta_r,
                        cfg.sdp.soc_nominal, 0.0, cfg.sdp.dt_sdp,
                        cfg.sdp.alpha, cfg.skid.lambda_crit, extend,
                        cfg.sdp.lam_drive_cap, cost, nxt, lo, lo + chunk, work)
        if progress is not None:
            progress(lo + chunk, n_s)
    cost[cost >= _k.COST_INF] = np.inf  # kernel sentinel -> real inf
    return cost, nxt.astype(np.intp)


def tie_weight_table(grid: StateGrid) -> np.ndarray:
    """Tie-break weight |u - P_dem/2| for every (state, control) pair."""
    p_states = grid.p_grid[np.arange(grid.n_states) // grid.n_det]
    return np.abs(grid.u_grid[None, :] - 0.5 * p_states[:, None])


def train_policy(cfg: Config, tpm: Tpm, *, tables: tuple = None,
                 progress=None, callback=None) -> tuple:
    """Run policy iteration for the vehicle problem.

    Returns (Policy, ValueFunction). tables can carry a precomputed
    (cost, nxt) pair to skip the plant sweep; callback, if given, receives
    (iteration, changed_entries) per policy iteration.
    """
    g = cfg.grid
    if tpm.n != g.n_p:
        raise ArtifactMismatch("TPM size does not match the demand grid")
    cost, nxt = tables if tables is not None else build_cost_tables(
        cfg, progress=progress)
    pi, j, diag = mdp.policy_iteration(
        cost, nxt, tpm.p, cfg.sdp.gamma, tol=cfg.sdp.eval_tol,
        max_eval_sweeps=cfg.sdp.max_eval_sweeps,
        max_policy_iters=cfg.sdp.max_policy_iters,
        tie_weight=tie_weight_table(g), sticky_tol=cfg.sdp.sticky_tol,
        callback=callback)
    policy = Policy(grid=g, table=pi, settings=cfg.sdp,
                    tpm_checksum=tpm_checksum(tpm), diagnostics=diag)
    return policy, ValueFunction(grid=g, table=j)


def lookup_control(policy: Policy, p_dem: float, v: float, lam_f: float,
                   lam_r: float, skid_cfg=None) -> AxleCommand:
    """Measured state -> axle command.

    The measured state quantizes to the nearest grid node (out-of-grid
    speeds clamp to the end node), the table supplies the front power, and
    the rear axle takes the remainder so the split sums to the measured
    demand before any clamping. The skid overlay is applied here only if
    a SkidConfig is passed; the simulation loop normally owns it.
    """
    g = policy.grid
    s = g.state_index(int(_k.quantize_c(g.p_grid, float(p_dem))),
                      int(_k.quantize_c(g.v_grid, float(v))),
                      int(_k.quantize_c(g.lam_grid, float(lam_f))),
                      int(_k.quantize_c(g.lam_grid, float(lam_r))))
    p_f = float(g.u_grid[policy.table[s]])
    cmd = AxleCommand(P_f=p_f, P_r=float(p_dem) - p_f)
    if skid_cfg is not None:
        cmd = apply_skid_rules(lam_f, lam_r, p_dem, cmd, skid_cfg)
    return cmd


def _sidecar_path(csv_path: str) -> str:
    base, _ = os.path.splitext(csv_path)
    return base + ".json"


def save_policy(policy: Policy, csv_path: str) -> None:
    """Persist the policy as CSV plus a JSON sidecar.

    The CSV carries one row per state: the four grid indices, the node
    values they stand for, and the commanded front power. The sidecar
    pins the grids, the solver settings, the TPM checksum, and the
    convergence diagnostics.
    """
    g = policy.grid
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ip", "iv", "ilf", "ilr", "p_dem_w", "v_mps",
                    "lam_f", "lam_r", "p_f_w"])
        for s in range(g.n_states):
            ip, iv, ilf, ilr = g.state_tuple(s)
            w.writerow([ip, iv, ilf, ilr,
                        f"{g.p_grid[ip]:.17g}", f"{g.v_grid[iv]:.17g}",
                        f"{g.lam_grid[ilf]:.17g}", f"{g.lam_grid[ilr]:.17g}",
                        f"{g.u_grid[policy.table[s]]:.17g}"])
    meta = {
        "kind": "policy",
        "grids": g.to_dict(),
        "settings": asdict(policy.settings),
        "tpm_checksum": policy.tpm_checksum,
        "diagnostics": {k: v for k, v in policy.diagnostics.items()},
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def load_policy(csv_path: str, grid: StateGrid = None,
                tpm: Tpm = None) -> Policy:
    """Load a policy artifact, validating grids and the TPM binding.

    Raises MissingArtifact if either file is absent, ArtifactMismatch if
    the sidecar grids differ from the active configuration or the TPM
    checksum does not match the supplied TPM.
    """
    side = _sidecar_path(csv_path)
    if not os.path.exists(csv_path) or not os.path.exists(side):
        raise MissingArtifact(f"policy artifact not found: {csv_path}")
    with open(side) as fh:
        meta = json.load(fh)
    if meta.get("kind") != "policy":
        raise ArtifactMismatch(f"{side} is not a policy sidecar")
    saved_grid = StateGrid.from_dict(meta["grids"])
    if grid is not None and not saved_grid.matches(grid):
        raise ArtifactMismatch(
            f"{csv_path}: sidecar grids differ from the active configuration")
    if tpm is not None:
        want = meta.get("tpm_checksum", "")
        have = tpm_checksum(tpm)
        if want and want != have:
            raise ArtifactMismatch(
                f"{csv_path}: trained against a different TPM "
                f"({want[:12]}... vs {have[:12]}...)")
    table = np.empty(saved_grid.n_states, dtype=np.intp)
    seen = np.zeros(saved_grid.n_states, dtype=bool)
    with open(csv_path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[0] != "ip":
            raise ParseError(f"{csv_path}: expected a policy header row")
        for row in r:
            ip, iv, ilf, ilr = (int(x) for x in row[:4])
            s = saved_grid.state_index(ip, iv, ilf, ilr)
            p_f = float(row[8])
            iu = int(np.argmin(np.abs(saved_grid.u_grid - p_f)))
            if abs(saved_grid.u_grid[iu] - p_f) > 1e-6:
                raise ArtifactMismatch(
                    f"{csv_path}: P_f {p_f} is not a u_grid node")
            table[s] = iu
            seen[s] = True
    if not seen.all():
        raise ArtifactMismatch(f"{csv_path}: missing rows for some states")
    settings = SdpSettings(**meta.get("settings", {}))
    return Policy(grid=saved_grid, table=table, settings=settings,
                  tpm_checksum=meta.get("tpm_checksum", ""),
                  diagnostics=meta.get("diagnostics", {}))
