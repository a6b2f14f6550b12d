"""Tabular policy iteration for demand-factored Markov decision processes.

The problems solved here have a state s = (i_p, d) where i_p indexes a
Markov demand level with known transition matrix and d indexes everything
the control moves deterministically. States are flattened as
s = i_p * n_det + d. A problem instance is three arrays:

  cost[s, u]  one-step cost, +inf marking infeasible (s, u) pairs
  nxt[s, u]   deterministic successor index d' in [0, n_det)
  tpm[i, j]   row-stochastic demand transition matrix

The expectation over the next demand level couples states only through
the demand axis, so one matrix product per sweep evaluates it for all
states at once.
"""
from __future__ import annotations

import numpy as np

from .errors import NoFeasibleControl, NonConvergence

__all__ = ["greedy_policy", "policy_evaluation", "policy_improvement",
           "policy_iteration", "expected_next_values"]

_INF = np.inf


def _check_shapes(cost: np.ndarray, nxt: np.ndarray, tpm: np.ndarray):
    if cost.ndim != 2 or nxt.shape != cost.shape:
        raise ValueError("cost and nxt must be matching 2-D arrays")
    if tpm.ndim != 2 or tpm.shape[0] != tpm.shape[1]:
        raise ValueError("tpm must be square")
    n_s = cost.shape[0]
    n_p = tpm.shape[0]
    if n_s % n_p != 0:
        raise ValueError("state count must be a multiple of the demand-level count")
    n_det = n_s // n_p
    if nxt.min() < 0 or nxt.max() >= n_det:
        raise ValueError("nxt entries must index the deterministic factor")
    return n_p, n_det


def greedy_policy(cost: np.ndarray, tie_weight: np.ndarray = None) -> np.ndarray:
    """Myopic minimum-cost policy; the feasible starting point.

    Uses the same tie rule as policy_improvement so states whose controls
    all cost the same (for example when a rule overlay rewrites every
    candidate identically) start at the canonical pick rather than index 0.
    Raises NoFeasibleControl if some state has no finite-cost control.
    """
    mins = cost.min(axis=1)
    dead = np.flatnonzero(~np.isfinite(mins))
    if dead.size:
        raise NoFeasibleControl(
            f"{dead.size} state(s) admit no feasible control, first={int(dead[0])}")
    if tie_weight is None:
        return cost.argmin(axis=1).astype(np.intp)
    ties = cost <= mins[:, None]
    return np.argmin(tie_weight + np.where(ties, 0.0, _INF), axis=1).astype(np.intp)


def expected_next_values(j: np.ndarray, tpm: np.ndarray, n_det: int) -> np.ndarray:
    """E over next demand of J at each (current demand, next det) pair.

    Returns a flat array indexed by i_p * n_det + d'.
    """
    return (tpm @ j.reshape(tpm.shape[0], n_det)).ravel()


def policy_evaluation(pi: np.ndarray, cost: np.ndarray, nxt: np.ndarray,
                      tpm: np.ndarray, gamma: float, *, tol: float = 1e-9,
                      max_sweeps: int = 1000, j0: np.ndarray = None) -> tuple:
    """Successive sweeps of the fixed-policy Bellman operator.

    Returns (J, info) with info recording the sweep count and the final
    residual. Raises NonConvergence if the sweep cap is hit while the
    residual is still above 100x the tolerance.
    """
    n_p, n_det = _check_shapes(cost, nxt, tpm)
    n_s = cost.shape[0]
    states = np.arange(n_s)
    xi = cost[states, pi]
    if not np.all(np.isfinite(xi)):
        bad = int(np.flatnonzero(~np.isfinite(xi))[0])
        raise NoFeasibleControl(f"policy picks an infeasible control at state {bad}")
    idx = (states // n_det) * n_det + nxt[states, pi]
    j = np.zeros(n_s) if j0 is None else np.array(j0, dtype=np.float64)
    residual = _INF
    for sweep in range(1, max_sweeps + 1):
        j_new = xi + gamma * expected_next_values(j, tpm, n_det)[idx]
        residual = float(np.max(np.abs(j_new - j)))
        j = j_new
        if residual < tol:
            return j, {"sweeps": sweep, "residual": residual}
    if residual > 100.0 * tol:
        raise NonConvergence(
            f"policy evaluation: residual {residual:.3e} after {max_sweeps} sweeps")
    return j, {"sweeps": max_sweeps, "residual": residual}


def policy_improvement(j: np.ndarray, cost: np.ndarray, nxt: np.ndarray,
                       tpm: np.ndarray, gamma: float, *,
                       tie_weight: np.ndarray = None,
                       incumbent: np.ndarray = None,
                       sticky_tol: float = 0.0) -> np.ndarray:
    """Greedy policy against J, with a deterministic tie rule.

    Exact ties on the action value break toward the smallest tie_weight
    (the vehicle problem passes |u - P_dem/2|), then the lowest control
    index. With an incumbent policy and sticky_tol > 0, the incumbent is
    kept whenever it is within sticky_tol of the minimum, which damps
    limit cycles caused by floating-point ties.
    """
    n_p, n_det = _check_shapes(cost, nxt, tpm)
    n_s = cost.shape[0]
    states = np.arange(n_s)
    ip_base = (states // n_det) * n_det
    q = cost + gamma * expected_next_values(j, tpm, n_det)[ip_base[:, None] + nxt]
    q_min = q.min(axis=1)
    if not np.all(np.isfinite(q_min)):
        bad = int(np.flatnonzero(~np.isfinite(q_min))[0])
        raise NoFeasibleControl(f"no feasible control at state {bad}")
    ties = q <= q_min[:, None]
    if tie_weight is None:
        pi = np.argmax(ties, axis=1).astype(np.intp)
    else:
        big = np.where(ties, 0.0, _INF)
        pi = np.argmin(tie_weight + big, axis=1).astype(np.intp)
    if incumbent is not None and sticky_tol > 0.0:
        keep = q[states, incumbent] <= q_min + sticky_tol
        pi = np.where(keep, incumbent, pi).astype(np.intp)
    return pi


def policy_iteration(cost: np.ndarray, nxt: np.ndarray, tpm: np.ndarray,
                     gamma: float, *, tol: float = 1e-9,
                     max_eval_sweeps: int = 1000, max_policy_iters: int = 50,
                     tie_weight: np.ndarray = None, sticky_tol: float = 0.0,
                     change_floor: int = 0, callback=None) -> tuple:
    """Alternate evaluation and improvement until the policy stops changing.

    Returns (pi, J, diagnostics); diagnostics carries the per-iteration
    changed-entry counts (the convergence curve), evaluation sweep counts,
    and residuals. Raises NonConvergence if the change count is still
    above change_floor after max_policy_iters iterations.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly inside (0, 1)")
    pi = greedy_policy(cost, tie_weight=tie_weight)
    j = None
    diag = {"changes": [], "eval_sweeps": [], "eval_residuals": []}
    for it in range(1, max_policy_iters + 1):
        j, info = policy_evaluation(pi, cost, nxt, tpm, gamma,
                                    tol=tol, max_sweeps=max_eval_sweeps, j0=j)
        pi_new = policy_improvement(j, cost, nxt, tpm, gamma,
                                    tie_weight=tie_weight, incumbent=pi,
                                    sticky_tol=sticky_tol)
        changes = int(np.count_nonzero(pi_new != pi))
        diag["changes"].append(changes)
        diag["eval_sweeps"].append(info["sweeps"])
        diag["eval_residuals"].append(info["residual"])
        pi = pi_new
        if callback is not None:
            callback(it, changes)
        if changes <= change_floor:
            diag["iterations"] = it
            return pi, j, diag
    raise NonConvergence(
        f"policy iteration: {diag['changes'][-1]} changes after "
        f"{max_policy_iters} iterations")
