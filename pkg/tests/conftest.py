"""Shared fixtures: one trained policy and one demand model per session.

The expensive artifacts (cost tables, the trained split policy, the
deterministic-DP reference trajectory) are built once and reused by the
module tests and the acceptance tests. Wall-clock times for the heavy
builds are recorded so the acceptance tests can assert runtime budgets.
"""
import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from powersplit import (Config, default_config, builtin_cycle, resample,
                        estimate_tpm, train_policy, simulate)
from powersplit.baselines import (build_stage_tables, dp_solve, ed_sequence,
                                  evaluate_sequence, grdp_fit)
from powersplit.sdp import build_cost_tables

TPM_CYCLES = ("ftp75", "hwfet", "nycc")  # udds held out for validation


@pytest.fixture(scope="session")
def cfg() -> Config:
    return default_config()


@pytest.fixture(scope="session")
def timings() -> dict:
    return {}


@pytest.fixture(scope="session")
def demand_traces(cfg):
    """Equal-distribution closed-loop demand [W] on the training cycles."""
    out = {}
    for name in TPM_CYCLES:
        out[name] = simulate(builtin_cycle(name), "ed", cfg).p_dem
    return out


@pytest.fixture(scope="session")
def tpm(cfg, demand_traces):
    return estimate_tpm(list(demand_traces.values()), cfg.grid)


@pytest.fixture(scope="session")
def cost_tables(cfg, timings):
    t0 = time.perf_counter()
    tables = build_cost_tables(cfg)
    timings["cost_tables_s"] = time.perf_counter() - t0
    return tables


@pytest.fixture(scope="session")
def trained(cfg, tpm, cost_tables, timings):
    t0 = time.perf_counter()
    policy, value = train_policy(cfg, tpm, tables=cost_tables)
    timings["train_s"] = time.perf_counter() - t0
    return policy, value


@pytest.fixture(scope="session")
def policy(trained):
    return trained[0]


@pytest.fixture(scope="session")
def dp_reference(cfg):
    """Deterministic DP on a truncated cycle segment with coarse bins.

    The CLI default runs the full cycle at (0.25 m/s, 250 W) bins; the
    tests use the first 120 s of the urban cycle at (1.0 m/s, 2000 W) so
    the whole suite stays fast. The linear fit is less sharp on the short
    segment but every structural property is unchanged.
    """
    cyc = builtin_cycle("ftp75")
    keep = cyc.t <= 120.0
    seg = resample(type(cyc)(name="ftp75-120s", t=cyc.t[keep], v=cyc.v[keep]),
                   cfg.sdp.dt_sdp)
    p_dem = simulate(seg, "ed", cfg).p_dem
    tables = build_stage_tables(seg.t, seg.v, p_dem, cfg,
                                v_bin=1.0, p_bin=2000.0)
    traj = dp_solve(tables)
    ed_cost = evaluate_sequence(tables, ed_sequence(tables))
    return SimpleNamespace(cycle=seg, p_dem=p_dem, tables=tables, traj=traj,
                           ed_cost=ed_cost)


@pytest.fixture(scope="session")
def grdp_rule(dp_reference):
    return grdp_fit(dp_reference.traj)


@pytest.fixture(scope="session")
def toy_cfg(cfg):
    """Three-control configuration for exhaustive-enumeration oracles."""
    grid = replace(cfg.grid, u_grid=np.array([-2000.0, 2000.0, 6000.0]))
    return replace(cfg, grid=grid)
