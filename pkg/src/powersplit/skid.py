"""Skid-avoidance rule overlay.

When an axle's slip ratio leaves the desired band, the rules force that
axle's power to zero and, when only one axle violates, redirect the full
demand to the healthy axle. Braking-side slips always trigger the rules;
the traction-side mirror is enabled by the extend_to_traction flag.
Redirects happen before plant clamps, so an over-limit redirect is
saturated downstream and shows up as a delivery shortfall.
"""
from __future__ import annotations

from . import _kernel as _k
from .params import SkidConfig
from .plant import AxleCommand

import numpy as np

__all__ = ["apply_skid_rules", "rule_case", "CASE_PASS", "CASE_BOTH_ZERO",
           "CASE_REDIRECT_REAR", "CASE_REDIRECT_FRONT"]

# Rule-cell identifiers returned by rule_case.
CASE_PASS = 0            # both slips inside the band: candidate passes through
CASE_BOTH_ZERO = 1       # both axles violated: (0, 0)
CASE_REDIRECT_REAR = 2   # front violated: (0, P_dem)
CASE_REDIRECT_FRONT = 3  # rear violated: (P_dem, 0)


def rule_case(lam_f: float, lam_r: float, p_dem: float,
              cfg: SkidConfig) -> int:
    """Which rule cell fires for this slip pair and demand."""
    out = np.empty(2)
    return int(_k.apply_skid_c(lam_f, lam_r, p_dem, 0.0, 0.0,
                               cfg.lambda_crit,
                               1 if cfg.extend_to_traction else 0, out))


def apply_skid_rules(lam_f: float, lam_r: float, p_dem: float,
                     candidate: AxleCommand, cfg: SkidConfig) -> AxleCommand:
    """Overlay the slip rules on a candidate split.

    Idempotent, and the candidate passes through bit-for-bit when both
    slips are inside the band.
    """
    out = np.empty(2)
    case = _k.apply_skid_c(lam_f, lam_r, p_dem, candidate.P_f, candidate.P_r,
                           cfg.lambda_crit,
                           1 if cfg.extend_to_traction else 0, out)
    if case == CASE_PASS:
        return candidate
    return AxleCommand(P_f=float(out[0]), P_r=float(out[1]))
