"""Stochastic front/rear power-split management for a four-in-wheel-motor EV.

The package covers the full pipeline: a control-oriented longitudinal plant,
drive-cycle ingestion and a tracking driver, demand-transition estimation,
a discounted policy-iteration solver producing a time-invariant split policy,
a slip-band rule overlay, baseline strategies, and a simulation harness with
a CLI front end.
"""
from . import _kernel
from .baselines import LinearRule, deterministic_dp, ed_policy, grdp_fit
from .config import Config, default_config, load_config
from .cycles import DriveCycle, builtin_cycle, builtin_cycles, load_cycle, resample
from .errors import PowersplitError
from .harness import (ComparisonTable, SimTrace, calibrate_rbatt, compare,
                      simulate, sweep_sensitivity)
from .markov import StateGrid, Tpm, estimate_tpm, load_tpm, save_tpm
from .params import (BatteryParams, DriverParams, MotorParams, Plant,
                     SdpSettings, SimSettings, SkidConfig, TireParams,
                     VehicleParams)
from .plant import AxleCommand, VehicleState, plant_step
from .sdp import Policy, load_policy, lookup_control, save_policy, train_policy

__version__ = "0.1.0"


def kernel_info() -> dict:
    """Which numerical core is active: compiled extension or Python fallback."""
    return _kernel.kernel_info()


__all__ = [
    "AxleCommand", "BatteryParams", "ComparisonTable", "Config", "DriveCycle",
    "DriverParams", "LinearRule", "MotorParams", "Plant", "Policy",
    "PowersplitError", "SdpSettings", "SimSettings", "SimTrace", "SkidConfig",
    "StateGrid", "TireParams", "Tpm", "VehicleParams", "VehicleState",
    "builtin_cycle", "builtin_cycles", "calibrate_rbatt", "compare",
    "default_config", "deterministic_dp", "ed_policy", "estimate_tpm",
    "grdp_fit", "kernel_info", "load_config", "load_cycle", "load_policy",
    "load_tpm", "lookup_control", "plant_step", "resample", "save_policy",
    "save_tpm", "simulate", "sweep_sensitivity", "train_policy", "__version__",
]
