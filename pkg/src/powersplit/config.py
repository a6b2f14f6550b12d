"""Configuration loading: one structured-text file describing a full run.

A config file is TOML or JSON with sections [vehicle], [tire], [motor],
[battery], [driver], [grid], [sdp], [skid], [sim], and optionally [plant]
for the integrator constants. Every section is optional; omitted keys fall
back to the package defaults, so an empty file reproduces the baseline
vehicle exactly. Unknown sections or keys are rejected rather than
ignored, so a typo cannot silently run the defaults.

The motor map may be given inline through the loss-model constants or as
an external CSV grid referenced by `map_csv` (header
`omega_rad_s,torque_nm,eta_trac,eta_regen`, one row per node pair).
"""
from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ParseError
from .markov import StateGrid, default_u_grid
from .params import (BatteryParams, DriverParams, MotorParams, Plant,
                     SdpSettings, SimSettings, SkidConfig, TireParams,
                     VehicleParams)

__all__ = ["Config", "default_config", "load_config",
           "load_motor_map_csv", "save_motor_map_csv"]

_MOTOR_CSV_HEADER = ["omega_rad_s", "torque_nm", "eta_trac", "eta_regen"]

_SECTIONS = ("vehicle", "tire", "motor", "battery", "driver", "grid",
             "sdp", "skid", "sim", "plant")

_MOTOR_LOSS_KEYS = ("k_c", "k_i", "k_w", "k_0", "k_v", "eta_floor",
                    "omega_nodes", "torque_nodes")
_MOTOR_CAP_KEYS = ("P_w_max", "T_max_motor", "T_max_regen")
_GRID_KEYS = ("p_min", "p_max", "p_step", "u_levels",
              "p_grid", "v_grid", "lam_grid", "u_grid")
_PLANT_KEYS = ("omega_min", "slip_eps", "n_substeps", "micro_safety",
               "micro_cap")


@dataclass(frozen=True)
class Config:
    """Everything a run needs: plant physics, driver, grids, and settings."""

    plant: Plant
    driver: DriverParams
    grid: StateGrid
    sdp: SdpSettings
    skid: SkidConfig
    sim: SimSettings


def default_config() -> Config:
    return Config(plant=Plant(), driver=DriverParams(),
                  grid=StateGrid.default(), sdp=SdpSettings(),
                  skid=SkidConfig(), sim=SimSettings())


def load_motor_map_csv(path: str) -> tuple:
    """Read an efficiency-map CSV; returns (omega_nodes, torque_nodes,
    eta_trac, eta_regen).

    The file must contain every (omega, torque) node pair exactly once.
    """
    pairs = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != _MOTOR_CSV_HEADER:
            raise ParseError(
                f"{path}: header must be {','.join(_MOTOR_CSV_HEADER)}")
        for k, row in enumerate(r, start=2):
            if len(row) != 4:
                raise ParseError(f"{path}:{k}: expected 4 columns")
            try:
                om, tq, et, er = (float(x) for x in row)
            except ValueError as e:
                raise ParseError(f"{path}:{k}: {e}") from None
            if (om, tq) in pairs:
                raise ParseError(f"{path}:{k}: duplicate node ({om}, {tq})")
            pairs[(om, tq)] = (et, er)
    if not pairs:
        raise ParseError(f"{path}: no map rows")
    om_nodes = np.array(sorted({om for om, _ in pairs}))
    tq_nodes = np.array(sorted({tq for _, tq in pairs}))
    if len(pairs) != om_nodes.size * tq_nodes.size:
        raise ParseError(f"{path}: node grid is incomplete "
                         f"({len(pairs)} rows for {om_nodes.size}x{tq_nodes.size})")
    eta_t = np.empty((om_nodes.size, tq_nodes.size))
    eta_r = np.empty_like(eta_t)
    for i, om in enumerate(om_nodes):
        for j, tq in enumerate(tq_nodes):
            eta_t[i, j], eta_r[i, j] = pairs[(om, tq)]
    return om_nodes, tq_nodes, eta_t, eta_r


def save_motor_map_csv(motor: MotorParams, path: str) -> None:
    """Write a MotorParams efficiency map in the CSV exchange format."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_MOTOR_CSV_HEADER)
        for i, om in enumerate(motor.omega_nodes):
            for j, tq in enumerate(motor.torque_nodes):
                w.writerow([f"{om:.17g}", f"{tq:.17g}",
                            f"{motor.eta_trac[i, j]:.17g}",
                            f"{motor.eta_regen[i, j]:.17g}"])


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(
            f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")


def _build_simple(section: str, default, given: dict):
    try:
        return replace(default, **given)
    except TypeError:
        # replace() reports unknown fields as TypeError; normalize
        fields = default.__dataclass_fields__
        _check_keys(section, given, fields)
        raise


def _build_motor(sec: dict, base_dir: str) -> MotorParams:
    _check_keys("motor", sec, ("map_csv",) + _MOTOR_LOSS_KEYS + _MOTOR_CAP_KEYS)
    caps = {k: sec[k] for k in _MOTOR_CAP_KEYS if k in sec}
    if "map_csv" in sec:
        loss_given = [k for k in _MOTOR_LOSS_KEYS if k in sec]
        if loss_given:
            raise ConfigError(
                "[motor] map_csv and loss-model keys are mutually exclusive "
                f"(got {', '.join(loss_given)})")
        path = sec["map_csv"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        om, tq, eta_t, eta_r = load_motor_map_csv(path)
        return MotorParams(omega_nodes=om, torque_nodes=tq,
                           eta_trac=eta_t, eta_regen=eta_r, **caps)
    loss = {k: sec[k] for k in _MOTOR_LOSS_KEYS if k in sec}
    return MotorParams.from_loss_model(**loss, **caps)


def _build_grid(sec: dict) -> StateGrid:
    _check_keys("grid", sec, _GRID_KEYS)
    base = StateGrid.default()
    if "p_grid" in sec:
        if any(k in sec for k in ("p_min", "p_max", "p_step")):
            raise ConfigError("[grid] give p_grid or p_min/p_max/p_step, not both")
        p = np.asarray(sec["p_grid"], dtype=np.float64)
    else:
        p_min = float(sec.get("p_min", base.p_grid[0]))
        p_max = float(sec.get("p_max", base.p_grid[-1]))
        p_step = float(sec.get("p_step", base.p_grid[1] - base.p_grid[0]))
        if p_step <= 0 or p_max <= p_min:
            raise ConfigError("[grid] need p_step > 0 and p_max > p_min")
        p = np.arange(p_min, p_max + 0.5 * p_step, p_step)
    v = np.asarray(sec.get("v_grid", base.v_grid), dtype=np.float64)
    lam = np.asarray(sec.get("lam_grid", base.lam_grid), dtype=np.float64)
    if "u_grid" in sec:
        if "u_levels" in sec:
            raise ConfigError("[grid] give u_grid or u_levels, not both")
        u = np.asarray(sec["u_grid"], dtype=np.float64)
    else:
        u = default_u_grid(p[0], p[-1], int(sec.get("u_levels", base.n_u)))
    try:
        return StateGrid(p_grid=p, v_grid=v, lam_grid=lam, u_grid=u)
    except ValueError as e:
        raise ConfigError(f"[grid] {e}") from None


def _parse_file(path: str) -> dict:
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        if ext == ".json":
            with open(path) as fh:
                return json.load(fh)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    raise ConfigError(f"{path}: config must be a .toml or .json file")


def load_config(path: str) -> Config:
    """Load a config file, falling back to defaults for anything omitted."""
    raw = _parse_file(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s): {', '.join(sorted(unknown))}")
    for name in raw:
        if not isinstance(raw[name], dict):
            raise ConfigError(f"{path}: [{name}] must be a table/object")
    base_dir = os.path.dirname(os.path.abspath(path))
    d = default_config()

    vehicle = _build_simple("vehicle", d.plant.vehicle, raw.get("vehicle", {}))
    tire = _build_simple("tire", d.plant.tire, raw.get("tire", {}))
    battery = _build_simple("battery", d.plant.battery, raw.get("battery", {}))
    motor = _build_motor(raw.get("motor", {}), base_dir)
    plant_extra = raw.get("plant", {})
    _check_keys("plant", plant_extra, _PLANT_KEYS)
    plant = replace(d.plant, vehicle=vehicle, tire=tire, motor=motor,
                    battery=battery, **plant_extra)

    return Config(
        plant=plant,
        driver=_build_simple("driver", d.driver, raw.get("driver", {})),
        grid=_build_grid(raw.get("grid", {})),
        sdp=_build_simple("sdp", d.sdp, raw.get("sdp", {})),
        skid=_build_simple("skid", d.skid, raw.get("skid", {})),
        sim=_build_simple("sim", d.sim, raw.get("sim", {})),
    )
