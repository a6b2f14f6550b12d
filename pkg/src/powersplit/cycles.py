"""Drive cycles and the speed-tracking driver.

A drive cycle is a timestamped target-speed trace. This module loads
cycles from two-column CSV (optionally with a header row), ships four
bundled synthetic cycles as package data, resamples traces onto the
decision period, and converts target speed into demanded total wheel
power through a feedforward-plus-PI driver with an anti-windup clamp at
the demand-grid bounds.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import NonMonotoneTime, ParseError
from .params import DriverParams, Plant
from .plant import VehicleState, resistive_forces

__all__ = ["DriveCycle", "load_cycle", "resample", "builtin_cycles",
           "builtin_cycle", "resolve_cycle", "target_accel",
           "Driver", "demand_power", "SPEED_UNITS"]

SPEED_UNITS = {"mps": 1.0, "mph": 0.44704, "kph": 1.0 / 3.6}

_BUILTIN_NAMES = ("udds", "ftp75", "hwfet", "nycc")
_BUILTIN_UNIT = "mph"


@dataclass(frozen=True)
class DriveCycle:
    """Target-speed trace: t strictly increasing [s], v >= 0 [m/s]."""

    name: str
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        if t.ndim != 1 or t.shape != v.shape or t.size < 1:
            raise ValueError("cycle needs matching 1-D t and v arrays")
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneTime(f"{self.name}: time must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(t)):
            raise ValueError(f"{self.name}: speeds must be finite and >= 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __len__(self) -> int:
        return self.t.size


def _parse_cycle(fh, name: str, speed_unit: str) -> DriveCycle:
    try:
        scale = SPEED_UNITS[speed_unit]
    except KeyError:
        raise ParseError(f"unknown speed unit {speed_unit!r}; "
                         f"use one of {', '.join(SPEED_UNITS)}") from None
    ts, vs = [], []
    for k, row in enumerate(csv.reader(fh), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < 2:
            raise ParseError(f"{name}:{k}: expected two columns t,v")
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError:
            if k == 1:
                continue  # header row
            raise ParseError(f"{name}:{k}: non-numeric row") from None
        ts.append(t)
        vs.append(v * scale)
    if not ts:
        raise ParseError(f"{name}: no samples")
    try:
        return DriveCycle(name=name, t=np.asarray(ts), v=np.asarray(vs))
    except ValueError as e:
        raise ParseError(str(e)) from None


def load_cycle(path: str, speed_unit: str = "mps") -> DriveCycle:
    """Load a two-column CSV cycle (t, v); converts speed to m/s."""
    name = str(path)
    with open(path, newline="") as fh:
        return _parse_cycle(fh, name, speed_unit)


def builtin_cycles() -> tuple:
    """Names of the bundled cycles."""
    return _BUILTIN_NAMES


def builtin_cycle(name: str) -> DriveCycle:
    """Load a bundled cycle by name."""
    if name not in _BUILTIN_NAMES:
        raise ParseError(f"unknown bundled cycle {name!r}; "
                         f"available: {', '.join(_BUILTIN_NAMES)}")
    text = (resources.files("powersplit") / "data" / "cycles" /
            f"{name}.csv").read_text()
    return _parse_cycle(io.StringIO(text), name, _BUILTIN_UNIT)


def resolve_cycle(spec: str, speed_unit: str = "mps") -> DriveCycle:
    """Accept either a bundled cycle name or a CSV path."""
    if spec in _BUILTIN_NAMES:
        return builtin_cycle(spec)
    return load_cycle(spec, speed_unit)


def resample(cycle: DriveCycle, dt: float) -> DriveCycle:
    """Linear interpolation onto a uniform grid; endpoints preserved."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    span = cycle.t[-1] - cycle.t[0]
    n = int(np.floor(span / dt + 1e-9)) + 1
    t = cycle.t[0] + dt * np.arange(n)
    v = np.interp(t, cycle.t, cycle.v)
    # keep the exact endpoint when dt divides the span
    if abs(t[-1] - cycle.t[-1]) < 1e-9:
        t[-1] = cycle.t[-1]
        v[-1] = cycle.v[-1]
    return DriveCycle(name=cycle.name, t=t, v=v)


def target_accel(cycle: DriveCycle) -> np.ndarray:
    """Target acceleration by central finite difference [m/s^2]."""
    return np.gradient(cycle.v, cycle.t)


def demand_power(x: VehicleState, v_target: float, a_target: float,
                 driver: DriverParams, plant: Plant,
                 integral: float = 0.0,
                 p_min: float = -12000.0, p_max: float = 19000.0) -> float:
    """Demanded total wheel power [W], clamped to the demand-grid span.

    Feedforward plans the force balance at the target point; the PI terms
    correct the tracking error, with `integral` the accumulated error in
    meters owned by the caller's loop.
    """
    err = v_target - x.v
    p = driver.k_p * err + driver.k_i * integral
    if driver.use_feedforward:
        f_a, f_rr, f_g = resistive_forces(v_target, x.theta, plant.vehicle)
        p += (plant.vehicle.m * a_target + f_a + f_rr + f_g) * v_target
    return min(p_max, max(p_min, p))


class Driver:
    """Stateful wrapper around demand_power with anti-windup.

    The error integral only accumulates while the output is not saturated
    against the grid bound in the same direction, so a long clamp (a hill
    the plant cannot climb, a hard stop beyond regen capacity) does not
    wind the integrator up.
    """

    def __init__(self, params: DriverParams, p_min: float = -12000.0,
                 p_max: float = 19000.0):
        self.params = params
        self.p_min = float(p_min)
        self.p_max = float(p_max)
        self.integral = 0.0  # accumulated speed error [m]

    def reset(self) -> None:
        self.integral = 0.0

    def demand(self, x: VehicleState, v_target: float, a_target: float,
               plant: Plant, dt: float) -> float:
        err = v_target - x.v
        trial = self.integral + err * dt
        p = demand_power(x, v_target, a_target, self.params, plant,
                         integral=trial, p_min=self.p_min, p_max=self.p_max)
        saturated_up = p >= self.p_max and err > 0
        saturated_down = p <= self.p_min and err < 0
        if not (saturated_up or saturated_down):
            self.integral = trial
        return p
