"""Control-oriented longitudinal plant: forces, tires, wheels, motors, battery.

Thin, validated wrappers around the numerical core in _kernel. The kernel
works on a flat parameter vector; pack_params() is the only place that
builds it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel as k
from .errors import InfeasiblePower, SingularLoadTransfer
from .params import BatteryParams, MotorParams, Plant, TireParams, VehicleParams


@dataclass(frozen=True)
class VehicleState:
    v: float            # longitudinal speed [m/s]
    omega_f: float      # front wheel angular speed [rad/s]
    omega_r: float      # rear wheel angular speed [rad/s]
    soc: float          # state of charge [-]
    theta: float = 0.0  # road grade [rad]

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError(f"soc {self.soc} outside [0, 1]")


@dataclass(frozen=True)
class AxleCommand:
    P_f: float  # total front-axle wheel power [W]
    P_r: float  # total rear-axle wheel power [W]


@dataclass(frozen=True)
class AxleSolution:
    F_N_f1: float   # per-wheel front normal force [N]
    F_N_r1: float   # per-wheel rear normal force [N]
    a_x: float      # chassis acceleration [m/s^2]
    mu_f: float
    mu_r: float
    lam_f: float
    lam_r: float
    F_a: float
    F_rr: float     # effective (zero at standstill)
    F_g: float
    F_d: float      # total drive/brake force on the body [N]


@dataclass(frozen=True)
class StepDiag:
    a_x: float
    lam_f: float
    lam_r: float
    P_batt: float       # mean over the step [W]
    delivered_f: float  # mean delivered front-axle power [W]
    delivered_r: float  # mean delivered rear-axle power [W]
    clamped: bool       # any motor power/torque clamp bound
    pbatt_clamped: bool
    charge: float       # integral of current [A s]
    micro_steps: int


def pack_params(plant: Plant) -> np.ndarray:
    """Flatten a Plant bundle into the kernel's parameter vector."""
    veh, tire, mot, bat = plant.vehicle, plant.tire, plant.motor, plant.battery
    par = np.empty(k.NPAR, dtype=np.float64)
    par[k.PAR_M] = veh.m
    par[k.PAR_AREA] = veh.A
    par[k.PAR_RHO] = veh.rho
    par[k.PAR_CA] = veh.C_a
    par[k.PAR_CRR] = veh.C_rr
    par[k.PAR_L] = veh.L
    par[k.PAR_LF] = veh.L_f
    par[k.PAR_LR] = veh.L_r
    par[k.PAR_H] = veh.h
    par[k.PAR_RE] = veh.r_e
    par[k.PAR_IW] = veh.I_w
    par[k.PAR_G] = veh.g
    par[k.PAR_TB] = tire.B
    par[k.PAR_TC] = tire.C
    par[k.PAR_TD] = tire.D
    par[k.PAR_TE] = tire.E
    par[k.PAR_MUMAX] = tire.mu_max
    par[k.PAR_MUSLOPE] = tire.mu_slope_max
    par[k.PAR_PWMAX] = mot.P_w_max
    par[k.PAR_TMAXMOT] = mot.T_max_motor
    par[k.PAR_TMAXREGEN] = mot.T_max_regen
    par[k.PAR_VOC] = bat.V_oc
    par[k.PAR_RBATT] = bat.R_batt
    par[k.PAR_EMAX] = bat.E_max
    par[k.PAR_PBATTMAX] = bat.P_batt_max
    par[k.PAR_OMEGAMIN] = plant.omega_min
    par[k.PAR_SLIPEPS] = plant.slip_eps
    par[k.PAR_NSUB] = float(plant.n_substeps)
    par[k.PAR_MICROSAFETY] = plant.micro_safety
    par[k.PAR_MICROCAP] = float(plant.micro_cap)
    return par


class PackedPlant:
    """Plant bundle pre-packed for the kernel; immutable once built."""

    __slots__ = ("plant", "par", "om_nodes", "tq_nodes", "eta_t", "eta_r")

    def __init__(self, plant: Plant):
        self.plant = plant
        self.par = pack_params(plant)
        self.om_nodes = plant.motor.omega_nodes
        self.tq_nodes = plant.motor.torque_nodes
        self.eta_t = plant.motor.eta_trac
        self.eta_r = plant.motor.eta_regen


def friction_coefficient(lam: float, tire: TireParams) -> float:
    """Magic-formula friction coefficient at a slip ratio."""
    return k.magic_mu(lam, tire.B, tire.C, tire.D, tire.E, tire.mu_max)


def slip_ratio(v: float, omega: float, r_e: float, mode: str = "driving",
               eps: float = 0.1) -> float:
    """Slip ratio for the given operation mode, clamped to [-1, 1].

    Returns 0 when both the vehicle and the wheel surface are slower than eps.
    """
    if mode not in ("driving", "braking"):
        raise ValueError(f"mode must be 'driving' or 'braking', got {mode!r}")
    return k.slip_ratio_c(v, omega, r_e, mode == "driving", eps)


def resistive_forces(v: float, theta: float, p: VehicleParams) -> tuple[float, float, float]:
    """(aerodynamic drag, rolling resistance, grade force) in N."""
    F_a = 0.5 * p.rho * p.A * p.C_a * v * v
    F_rr = p.m * p.g * np.cos(theta) * p.C_rr
    F_g = p.m * p.g * np.sin(theta)
    return float(F_a), float(F_rr), float(F_g)


def solve_axle_loads(v: float, omega_f: float, omega_r: float, theta: float,
                     p: VehicleParams, tire: TireParams,
                     drive_f: bool = True, drive_r: bool = True,
                     slip_eps: float = 0.1) -> AxleSolution:
    """Close the slip/load-transfer/acceleration coupling at one instant.

    Friction coefficients are frozen at the current slips, which makes the
    coupled system linear in a_x; the closed form is evaluated by the kernel.
    Rolling resistance acts only above standstill, so the parked vehicle
    carries the exact static loads.
    """
    plant = Plant(vehicle=p, tire=tire, slip_eps=slip_eps)
    par = pack_params(plant)
    ax = np.empty(k.NAX, dtype=np.float64)
    if k.axle_solve_c(v, omega_f, omega_r, theta, drive_f, drive_r, par, ax):
        raise SingularLoadTransfer(
            f"load-transfer denominator below 1e-9 at v={v}, slips "
            f"({ax[5]}, {ax[6]})")
    return AxleSolution(F_N_f1=ax[0], F_N_r1=ax[1], a_x=ax[2], mu_f=ax[3],
                        mu_r=ax[4], lam_f=ax[5], lam_r=ax[6], F_a=ax[7],
                        F_rr=ax[8], F_g=ax[9], F_d=ax[10])


def torque_from_power(P_w: float, omega: float, motor: MotorParams,
                      omega_min: float = 0.5) -> float:
    """Motor-shaft torque for a per-wheel power, with the launch floor and limits."""
    om_eff = omega if omega > omega_min else omega_min
    T = P_w / om_eff
    if T > motor.T_max_motor:
        return motor.T_max_motor
    if T < -motor.T_max_regen:
        return -motor.T_max_regen
    return T


def brake_blend(T_demand: float, motor: MotorParams) -> tuple[float, float]:
    """Split a braking torque demand into (regenerative, friction) shares."""
    if T_demand > 0.0:
        raise ValueError("brake_blend expects T_demand <= 0")
    T_regen = max(T_demand, -motor.T_max_regen)
    T_fric = T_demand - T_regen
    return T_regen, T_fric


def motor_battery_power(P_w: float, omega: float, plant: Plant,
                        packed: PackedPlant | None = None) -> float:
    """Battery-side power for one wheel's commanded power.

    Traction divides by the map efficiency (the battery supplies more than
    the wheel receives); regeneration multiplies by it and respects the
    regen torque and electrical power caps.
    """
    pp = packed if packed is not None else PackedPlant(plant)
    w = np.empty(3, dtype=np.float64)
    k.wheel_power_c(P_w, omega, pp.par, pp.om_nodes, pp.tq_nodes,
                    pp.eta_t, pp.eta_r, w)
    return float(w[1])


def battery_current(P_batt: float, b: BatteryParams) -> float:
    """Pack current for a power draw; positive discharges."""
    i = k.battery_current_c(P_batt, b.V_oc, b.R_batt)
    if i != i:  # NaN
        raise InfeasiblePower(
            f"P_batt={P_batt} W exceeds the feasible domain "
            f"V_oc^2/(4R) = {b.V_oc ** 2 / (4 * b.R_batt):.1f} W")
    return float(i)


def soc_step(soc: float, i: float, dt: float, b: BatteryParams) -> float:
    """Coulomb-counting SoC update; discharge depletes."""
    return float(min(1.0, max(0.0, soc - i * dt / b.E_max)))


def plant_step(x: VehicleState, cmd: AxleCommand, dt: float, plant: Plant,
               packed: PackedPlant | None = None) -> tuple[VehicleState, StepDiag]:
    """Advance the plant one step under a zero-order-hold axle command."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    pp = packed if packed is not None else PackedPlant(plant)
    out = np.empty(k.NOUT, dtype=np.float64)
    work = np.empty(k.NAX + 6, dtype=np.float64)
    code = k.step_core(x.v, x.omega_f, x.omega_r, x.soc, x.theta,
                       cmd.P_f, cmd.P_r, dt, pp.par,
                       pp.om_nodes, pp.tq_nodes, pp.eta_t, pp.eta_r, out, work)
    if code == 1:
        raise SingularLoadTransfer(f"singular load transfer during step from v={x.v}")
    if code == 2:
        raise InfeasiblePower(f"battery power infeasible during step from v={x.v}")
    x1 = VehicleState(v=out[k.OUT_V], omega_f=out[k.OUT_OMF],
                      omega_r=out[k.OUT_OMR], soc=out[k.OUT_SOC], theta=x.theta)
    diag = StepDiag(a_x=out[k.OUT_AX], lam_f=out[k.OUT_LAMF],
                    lam_r=out[k.OUT_LAMR], P_batt=out[k.OUT_PBATT],
                    delivered_f=out[k.OUT_DELF], delivered_r=out[k.OUT_DELR],
                    clamped=bool(out[k.OUT_CLAMP]),
                    pbatt_clamped=bool(out[k.OUT_PBCLAMP]),
                    charge=out[k.OUT_CHARGE], micro_steps=int(out[k.OUT_MICRO]))
    return x1, diag
