"""Parameter bundles for the plant, driver, and solvers.

Every physical constant lives here or in the config file, never inline in the
numerics. Bundles are frozen dataclasses so they can be shared across workers
without copying; ndarray fields are treated as read-only by convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace  # noqa: F401  (replace re-exported for tests)

import numpy as np

from .errors import ConfigError


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class VehicleParams:
    m: float = 800.0      # vehicle mass [kg]
    A: float = 1.66       # frontal area [m^2]
    rho: float = 1.2      # air density [kg/m^3]
    C_a: float = 0.30     # aerodynamic drag coefficient [-]
    C_rr: float = 0.010   # rolling resistance coefficient [-]
    L: float = 1.84       # wheelbase [m]
    L_f: float = 0.92     # CG to front axle [m]
    L_r: float = 0.92     # CG to rear axle [m]
    h: float = 0.6        # CG height [m]
    r_e: float = 0.33     # tire effective radius [m]
    I_w: float = 1.0      # wheel spin inertia [kg m^2]
    g: float = 9.81       # gravity [m/s^2]

    def __post_init__(self):
        for name in ("m", "A", "rho", "C_a", "C_rr", "L", "L_f", "L_r", "r_e", "I_w", "g"):
            _require(getattr(self, name) > 0.0, f"vehicle.{name} must be > 0")
        # h = 0 is a legitimate idealization (no load transfer), used in symmetry tests
        _require(self.h >= 0.0, "vehicle.h must be >= 0")
        _require(abs(self.L - (self.L_f + self.L_r)) <= 1e-9, "vehicle.L must equal L_f + L_r")


@dataclass(frozen=True)
class TireParams:
    B: float = 10.0       # stiffness factor [-]
    C: float = 1.9        # shape factor [-]
    D: float = 1.0        # peak factor [-]
    E: float = 0.97       # curvature factor [-]
    mu_max: float = 0.8   # peak friction scale [-]

    def __post_init__(self):
        for name in ("B", "C", "D", "mu_max"):
            _require(getattr(self, name) > 0.0, f"tire.{name} must be > 0")
        _require(0.0 <= self.E < 1.0 + 1e-12, "tire.E must lie in [0, 1]")

    @property
    def mu_slope_max(self) -> float:
        # max |d(mu)/d(lambda)|, attained at lambda = 0; used for integrator stability bounds
        return self.mu_max * self.D * self.C * self.B


# Default motor-map grid axes. Dense near zero where efficiency collapses.
_OMEGA_NODES = (0.0, 1.0, 2.0, 3.5, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0,
                40.0, 55.0, 70.0, 85.0, 100.0, 120.0)
_TORQUE_NODES = (0.0, 2.0, 5.0, 10.0, 20.0, 35.0, 55.0, 80.0, 110.0, 145.0, 185.0, 250.0)


@dataclass(frozen=True)
class MotorParams:
    omega_nodes: np.ndarray       # map axis, wheel speed [rad/s], strictly increasing
    torque_nodes: np.ndarray      # map axis, |torque| [Nm], strictly increasing
    eta_trac: np.ndarray          # (n_omega, n_torque) driving efficiency in (0, 1]
    eta_regen: np.ndarray         # (n_omega, n_torque) regeneration efficiency in (0, 1]
    P_w_max: float = 7500.0       # per-motor power limit [W]
    T_max_motor: float = 250.0    # driving torque limit [Nm]
    T_max_regen: float = 80.0     # regenerative braking torque limit [Nm]

    def __post_init__(self):
        om = np.ascontiguousarray(self.omega_nodes, dtype=np.float64)
        tq = np.ascontiguousarray(self.torque_nodes, dtype=np.float64)
        et = np.ascontiguousarray(self.eta_trac, dtype=np.float64)
        er = np.ascontiguousarray(self.eta_regen, dtype=np.float64)
        object.__setattr__(self, "omega_nodes", om)
        object.__setattr__(self, "torque_nodes", tq)
        object.__setattr__(self, "eta_trac", et)
        object.__setattr__(self, "eta_regen", er)
        _require(om.ndim == 1 and om.size >= 2 and np.all(np.diff(om) > 0),
                 "motor.omega_nodes must be 1-D strictly increasing")
        _require(tq.ndim == 1 and tq.size >= 2 and np.all(np.diff(tq) > 0),
                 "motor.torque_nodes must be 1-D strictly increasing")
        for name, grid in (("eta_trac", et), ("eta_regen", er)):
            _require(grid.shape == (om.size, tq.size),
                     f"motor.{name} shape must be (n_omega, n_torque)")
            _require(bool(np.all((grid > 0.0) & (grid <= 1.0))),
                     f"motor.{name} values must lie in (0, 1]")
        for name in ("P_w_max", "T_max_motor", "T_max_regen"):
            _require(getattr(self, name) > 0.0, f"motor.{name} must be > 0")

    @classmethod
    def from_loss_model(cls, k_c: float = 0.012, k_i: float = 4.0, k_w: float = 2e-4,
                        k_0: float = 220.0, k_v: float = 0.002, eta_floor: float = 0.05,
                        omega_nodes=_OMEGA_NODES, torque_nodes=_TORQUE_NODES,
                        P_w_max: float = 7500.0, T_max_motor: float = 250.0,
                        T_max_regen: float = 80.0) -> "MotorParams":
        """Build the default parametric map from a loss model.

        Loss at an (omega, T) node is k_c*T^2 (winding) + k_i*omega + k_w*omega^3
        (spin) + k_0 (standby, paid only while the motor is powered) +
        k_v*omega*P_mech (speed-proportional conversion loss). Efficiency
        collapses toward the floor as omega -> 0, peaks at mid speed and mid
        torque, and degrades along constant power toward high wheel speed, so
        a spinning wheel is the wrong place to send power. eta_floor keeps
        every grid value positive.
        """
        om = np.asarray(omega_nodes, dtype=np.float64)
        tq = np.asarray(torque_nodes, dtype=np.float64)
        w, t = np.meshgrid(om, tq, indexing="ij")
        p_mech = w * t
        loss = k_c * t * t + k_i * w + k_w * w ** 3 + k_0 + k_v * w * p_mech
        with np.errstate(divide="ignore", invalid="ignore"):
            trac = np.where(p_mech > 0.0, p_mech / (p_mech + loss), 0.0)
            regen = np.where(p_mech > 0.0, 1.0 - loss / p_mech, 0.0)
        trac = np.clip(trac, eta_floor, 1.0)
        regen = np.clip(regen, eta_floor, 1.0)
        return cls(omega_nodes=om, torque_nodes=tq, eta_trac=trac, eta_regen=regen,
                   P_w_max=P_w_max, T_max_motor=T_max_motor, T_max_regen=T_max_regen)


@dataclass(frozen=True)
class BatteryParams:
    V_oc: float = 237.6         # open-circuit pack voltage [V] (72 cells x 3.3 V)
    R_batt: float = 0.063       # internal resistance [ohm]
    E_max: float = 720000.0     # capacity [C] (200 Ah)
    P_batt_max: float = 40000.0  # symmetric pack power limit [W]

    def __post_init__(self):
        for name in ("V_oc", "R_batt", "E_max", "P_batt_max"):
            _require(getattr(self, name) > 0.0, f"battery.{name} must be > 0")


@dataclass(frozen=True)
class Plant:
    """The full plant bundle handed to the integrator and solvers."""
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tire: TireParams = field(default_factory=TireParams)
    motor: MotorParams = field(default_factory=MotorParams.from_loss_model)
    battery: BatteryParams = field(default_factory=BatteryParams)
    omega_min: float = 0.5      # wheel-speed floor for power/torque conversion [rad/s]
    slip_eps: float = 0.1       # both-speeds-dead threshold for slip ratio [m/s]
    n_substeps: int = 10        # Euler sub-steps per integration step
    micro_safety: float = 0.5   # stability margin for in-substep micro-stepping
    micro_cap: int = 64         # max micro-steps per sub-step

    def __post_init__(self):
        _require(self.omega_min > 0.0, "plant.omega_min must be > 0")
        _require(self.slip_eps > 0.0, "plant.slip_eps must be > 0")
        _require(self.n_substeps >= 1, "plant.n_substeps must be >= 1")
        _require(0.0 < self.micro_safety <= 1.0, "plant.micro_safety must be in (0, 1]")
        _require(self.micro_cap >= 1, "plant.micro_cap must be >= 1")


@dataclass(frozen=True)
class DriverParams:
    k_p: float = 800.0           # proportional gain [W per m/s]
    k_i: float = 40.0            # integral gain [W per m]
    use_feedforward: bool = True

    def __post_init__(self):
        _require(self.k_p >= 0.0, "driver.k_p must be >= 0")
        _require(self.k_i >= 0.0, "driver.k_i must be >= 0")


@dataclass(frozen=True)
class SkidConfig:
    lambda_crit: float = 0.2        # slip band half-width [-]
    extend_to_traction: bool = True  # mirror the braking rules for positive slip

    def __post_init__(self):
        _require(0.0 < self.lambda_crit < 1.0, "skid.lambda_crit must be in (0, 1)")


@dataclass(frozen=True)
class SdpSettings:
    gamma: float = 0.95          # discount factor [-]
    alpha: float = 1e-9          # demand-shortfall weight [1/W^2]
    eval_tol: float = 1e-9       # policy-evaluation sweep stop tolerance
    max_eval_sweeps: int = 1000
    max_policy_iters: int = 50
    dt_sdp: float = 0.1          # decision period [s]
    soc_nominal: float = 0.7     # SoC used when reconstructing grid states
    lam_drive_cap: float = 0.98  # cap on driving slip when inverting for wheel speed
    # Indifference band for policy improvement [cost units]: keep the previous
    # action when it is within this of the argmin. The value function is only
    # known to ~eval_tol/(1-gamma), so argmin flips below that scale are
    # floating-point noise; a band above it lets the change count reach 0.
    sticky_tol: float = 1e-7

    def __post_init__(self):
        _require(0.0 < self.gamma < 1.0, "sdp.gamma must lie in (0, 1)")
        _require(self.alpha >= 0.0, "sdp.alpha must be >= 0")
        _require(self.eval_tol > 0.0, "sdp.eval_tol must be > 0")
        _require(self.max_eval_sweeps >= 1, "sdp.max_eval_sweeps must be >= 1")
        _require(self.max_policy_iters >= 1, "sdp.max_policy_iters must be >= 1")
        _require(self.dt_sdp > 0.0, "sdp.dt_sdp must be > 0")
        _require(0.0 < self.soc_nominal < 1.0, "sdp.soc_nominal must lie in (0, 1)")
        _require(0.0 < self.lam_drive_cap < 1.0, "sdp.lam_drive_cap must lie in (0, 1)")
        _require(self.sticky_tol >= 0.0, "sdp.sticky_tol must be >= 0")


@dataclass(frozen=True)
class SimSettings:
    soc_initial: float = 0.9     # starting SoC for every comparison run
    theta: float = 0.0           # road grade [rad]
    demand_noise_std: float = 0.0  # optional demand noise [W]; 0 keeps runs deterministic

    def __post_init__(self):
        _require(0.0 < self.soc_initial <= 1.0, "sim.soc_initial must lie in (0, 1]")
        _require(self.demand_noise_std >= 0.0, "sim.demand_noise_std must be >= 0")
