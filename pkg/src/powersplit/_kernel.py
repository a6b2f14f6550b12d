# cython: boundscheck=False, wraparound=False, cdivision=True
"""Numerical core shared by the plant, the solvers, and the baselines.

Single source for both execution modes: setup.py compiles this file into a C
extension (which then shadows it at import time); without the extension the
same file runs as plain Python. `kernel_info()` reports which mode is active.
Results are bit-identical between modes because the build uses no fast-math
or architecture flags.

Everything here is scalar loop code over typed memoryviews. Callers own all
allocation: public entry points take preallocated `out`/`work` buffers so the
hot loops never touch the allocator. Parameter bundles arrive as a flat
float64 vector packed by plant.pack_params(); the PAR_* indices below are the
single source of truth for its layout.
"""
import cython

if cython.compiled:
    from cython.cimports.libc.math import atan, cos, fabs, sin, sqrt
else:
    from math import atan, cos, fabs, sin, sqrt

# ---- parameter vector layout (see plant.pack_params) ----
PAR_M = 0            # vehicle mass [kg]
PAR_AREA = 1         # frontal area [m^2]
PAR_RHO = 2          # air density [kg/m^3]
PAR_CA = 3           # drag coefficient [-]
PAR_CRR = 4          # rolling resistance coefficient [-]
PAR_L = 5            # wheelbase [m]
PAR_LF = 6           # CG to front axle [m]
PAR_LR = 7           # CG to rear axle [m]
PAR_H = 8            # CG height [m]
PAR_RE = 9           # tire effective radius [m]
PAR_IW = 10          # wheel spin inertia [kg m^2]
PAR_G = 11           # gravity [m/s^2]
PAR_TB = 12          # tire stiffness factor [-]
PAR_TC = 13          # tire shape factor [-]
PAR_TD = 14          # tire peak factor [-]
PAR_TE = 15          # tire curvature factor [-]
PAR_MUMAX = 16       # peak friction scale [-]
PAR_MUSLOPE = 17     # max |d mu/d lambda| = B*C*D*mu_max [-]
PAR_PWMAX = 18       # per-motor power limit [W]
PAR_TMAXMOT = 19     # driving torque limit [Nm]
PAR_TMAXREGEN = 20   # regenerative torque limit [Nm]
PAR_VOC = 21         # open-circuit voltage [V]
PAR_RBATT = 22       # internal resistance [ohm]
PAR_EMAX = 23        # capacity [C]
PAR_PBATTMAX = 24    # pack power limit [W]
PAR_OMEGAMIN = 25    # wheel-speed floor for torque conversion [rad/s]
PAR_SLIPEPS = 26     # both-speeds-dead threshold [m/s]
PAR_NSUB = 27        # Euler sub-steps per step (stored as double)
PAR_MICROSAFETY = 28  # stability margin for micro-stepping
PAR_MICROCAP = 29    # max micro-steps per sub-step (stored as double)
NPAR = 30

# ---- step_core output layout ----
OUT_V = 0            # terminal speed [m/s]
OUT_OMF = 1          # terminal front wheel speed [rad/s]
OUT_OMR = 2          # terminal rear wheel speed [rad/s]
OUT_SOC = 3          # terminal state of charge [-]
OUT_AX = 4           # terminal chassis acceleration [m/s^2]
OUT_LAMF = 5         # terminal front slip [-]
OUT_LAMR = 6         # terminal rear slip [-]
OUT_PBATT = 7        # mean battery power over the step [W]
OUT_DELF = 8         # mean delivered front-axle power [W]
OUT_DELR = 9         # mean delivered rear-axle power [W]
OUT_CLAMP = 10       # 1 if any motor power/torque clamp bound
OUT_CHARGE = 11      # integral of current over the step [A s]
OUT_MICRO = 12       # micro-steps taken
OUT_PBCLAMP = 13     # 1 if the pack power clamp bound
NOUT = 14

# ---- axle solver output layout (internal) ----
# 0 F_N_f1 [N]  1 F_N_r1 [N]  2 a_x [m/s^2]  3 mu_f [-]  4 mu_r [-]
# 5 lam_f [-]   6 lam_r [-]   7 F_a [N]      8 F_rr_eff [N]  9 F_g [N]  10 F_d_tot [N]
NAX = 11

# ---- eval_cell output layout ----
EV_COST = 0          # one-step cost [SoC percentage points]
EV_V = 1             # propagated speed [m/s]
EV_LAMF = 2          # propagated front slip [-]
EV_LAMR = 3          # propagated rear slip [-]
EV_DSOC = 4          # SoC depletion part of the cost [pp]
EV_SHORT = 5         # demand shortfall [W]
NEV = 6

NWORK = NEV + NOUT + NAX + 3 + 3   # work buffer: ev + step out + axle + 2 wheel scratch

COST_INF = 1e30
_NAN = float("nan")


@cython.cfunc
@cython.inline
@cython.exceptval(check=False)
def _clip(x: cython.double, lo: cython.double, hi: cython.double) -> cython.double:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@cython.ccall
@cython.exceptval(check=False)
def magic_mu(lam: cython.double, b: cython.double, c: cython.double,
             d: cython.double, e: cython.double, mu_max: cython.double) -> cython.double:
    """Friction coefficient from slip ratio (magic-formula shape)."""
    g: cython.double = b * lam
    return mu_max * d * sin(c * atan(g - e * (g - atan(g))))


@cython.ccall
@cython.exceptval(check=False)
def slip_ratio_c(v: cython.double, omega: cython.double, r_e: cython.double,
                 driving: cython.bint, eps: cython.double) -> cython.double:
    """Slip ratio with mode-specific normalization, clamped to [-1, 1]."""
    ws: cython.double = r_e * omega
    lam: cython.double
    if v < eps and fabs(ws) < eps:
        return 0.0
    if driving:
        if fabs(ws) < 1e-12:
            return -1.0 if v > 0.0 else 0.0
        lam = (ws - v) / ws
    else:
        if fabs(v) < 1e-12:
            return 1.0 if ws > 0.0 else 0.0
        lam = (ws - v) / v
    return _clip(lam, -1.0, 1.0)


@cython.cfunc
@cython.exceptval(check=False)
def _bilinear(x: cython.double, y: cython.double,
              xn: cython.double[::1], yn: cython.double[::1],
              grid: cython.double[:, ::1]) -> cython.double:
    nx: cython.Py_ssize_t = xn.shape[0]
    ny: cython.Py_ssize_t = yn.shape[0]
    i: cython.Py_ssize_t
    j: cython.Py_ssize_t
    fx: cython.double
    fy: cython.double
    if x <= xn[0]:
        i = 0
        fx = 0.0
    elif x >= xn[nx - 1]:
        i = nx - 2
        fx = 1.0
    else:
        i = 0
        while xn[i + 1] < x:
            i += 1
        fx = (x - xn[i]) / (xn[i + 1] - xn[i])
    if y <= yn[0]:
        j = 0
        fy = 0.0
    elif y >= yn[ny - 1]:
        j = ny - 2
        fy = 1.0
    else:
        j = 0
        while yn[j + 1] < y:
            j += 1
        fy = (y - yn[j]) / (yn[j + 1] - yn[j])
    return ((1.0 - fx) * (1.0 - fy) * grid[i, j]
            + fx * (1.0 - fy) * grid[i + 1, j]
            + (1.0 - fx) * fy * grid[i, j + 1]
            + fx * fy * grid[i + 1, j + 1])


@cython.ccall
@cython.exceptval(check=False)
def eta_lookup(omega: cython.double, torque_abs: cython.double,
               om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
               grid: cython.double[:, ::1]) -> cython.double:
    """Bilinear efficiency lookup; queries outside the grid clamp to the edge."""
    return _bilinear(omega, torque_abs, om_nodes, tq_nodes, grid)


@cython.ccall
def quantize_c(grid: cython.double[::1], x: cython.double) -> cython.Py_ssize_t:
    """Nearest grid node; midpoint ties break low; out-of-span clamps to the end."""
    n: cython.Py_ssize_t = grid.shape[0]
    i: cython.Py_ssize_t
    dlo: cython.double
    dhi: cython.double
    if x <= grid[0]:
        return 0
    if x >= grid[n - 1]:
        return n - 1
    i = 0
    while grid[i + 1] < x:
        i += 1
    dlo = x - grid[i]
    dhi = grid[i + 1] - x
    return i if dlo <= dhi else i + 1


@cython.ccall
@cython.exceptval(check=False)
def battery_current_c(p_batt: cython.double, v_oc: cython.double,
                      r_batt: cython.double) -> cython.double:
    """Pack current for a power draw; NaN when the discriminant is negative.

    Physical root: zero power gives zero current; positive current discharges.
    """
    disc: cython.double = v_oc * v_oc - 4.0 * r_batt * p_batt
    if disc < 0.0:
        return _NAN
    return (v_oc - sqrt(disc)) / (2.0 * r_batt)


@cython.cfunc
@cython.exceptval(check=False)
def _axle_core(v: cython.double, om_f: cython.double, om_r: cython.double,
               theta: cython.double, drive_f: cython.bint, drive_r: cython.bint,
               m: cython.double, area: cython.double, rho: cython.double,
               ca: cython.double, crr: cython.double, wl: cython.double,
               lf: cython.double, lr: cython.double, h: cython.double,
               re: cython.double, g: cython.double,
               tb: cython.double, tc: cython.double, td: cython.double,
               te: cython.double, tmu: cython.double, eps: cython.double,
               ax: cython.double[::1]) -> cython.int:
    """Close the slip/load-transfer/acceleration coupling for one instant.

    The system is linear in the longitudinal acceleration once the two
    friction coefficients are frozen at the current slips, so it solves in
    closed form. Rolling resistance only acts above standstill so a parked
    vehicle carries exactly the static axle loads.
    """
    lam_f: cython.double = slip_ratio_c(v, om_f, re, drive_f, eps)
    lam_r: cython.double = slip_ratio_c(v, om_r, re, drive_r, eps)
    mu_f: cython.double = magic_mu(lam_f, tb, tc, td, te, tmu)
    mu_r: cython.double = magic_mu(lam_r, tb, tc, td, te, tmu)
    cth: cython.double = cos(theta)
    sth: cython.double = sin(theta)
    a_static_f: cython.double = m * g * (lr * cth - h * sth) / wl
    a_static_r: cython.double = m * g * (lf * cth + h * sth) / wl
    f_a: cython.double = 0.5 * rho * area * ca * v * v
    rr_on: cython.double = 1.0 if v > 1e-9 else 0.0
    f_rr: cython.double = m * g * cth * crr * rr_on
    f_g: cython.double = m * g * sth
    t: cython.double = h / wl
    k: cython.double = f_rr + f_g
    den: cython.double = 1.0 + t * (mu_f - mu_r)
    if fabs(den) < 1e-9:
        return 1
    f_d: cython.double = (mu_f * a_static_f + mu_r * a_static_r + t * k * (mu_f - mu_r)) / den
    trans: cython.double = t * (f_d - k)
    ax[0] = 0.5 * (a_static_f - trans)
    ax[1] = 0.5 * (a_static_r + trans)
    ax[2] = (f_d - f_a - f_rr - f_g) / m
    ax[3] = mu_f
    ax[4] = mu_r
    ax[5] = lam_f
    ax[6] = lam_r
    ax[7] = f_a
    ax[8] = f_rr
    ax[9] = f_g
    ax[10] = f_d
    return 0


@cython.ccall
def axle_solve_c(v: cython.double, om_f: cython.double, om_r: cython.double,
                 theta: cython.double, drive_f: cython.bint, drive_r: cython.bint,
                 par: cython.double[::1], ax: cython.double[::1]) -> cython.int:
    """Public wrapper around the axle closed form; `ax` holds NAX slots."""
    return _axle_core(v, om_f, om_r, theta, drive_f, drive_r,
                      par[PAR_M], par[PAR_AREA], par[PAR_RHO], par[PAR_CA],
                      par[PAR_CRR], par[PAR_L], par[PAR_LF], par[PAR_LR],
                      par[PAR_H], par[PAR_RE], par[PAR_G],
                      par[PAR_TB], par[PAR_TC], par[PAR_TD], par[PAR_TE],
                      par[PAR_MUMAX], par[PAR_SLIPEPS], ax)


@cython.cfunc
@cython.exceptval(check=False)
def _wheel_power(p_w: cython.double, omega: cython.double,
                 omin: cython.double, pmax: cython.double,
                 tmax_mot: cython.double, tmax_regen: cython.double,
                 om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
                 eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
                 w: cython.double[::1]) -> cython.int:
    """One wheel: commanded power -> (torque at wheel, battery share, delivered).

    Driving saturates at the motor power and torque limits. Braking torque is
    always delivered in full (friction brakes cover what the motor cannot);
    only the regen share, capped by torque and electrical power limits, is
    credited to the battery. Returns 1 when a driving clamp bound.
    """
    clamped: cython.int = 0
    pw: cython.double = p_w
    om_eff: cython.double = omega if omega > omin else omin
    t: cython.double
    delivered: cython.double
    pb: cython.double
    eta: cython.double
    t_regen: cython.double
    p_regen: cython.double
    if pw >= 0.0:
        if pw > pmax:
            pw = pmax
            clamped = 1
        t = pw / om_eff
        if t > tmax_mot:
            t = tmax_mot
            clamped = 1
        delivered = t * om_eff
        if delivered > 0.0:
            eta = _bilinear(omega, t, om_nodes, tq_nodes, eta_t)
            pb = delivered / eta
        else:
            pb = 0.0
    else:
        t = pw / om_eff
        t_regen = t if t > -tmax_regen else -tmax_regen
        p_regen = t_regen * om_eff
        if p_regen < -pmax:
            p_regen = -pmax
        delivered = t * om_eff
        if p_regen < 0.0:
            eta = _bilinear(omega, -t_regen, om_nodes, tq_nodes, eta_r)
            pb = p_regen * eta
        else:
            pb = 0.0
    w[0] = t
    w[1] = pb
    w[2] = delivered
    return clamped


@cython.ccall
def wheel_power_c(p_w: cython.double, omega: cython.double,
                  par: cython.double[::1],
                  om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
                  eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
                  w: cython.double[::1]) -> cython.int:
    """Public wrapper around the per-wheel power path; `w` holds 3 slots."""
    return _wheel_power(p_w, omega, par[PAR_OMEGAMIN], par[PAR_PWMAX],
                        par[PAR_TMAXMOT], par[PAR_TMAXREGEN],
                        om_nodes, tq_nodes, eta_t, eta_r, w)


@cython.cfunc
@cython.exceptval(check=False)
def _stiffness(v: cython.double, fnf: cython.double, fnr: cython.double,
               om_f: cython.double, om_r: cython.double,
               drive_f: cython.bint, drive_r: cython.bint,
               re: cython.double, iw: cython.double, slope: cython.double,
               omin: cython.double, eps: cython.double) -> cython.double:
    """Worst-axle bound on |d(slip rate)/d(slip)| for the Euler stability limit."""
    k: cython.double = 0.0
    kf: cython.double
    oe: cython.double
    ve: cython.double
    if v >= eps or re * om_f >= eps:
        if drive_f:
            oe = om_f if om_f > omin else omin
            kf = fnf * slope * v / (iw * oe * oe)
        else:
            ve = v if v > eps else eps
            kf = fnf * slope * re * re / (iw * ve)
        if kf > k:
            k = kf
    if v >= eps or re * om_r >= eps:
        if drive_r:
            oe = om_r if om_r > omin else omin
            kf = fnr * slope * v / (iw * oe * oe)
        else:
            ve = v if v > eps else eps
            kf = fnr * slope * re * re / (iw * ve)
        if kf > k:
            k = kf
    return k


@cython.ccall
def step_core(v0: cython.double, om_f0: cython.double, om_r0: cython.double,
              soc0: cython.double, theta: cython.double,
              p_f_cmd: cython.double, p_r_cmd: cython.double, dt: cython.double,
              par: cython.double[::1],
              om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
              eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
              out: cython.double[::1], work: cython.double[::1]) -> cython.int:
    """Advance the plant by dt under a zero-order-hold axle power command.

    Fixed sub-steps carry the accounting; inside each sub-step the explicit
    Euler update is micro-stepped to stay under the slip-dynamics stability
    limit (the slip time constant shrinks like 1/v near stops). Slip clamping
    to [-1, 1] bounds any residual chatter when the micro cap binds.

    `out` holds NOUT slots; `work` at least NAX + 6. Returns 0 on success,
    1 on a singular load transfer, 2 on infeasible battery power.
    """
    ax: cython.double[::1] = work[0:NAX]
    wf: cython.double[::1] = work[NAX:NAX + 3]
    wr: cython.double[::1] = work[NAX + 3:NAX + 6]

    m: cython.double = par[PAR_M]
    area: cython.double = par[PAR_AREA]
    rho: cython.double = par[PAR_RHO]
    ca: cython.double = par[PAR_CA]
    crr: cython.double = par[PAR_CRR]
    wl: cython.double = par[PAR_L]
    lf: cython.double = par[PAR_LF]
    lr: cython.double = par[PAR_LR]
    h: cython.double = par[PAR_H]
    re: cython.double = par[PAR_RE]
    iw: cython.double = par[PAR_IW]
    g: cython.double = par[PAR_G]
    tb: cython.double = par[PAR_TB]
    tc: cython.double = par[PAR_TC]
    td: cython.double = par[PAR_TD]
    te: cython.double = par[PAR_TE]
    tmu: cython.double = par[PAR_MUMAX]
    slope: cython.double = par[PAR_MUSLOPE]
    pwmax: cython.double = par[PAR_PWMAX]
    tmax_mot: cython.double = par[PAR_TMAXMOT]
    tmax_regen: cython.double = par[PAR_TMAXREGEN]
    voc: cython.double = par[PAR_VOC]
    rbatt: cython.double = par[PAR_RBATT]
    emax: cython.double = par[PAR_EMAX]
    pbmax: cython.double = par[PAR_PBATTMAX]
    omin: cython.double = par[PAR_OMEGAMIN]
    eps: cython.double = par[PAR_SLIPEPS]
    n_sub: cython.Py_ssize_t = cython.cast(cython.Py_ssize_t, par[PAR_NSUB])
    safety: cython.double = par[PAR_MICROSAFETY]
    cap: cython.Py_ssize_t = cython.cast(cython.Py_ssize_t, par[PAR_MICROCAP])

    drive_f: cython.bint = p_f_cmd >= 0.0
    drive_r: cython.bint = p_r_cmd >= 0.0
    pw_f: cython.double = 0.5 * p_f_cmd
    pw_r: cython.double = 0.5 * p_r_cmd

    v: cython.double = v0
    om_f: cython.double = om_f0
    om_r: cython.double = om_r0
    e_batt: cython.double = 0.0
    e_del_f: cython.double = 0.0
    e_del_r: cython.double = 0.0
    charge: cython.double = 0.0
    micro: cython.double = 0.0
    clampf: cython.int = 0
    pbclamp: cython.int = 0

    dt_sub: cython.double = dt / n_sub
    dt_floor: cython.double = dt_sub / cap
    isub: cython.Py_ssize_t
    iters: cython.Py_ssize_t
    rem: cython.double
    dtm: cython.double
    kappa: cython.double
    p_batt: cython.double
    disc: cython.double
    cur: cython.double
    fnf: cython.double
    fnr: cython.double
    a_x: cython.double
    mu_f: cython.double
    mu_r: cython.double

    for isub in range(n_sub):
        rem = dt_sub
        iters = 0
        while rem > 1e-15 and iters < cap:
            if _axle_core(v, om_f, om_r, theta, drive_f, drive_r,
                          m, area, rho, ca, crr, wl, lf, lr, h, re, g,
                          tb, tc, td, te, tmu, eps, ax):
                return 1
            fnf = ax[0]
            fnr = ax[1]
            a_x = ax[2]
            mu_f = ax[3]
            mu_r = ax[4]
            clampf |= _wheel_power(pw_f, om_f, omin, pwmax, tmax_mot, tmax_regen,
                                   om_nodes, tq_nodes, eta_t, eta_r, wf)
            clampf |= _wheel_power(pw_r, om_r, omin, pwmax, tmax_mot, tmax_regen,
                                   om_nodes, tq_nodes, eta_t, eta_r, wr)
            p_batt = 2.0 * (wf[1] + wr[1])
            if p_batt > pbmax:
                p_batt = pbmax
                pbclamp = 1
            elif p_batt < -pbmax:
                p_batt = -pbmax
                pbclamp = 1
            disc = voc * voc - 4.0 * rbatt * p_batt
            if disc < 0.0:
                return 2
            cur = (voc - sqrt(disc)) / (2.0 * rbatt)

            kappa = _stiffness(v, fnf, fnr, om_f, om_r, drive_f, drive_r,
                               re, iw, slope, omin, eps)
            dtm = rem
            if kappa * dtm > safety:
                dtm = safety / kappa
            if dtm < dt_floor:
                dtm = dt_floor
            if dtm > rem:
                dtm = rem

            om_f += dtm * (wf[0] - mu_f * fnf * re) / iw
            om_r += dtm * (wr[0] - mu_r * fnr * re) / iw
            if om_f < 0.0:
                om_f = 0.0
            if om_r < 0.0:
                om_r = 0.0
            v += dtm * a_x
            if v < 0.0:
                v = 0.0
            charge += cur * dtm
            e_batt += p_batt * dtm
            e_del_f += 2.0 * wf[2] * dtm
            e_del_r += 2.0 * wr[2] * dtm
            micro += 1.0
            rem -= dtm
            iters += 1

    if _axle_core(v, om_f, om_r, theta, drive_f, drive_r,
                  m, area, rho, ca, crr, wl, lf, lr, h, re, g,
                  tb, tc, td, te, tmu, eps, ax):
        return 1
    soc: cython.double = soc0 - charge / emax
    out[OUT_V] = v
    out[OUT_OMF] = om_f
    out[OUT_OMR] = om_r
    out[OUT_SOC] = _clip(soc, 0.0, 1.0)
    out[OUT_AX] = ax[2]
    out[OUT_LAMF] = ax[5]
    out[OUT_LAMR] = ax[6]
    out[OUT_PBATT] = e_batt / dt
    out[OUT_DELF] = e_del_f / dt
    out[OUT_DELR] = e_del_r / dt
    out[OUT_CLAMP] = clampf
    out[OUT_CHARGE] = charge
    out[OUT_MICRO] = micro
    out[OUT_PBCLAMP] = pbclamp
    return 0


@cython.cfunc
@cython.exceptval(check=False)
def _skid_case(lam_f: cython.double, lam_r: cython.double, p_dem: cython.double,
               crit: cython.double, extend: cython.bint) -> cython.int:
    """Rule-table cell: 0 pass-through, 1 both zero, 2 front zero, 3 rear zero."""
    bf: cython.bint = lam_f < -crit
    br: cython.bint = lam_r < -crit
    if bf and br:
        return 1
    if bf:
        return 2
    if br:
        return 3
    if extend and p_dem > 0.0:
        bf = lam_f > crit
        br = lam_r > crit
        if bf and br:
            return 1
        if bf:
            return 2
        if br:
            return 3
    return 0


@cython.ccall
def apply_skid_c(lam_f: cython.double, lam_r: cython.double, p_dem: cython.double,
                 p_f: cython.double, p_r: cython.double,
                 crit: cython.double, extend: cython.bint,
                 out2: cython.double[::1]) -> cython.int:
    """Apply the slip-band rules to a candidate split; returns the rule case."""
    case: cython.int = _skid_case(lam_f, lam_r, p_dem, crit, extend)
    if case == 0:
        out2[0] = p_f
        out2[1] = p_r
    elif case == 1:
        out2[0] = 0.0
        out2[1] = 0.0
    elif case == 2:
        out2[0] = 0.0
        out2[1] = p_dem
    else:
        out2[0] = p_dem
        out2[1] = 0.0
    return case


@cython.cfunc
def _eval_cell(p_dem: cython.double, v: cython.double,
               lam_f: cython.double, lam_r: cython.double, p_f_raw: cython.double,
               soc_nom: cython.double, theta: cython.double, dt: cython.double,
               alpha: cython.double, crit: cython.double, extend: cython.bint,
               lam_cap: cython.double,
               par: cython.double[::1],
               om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
               eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
               ev: cython.double[::1], so: cython.double[::1],
               work: cython.double[::1]) -> cython.int:
    """One-step cost and propagated state for a grid state under one control.

    Reconstructs wheel speeds from (v, slip) in the branch selected by the
    demand sign, applies the skid rules to the candidate split, runs one
    plant step, and charges the demand shortfall at weight alpha.
    """
    re: cython.double = par[PAR_RE]
    p_f: cython.double
    p_r: cython.double
    case: cython.int = _skid_case(lam_f, lam_r, p_dem, crit, extend)
    if case == 0:
        p_f = p_f_raw
        p_r = p_dem - p_f_raw
    elif case == 1:
        p_f = 0.0
        p_r = 0.0
    elif case == 2:
        p_f = 0.0
        p_r = p_dem
    else:
        p_f = p_dem
        p_r = 0.0

    om_f: cython.double
    om_r: cython.double
    lf_eff: cython.double
    lr_eff: cython.double
    if v <= 0.0:
        om_f = 0.0
        om_r = 0.0
    elif p_dem >= 0.0:
        lf_eff = lam_f if lam_f < lam_cap else lam_cap
        lr_eff = lam_r if lam_r < lam_cap else lam_cap
        om_f = v / (re * (1.0 - lf_eff))
        om_r = v / (re * (1.0 - lr_eff))
    else:
        om_f = v * (1.0 + lam_f) / re
        om_r = v * (1.0 + lam_r) / re

    code: cython.int = step_core(v, om_f, om_r, soc_nom, theta, p_f, p_r, dt,
                                 par, om_nodes, tq_nodes, eta_t, eta_r, so, work)
    if code != 0:
        return code
    dsoc_pp: cython.double = (soc_nom - so[OUT_SOC]) * 100.0
    short: cython.double = p_dem - (so[OUT_DELF] + so[OUT_DELR])
    ev[EV_COST] = dsoc_pp + alpha * short * short
    ev[EV_V] = so[OUT_V]
    ev[EV_LAMF] = so[OUT_LAMF]
    ev[EV_LAMR] = so[OUT_LAMR]
    ev[EV_DSOC] = dsoc_pp
    ev[EV_SHORT] = short
    return 0


@cython.ccall
def eval_cell(p_dem: cython.double, v: cython.double,
              lam_f: cython.double, lam_r: cython.double, p_f_raw: cython.double,
              soc_nom: cython.double, theta: cython.double, dt: cython.double,
              alpha: cython.double, crit: cython.double, extend: cython.bint,
              lam_cap: cython.double,
              par: cython.double[::1],
              om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
              eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
              ev: cython.double[::1], work: cython.double[::1]) -> cython.int:
    """Public one-cell evaluator; `ev` holds NEV slots, `work` NWORK - NEV."""
    so: cython.double[::1] = work[0:NOUT]
    sc: cython.double[::1] = work[NOUT:NOUT + NAX + 6]
    return _eval_cell(p_dem, v, lam_f, lam_r, p_f_raw, soc_nom, theta, dt,
                      alpha, crit, extend, lam_cap,
                      par, om_nodes, tq_nodes, eta_t, eta_r, ev, so, sc)


@cython.ccall
def build_tables(p_grid: cython.double[::1], v_grid: cython.double[::1],
                 lam_grid: cython.double[::1], u_grid: cython.double[::1],
                 par: cython.double[::1],
                 om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
                 eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
                 soc_nom: cython.double, theta: cython.double, dt: cython.double,
                 alpha: cython.double, crit: cython.double, extend: cython.bint,
                 lam_cap: cython.double,
                 cost: cython.double[:, ::1], nxt: cython.int[:, ::1],
                 s_lo: cython.Py_ssize_t, s_hi: cython.Py_ssize_t,
                 work: cython.double[::1]) -> cython.int:
    """Fill per-(state, control) one-step cost and deterministic successor index.

    State index order is (demand, speed, front slip, rear slip) row-major; the
    successor index covers only the deterministic (speed, slips) block, since
    the next demand level is drawn from the transition matrix. Infeasible
    cells carry COST_INF and a self successor. Fills rows [s_lo, s_hi).
    """
    ev: cython.double[::1] = work[0:NEV]
    so: cython.double[::1] = work[NEV:NEV + NOUT]
    sc: cython.double[::1] = work[NEV + NOUT:NEV + NOUT + NAX + 6]
    nv: cython.Py_ssize_t = v_grid.shape[0]
    nl: cython.Py_ssize_t = lam_grid.shape[0]
    nu: cython.Py_ssize_t = u_grid.shape[0]
    s: cython.Py_ssize_t
    iu: cython.Py_ssize_t
    ip: cython.Py_ssize_t
    iv: cython.Py_ssize_t
    ilf: cython.Py_ssize_t
    ilr: cython.Py_ssize_t
    rest: cython.Py_ssize_t
    ivn: cython.Py_ssize_t
    ilfn: cython.Py_ssize_t
    ilrn: cython.Py_ssize_t
    code: cython.int
    for s in range(s_lo, s_hi):
        ilr = s % nl
        rest = s // nl
        ilf = rest % nl
        rest = rest // nl
        iv = rest % nv
        ip = rest // nv
        for iu in range(nu):
            code = _eval_cell(p_grid[ip], v_grid[iv], lam_grid[ilf], lam_grid[ilr],
                              u_grid[iu], soc_nom, theta, dt, alpha, crit, extend,
                              lam_cap, par, om_nodes, tq_nodes, eta_t, eta_r,
                              ev, so, sc)
            if code != 0:
                cost[s, iu] = COST_INF
                nxt[s, iu] = cython.cast(cython.int, (iv * nl + ilf) * nl + ilr)
            else:
                cost[s, iu] = ev[EV_COST]
                ivn = quantize_c(v_grid, ev[EV_V])
                ilfn = quantize_c(lam_grid, ev[EV_LAMF])
                ilrn = quantize_c(lam_grid, ev[EV_LAMR])
                nxt[s, iu] = cython.cast(cython.int, (ivn * nl + ilfn) * nl + ilrn)
    return 0


@cython.ccall
def build_split_tables(vp: cython.double[:, ::1],
                       lam_grid: cython.double[::1], u_grid: cython.double[::1],
                       par: cython.double[::1],
                       om_nodes: cython.double[::1], tq_nodes: cython.double[::1],
                       eta_t: cython.double[:, ::1], eta_r: cython.double[:, ::1],
                       soc_nom: cython.double, theta: cython.double,
                       dt: cython.double, alpha: cython.double,
                       crit: cython.double, extend: cython.bint,
                       lam_cap: cython.double,
                       cost: cython.double[:, :, ::1],
                       nxt: cython.int[:, :, ::1],
                       work: cython.double[::1]) -> cython.int:
    """Stage tables for speed-pinned DP: rows of (v, P_dem) pairs in `vp`.

    cost/nxt have shape (n_pairs, n_lam^2, n_u); the successor index packs
    only the two slip indices because speed follows the cycle, not the plant.
    """
    ev: cython.double[::1] = work[0:NEV]
    so: cython.double[::1] = work[NEV:NEV + NOUT]
    sc: cython.double[::1] = work[NEV + NOUT:NEV + NOUT + NAX + 6]
    nb: cython.Py_ssize_t = vp.shape[0]
    nl: cython.Py_ssize_t = lam_grid.shape[0]
    nu: cython.Py_ssize_t = u_grid.shape[0]
    ib: cython.Py_ssize_t
    il: cython.Py_ssize_t
    iu: cython.Py_ssize_t
    ilf: cython.Py_ssize_t
    ilr: cython.Py_ssize_t
    ilfn: cython.Py_ssize_t
    ilrn: cython.Py_ssize_t
    code: cython.int
    for ib in range(nb):
        for il in range(nl * nl):
            ilf = il // nl
            ilr = il % nl
            for iu in range(nu):
                code = _eval_cell(vp[ib, 1], vp[ib, 0], lam_grid[ilf], lam_grid[ilr],
                                  u_grid[iu], soc_nom, theta, dt, alpha, crit,
                                  extend, lam_cap, par, om_nodes, tq_nodes,
                                  eta_t, eta_r, ev, so, sc)
                if code != 0:
                    cost[ib, il, iu] = COST_INF
                    nxt[ib, il, iu] = cython.cast(cython.int, il)
                else:
                    cost[ib, il, iu] = ev[EV_COST]
                    ilfn = quantize_c(lam_grid, ev[EV_LAMF])
                    ilrn = quantize_c(lam_grid, ev[EV_LAMR])
                    nxt[ib, il, iu] = cython.cast(cython.int, ilfn * nl + ilrn)
    return 0


def kernel_info() -> dict:
    """Report which execution mode this module is running in."""
    return {"compiled": bool(cython.compiled), "module": __name__}
