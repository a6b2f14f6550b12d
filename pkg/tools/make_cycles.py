#!/usr/bin/env python3
"""Generate the bundled synthetic drive cycles.

Each bundled cycle is a deterministic, seeded approximation of a published
chassis-dynamometer schedule: same duration, same speed envelope, and the
same stop structure, but synthesized here so the files can be committed
without redistributing external data. Speeds are written in mph at 1 Hz
with one decimal place.

Every profile is kept inside the power envelope of the default vehicle.
Accelerations are capped so the feedforward demand stays below the top of
the demand grid (19 kW) and decelerations so it stays above the bottom
(-12 kW), with margin for feedback overshoot. The script audits the
quantized output and refuses to write a file that violates the envelope.

Run from the repository root:

    python3 tools/make_cycles.py [--outdir src/powersplit/data/cycles]
"""
from __future__ import annotations

import argparse
import csv
import os

import numpy as np

MPH = 0.44704                       # m/s per mph
MASS = 800.0                        # kg, default vehicle mass
DRAG_A = 0.5 * 1.2 * 1.66 * 0.30    # aero force = DRAG_A * v^2 [N]
ROLL = 0.010 * MASS * 9.81          # rolling force at v > 0 [N]
P_TOP = 15500.0                     # W, traction planning ceiling (grid top 19 kW)
P_BOT = -10400.0                    # W, braking planning floor (grid bottom -12 kW)
A_CAP = 1.3                         # m/s^2, comfort acceleration cap
A_FLOOR = -2.45                     # m/s^2, hard-stop deceleration cap


def drag(v: float) -> float:
    """Total resistive force at speed v on level ground [N]."""
    return DRAG_A * v * v + (ROLL if v > 0 else 0.0)


def a_max(v: float) -> float:
    """Envelope acceleration limit at speed v [m/s^2].

    Evaluated a half-step ahead because the demand peak over a 1 s ramp
    step sits at the end-of-step speed, not the start.
    """
    va = v + 0.7
    return min(A_CAP, (P_TOP / max(va, 3.0) - drag(va)) / MASS)


def a_min(v: float) -> float:
    """Envelope deceleration limit at speed v [m/s^2] (negative)."""
    return max(A_FLOOR, (P_BOT / max(v, 0.5) - drag(v)) / MASS)


def idle(vs: list, n: int) -> None:
    vs.extend([0.0] * n)


def hold(vs: list, n: int) -> None:
    """Flat hold at the current speed (used for slack segments)."""
    vs.extend([vs[-1]] * n)


def ramp(vs: list, target_mph: float, ease: float = 1.0) -> None:
    """Ramp from the current speed to target at a fraction of the envelope."""
    target = target_mph * MPH
    v = vs[-1]
    while abs(target - v) > 1e-12:
        if target > v:
            v = min(target, v + ease * a_max(v))
        else:
            v = max(target, v + ease * a_min(v))
        vs.append(v)


def cruise(vs: list, n: int, rng: np.random.Generator, wiggle: float = 0.35,
           cap_mph: float | None = None) -> None:
    """Hold near the current speed for n samples with a small seeded wander.

    The per-second speed change is limited to half the envelope so the
    wander can never push the feedforward demand outside the grid, and
    cap_mph bounds the wander from above so a cycle's published maximum
    speed is exact.
    """
    base = vs[-1]
    cap = cap_mph * MPH if cap_mph is not None else float("inf")
    w = 0.0
    for _ in range(n):
        v = vs[-1]
        step = 0.3 * rng.standard_normal() - 0.25 * w
        step = max(0.5 * a_min(v), min(0.5 * a_max(v), step))
        w = max(-wiggle, min(wiggle, w + step))
        vs.append(min(cap, max(0.0, base + w)))


def fit_length(vs: list, n_target: int, slack_at: int) -> None:
    """Insert or delete flat samples at slack_at so len(vs) == n_target."""
    deficit = n_target - len(vs)
    if deficit > 0:
        vs[slack_at:slack_at] = [vs[slack_at]] * deficit
    elif deficit < 0:
        span = vs[slack_at:slack_at - deficit]
        if any(abs(s - span[0]) > 1e-12 for s in span):
            raise AssertionError("slack span is not flat; cannot trim")
        del vs[slack_at:slack_at - deficit]
    if len(vs) != n_target:
        raise AssertionError(f"fit_length failed: {len(vs)} != {n_target}")


def phase_a() -> list:
    """Cold-start urban phase: 505 s, one high-speed trip to ~56 mph."""
    rng = np.random.default_rng(11)
    vs = [0.0]
    idle(vs, 17)
    ramp(vs, 25.0)
    cruise(vs, 28, rng)
    ramp(vs, 0.0)
    idle(vs, 12)
    ramp(vs, 55.9)
    cruise(vs, 118, rng, cap_mph=56.7)
    ramp(vs, 31.0)
    cruise(vs, 20, rng)
    ramp(vs, 0.0)
    idle(vs, 14)
    ramp(vs, 29.5)
    cruise(vs, 58, rng)
    ramp(vs, 0.0)
    idle(vs, 10)
    ramp(vs, 39.8)
    cruise(vs, 74, rng)
    ramp(vs, 0.0)
    slack = len(vs)
    idle(vs, 40)
    fit_length(vs, 505, slack + 1)
    return vs


def phase_b(n: int) -> list:
    """Stabilized urban phase: mid-speed stop-go trips, max ~34 mph."""
    rng = np.random.default_rng(22)
    vs = [0.0]
    idle(vs, 8)
    trips = ((21.0, 40, 12), (27.5, 55, 10), (34.2, 88, 14),
             (25.0, 46, 12), (31.5, 70, 10), (22.5, 38, 16),
             (33.0, 82, 12), (29.0, 60, 10), (26.0, 44, 0))
    for top, c, gap in trips:
        ramp(vs, top, ease=0.85)
        cruise(vs, c, rng)
        ramp(vs, 0.0, ease=0.9)
        idle(vs, gap)
    slack = len(vs)
    idle(vs, 30)
    fit_length(vs, n, slack + 1)
    return vs


def hwfet() -> list:
    """Highway phase: 765 s, no interior stops, max 59.9 mph."""
    rng = np.random.default_rng(33)
    vs = [0.0]
    idle(vs, 2)
    ramp(vs, 32.0)
    cruise(vs, 45, rng)
    ramp(vs, 48.0, ease=0.8)
    cruise(vs, 150, rng)
    ramp(vs, 55.0, ease=0.8)
    cruise(vs, 110, rng)
    ramp(vs, 59.9, ease=0.7)
    cruise(vs, 65, rng, cap_mph=59.9)
    ramp(vs, 45.5)
    cruise(vs, 85, rng)
    ramp(vs, 52.0, ease=0.8)
    slack = len(vs)
    hold(vs, 70)
    cruise(vs, 70, rng)
    ramp(vs, 35.0)
    cruise(vs, 30, rng)
    ramp(vs, 0.0)
    idle(vs, 2)
    fit_length(vs, 765, slack + 1)
    return vs


def nycc() -> list:
    """Dense low-speed city phase: 598 s, hard stops, max 27.7 mph."""
    rng = np.random.default_rng(44)
    vs = [0.0]
    idle(vs, 24)
    trips = ((12.0, 16, 14), (17.5, 22, 18), (9.5, 12, 10), (24.0, 26, 20),
             (27.7, 24, 14), (14.0, 18, 22), (21.0, 22, 12), (11.0, 14, 13),
             (25.5, 25, 16), (19.0, 18, 18), (23.0, 21, 12), (16.5, 16, 0))
    for top, c, gap in trips:
        ramp(vs, top, ease=0.95)
        cruise(vs, c, rng, wiggle=0.3, cap_mph=27.7)
        ramp(vs, 0.0)
        idle(vs, gap)
    slack = len(vs)
    idle(vs, 28)
    fit_length(vs, 598, slack + 1)
    return vs


def quantize(vs: list) -> list:
    """Round to 0.1 mph, the precision written to disk."""
    return [round(v / MPH, 1) for v in vs]


def audit(name: str, q_mph: list, expect_n: int, interior_stops: bool) -> None:
    """Check the quantized profile against the power envelope."""
    v = np.asarray(q_mph) * MPH
    if len(v) != expect_n:
        raise AssertionError(f"{name}: length {len(v)} != {expect_n}")
    if v[0] != 0.0 or v[-1] != 0.0:
        raise AssertionError(f"{name}: must start and end at rest")
    if not interior_stops and np.any(v[3:-8] == 0.0):
        raise AssertionError(f"{name}: unexpected interior stop")
    p_hi = p_lo = 0.0
    p_brake_mid = 0.0
    for k in range(1, len(v)):
        a = v[k] - v[k - 1]
        vv = max(v[k], v[k - 1])
        p = (MASS * a + drag(vv)) * vv
        p_hi = max(p_hi, p)
        p_lo = min(p_lo, p)
        if 3.0 <= vv <= 8.0:
            p_brake_mid = min(p_brake_mid, p)
    dv = np.diff(v)
    print(f"{name:6s} n={len(v):4d}  max={max(q_mph):5.1f} mph  "
          f"a=[{dv.min():+5.2f},{dv.max():+5.2f}] m/s^2  "
          f"P=[{p_lo / 1000:+6.1f},{p_hi / 1000:+5.1f}] kW  "
          f"idle={100 * float(np.mean(v == 0)):3.0f}%  "
          f"brake(3..8 m/s)={p_brake_mid / 1000:+6.1f} kW")
    if p_hi >= 19000.0 or p_lo <= -12000.0:
        raise AssertionError(f"{name}: power envelope violated")
    if name == "nycc" and p_brake_mid > -9000.0:
        raise AssertionError("nycc: needs a hard braking event at mid speed")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="src/powersplit/data/cycles",
                    help="directory for the generated CSV files")
    args = ap.parse_args()

    pa = phase_a()
    cycles = {
        "udds": (pa + phase_b(865), 1370, True),
        "ftp75": (pa + phase_b(864) + pa, 1874, True),
        "hwfet": (hwfet(), 765, False),
        "nycc": (nycc(), 598, True),
    }
    os.makedirs(args.outdir, exist_ok=True)
    for name, (vs, n, stops) in cycles.items():
        q = quantize(vs)
        audit(name, q, n, stops)
        path = os.path.join(args.outdir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "speed_mph"])
            for t, s in enumerate(q):
                w.writerow([t, f"{s:.1f}"])
        print(f"  wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
