"""Drive cycles: parsing, resampling, demand power, and the PI driver."""
import io

import numpy as np
import pytest

from powersplit import (DriveCycle, Plant, VehicleState, builtin_cycle,
                        builtin_cycles, load_cycle, resample, simulate)
from powersplit.config import default_config
from powersplit.cycles import (Driver, demand_power, resolve_cycle,
                               target_accel)
from powersplit.errors import NonMonotoneTime, ParseError
from powersplit.params import DriverParams


def write_csv(tmp_path, text, name="cycle.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestLoadCycle:
    def test_basic_mps(self, tmp_path):
        path = write_csv(tmp_path, "t_s,speed_mps\n0,0\n1,2.5\n2,5\n")
        c = load_cycle(path)
        assert len(c) == 3
        assert c.v[1] == 2.5
        assert c.duration == 2.0

    def test_mph_conversion(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,0\n1,60\n")
        c = load_cycle(path, speed_unit="mph")
        assert c.v[1] == pytest.approx(26.8224)

    def test_kph_conversion(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,36\n", )
        c = load_cycle(path, speed_unit="kph")
        assert c.v[0] == pytest.approx(10.0)

    def test_headerless_accepted(self, tmp_path):
        path = write_csv(tmp_path, "0,1\n1,2\n")
        assert len(load_cycle(path)) == 2

    def test_blank_lines_skipped(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,1\n\n1,2\n")
        assert len(load_cycle(path)) == 2

    def test_non_monotone_time(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,1\n2,2\n1,3\n")
        with pytest.raises(NonMonotoneTime):
            load_cycle(path)

    def test_repeated_time(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,1\n1,2\n1,3\n")
        with pytest.raises(NonMonotoneTime):
            load_cycle(path)

    def test_garbage_row(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,1\nfoo,bar\n")
        with pytest.raises(ParseError):
            load_cycle(path)

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,1\n1\n")
        with pytest.raises(ParseError):
            load_cycle(path)

    def test_empty_file(self, tmp_path):
        path = write_csv(tmp_path, "")
        with pytest.raises(ParseError):
            load_cycle(path)

    def test_negative_speed_rejected(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,-1\n1,2\n")
        with pytest.raises(ParseError):
            load_cycle(path)

    def test_unknown_unit(self, tmp_path):
        path = write_csv(tmp_path, "t,v\n0,1\n1,2\n")
        with pytest.raises(ParseError):
            load_cycle(path, speed_unit="furlongs")


class TestBuiltinCycles:
    def test_four_bundled(self):
        assert set(builtin_cycles()) == {"ftp75", "hwfet", "nycc", "udds"}

    def test_loadable_and_sane(self):
        for name in builtin_cycles():
            c = builtin_cycle(name)
            assert c.name == name
            assert c.duration > 300.0
            assert c.v.min() >= 0.0
            assert c.v.max() < 40.0  # m/s

    def test_highway_cycle_has_no_interior_stop(self):
        c = builtin_cycle("hwfet")
        interior = c.v[50:-50]
        assert interior.min() > 1.0

    def test_city_cycles_stop(self):
        for name in ("ftp75", "nycc", "udds"):
            c = builtin_cycle(name)
            assert (c.v < 0.1).mean() > 0.05

    def test_unknown_name(self):
        with pytest.raises(ParseError):
            builtin_cycle("us06")

    def test_resolve_prefers_builtin(self, tmp_path):
        assert resolve_cycle("nycc").name == "nycc"
        path = write_csv(tmp_path, "t,v\n0,1\n1,2\n")
        assert resolve_cycle(path).name == path


class TestResample:
    def test_sample_count(self):
        c = DriveCycle(name="x", t=np.arange(0.0, 1371.0), v=np.zeros(1371))
        r = resample(c, 0.1)
        assert len(r) == 13701

    def test_identity_on_grid(self):
        c = DriveCycle(name="x", t=np.arange(5.0), v=np.array([0., 1., 4., 9., 16.]))
        r = resample(c, 1.0)
        assert np.array_equal(r.t, c.t)
        assert np.array_equal(r.v, c.v)

    def test_linear_midpoint(self):
        c = DriveCycle(name="x", t=np.array([0.0, 1.0]), v=np.array([2.0, 4.0]))
        r = resample(c, 0.5)
        assert r.v[1] == pytest.approx(3.0)

    def test_endpoint_preserved(self):
        c = DriveCycle(name="x", t=np.array([0.0, 10.0]), v=np.array([0.0, 5.0]))
        r = resample(c, 0.1)
        assert r.t[-1] == 10.0
        assert r.v[-1] == 5.0

    def test_dt_validated(self):
        c = DriveCycle(name="x", t=np.array([0.0, 1.0]), v=np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            resample(c, 0.0)


class TestTargetAccel:
    def test_constant_speed(self):
        c = DriveCycle(name="x", t=np.arange(10.0), v=np.full(10, 7.0))
        assert np.allclose(target_accel(c), 0.0)

    def test_uniform_ramp(self):
        c = DriveCycle(name="x", t=np.arange(10.0), v=2.0 * np.arange(10.0))
        assert np.allclose(target_accel(c), 2.0)


class TestDemandPower:
    def test_matched_at_rest(self):
        pl = Plant()
        x = VehicleState(v=0.0, omega_f=0.0, omega_r=0.0, soc=0.9)
        assert demand_power(x, 0.0, 0.0, DriverParams(), pl) == 0.0

    def test_steady_cruise_feedforward(self):
        # zero error, zero integral: demand is the resistive power exactly
        from powersplit.plant import resistive_forces
        pl = Plant()
        v = 20.0
        x = VehicleState(v=v, omega_f=v / 0.33, omega_r=v / 0.33, soc=0.9)
        f_a, f_rr, f_g = resistive_forces(v, 0.0, pl.vehicle)
        assert demand_power(x, v, 0.0, DriverParams(), pl) == pytest.approx(
            (f_a + f_rr + f_g) * v)

    def test_proportional_term(self):
        pl = Plant()
        x = VehicleState(v=5.0, omega_f=5 / 0.33, omega_r=5 / 0.33, soc=0.9)
        d = DriverParams(use_feedforward=False)
        assert demand_power(x, 7.0, 0.0, d, pl) == pytest.approx(d.k_p * 2.0)

    def test_clamped_to_grid_span(self):
        pl = Plant()
        x = VehicleState(v=0.0, omega_f=0.0, omega_r=0.0, soc=0.9)
        assert demand_power(x, 40.0, 5.0, DriverParams(), pl) == 19000.0
        x = VehicleState(v=30.0, omega_f=30 / 0.33, omega_r=30 / 0.33, soc=0.9)
        assert demand_power(x, 0.0, -3.0, DriverParams(), pl) == -12000.0

    def test_bounded_for_random_inputs(self):
        pl = Plant()
        rng = np.random.default_rng(3)
        for _ in range(200):
            v = float(rng.uniform(0, 30))
            x = VehicleState(v=v, omega_f=v / 0.33, omega_r=v / 0.33, soc=0.5)
            p = demand_power(x, float(rng.uniform(0, 30)),
                             float(rng.uniform(-3, 3)), DriverParams(), pl,
                             integral=float(rng.uniform(-50, 50)))
            assert -12000.0 <= p <= 19000.0


class TestDriver:
    def test_integral_accumulates(self):
        pl = Plant()
        drv = Driver(DriverParams(use_feedforward=False))
        x = VehicleState(v=5.0, omega_f=5 / 0.33, omega_r=5 / 0.33, soc=0.9)
        drv.demand(x, 6.0, 0.0, pl, 0.1)
        assert drv.integral == pytest.approx(0.1)

    def test_anti_windup_freezes_integral(self):
        # saturated high with a positive error: the integral must not grow
        pl = Plant()
        drv = Driver(DriverParams(use_feedforward=False))
        x = VehicleState(v=0.0, omega_f=0.0, omega_r=0.0, soc=0.9)
        for _ in range(50):
            p = drv.demand(x, 30.0, 0.0, pl, 0.1)
        assert p == 19000.0
        assert drv.integral == 0.0

    def test_reset(self):
        pl = Plant()
        drv = Driver(DriverParams(use_feedforward=False))
        x = VehicleState(v=5.0, omega_f=5 / 0.33, omega_r=5 / 0.33, soc=0.9)
        drv.demand(x, 6.0, 0.0, pl, 0.1)
        drv.reset()
        assert drv.integral == 0.0


class TestClosedLoopTracking:
    def test_rms_speed_error_under_half(self, ):
        # the driver must actually hold the bundled cycles
        cfg = default_config()
        for name in builtin_cycles():
            trace = simulate(builtin_cycle(name), "ed", cfg)
            assert trace.rms_speed_error < 0.5, name
