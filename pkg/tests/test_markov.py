"""Demand quantization, the state grid, and TPM estimation."""
import numpy as np
import pytest

from powersplit import StateGrid, Tpm, estimate_tpm, load_tpm, save_tpm
from powersplit.errors import (ArtifactMismatch, EmptyObservation,
                               MissingArtifact, ParseError)
from powersplit.markov import (default_u_grid, expected_value, quantize,
                               quantize_array, tpm_checksum)


@pytest.fixture(scope="module")
def grid():
    return StateGrid.default()


class TestQuantize:
    def test_node_maps_to_itself(self, grid):
        for i in (0, 7, 31):
            assert quantize(grid.p_grid[i], grid.p_grid) == i

    def test_nearest_node(self, grid):
        # -11.4 kW sits nearest the -11 kW node
        assert grid.p_grid[quantize(-11400.0, grid.p_grid)] == -11000.0
        assert grid.v_grid[quantize(11.0, grid.v_grid)] == 10.0

    def test_midpoint_breaks_low(self, grid):
        # 2500 W is equidistant from 2 kW and 3 kW; ties go to the lower node
        assert grid.p_grid[quantize(2500.0, grid.p_grid)] == 2000.0

    def test_clamps_outside_span(self, grid):
        assert quantize(-1e9, grid.p_grid) == 0
        assert quantize(1e9, grid.p_grid) == grid.p_grid.size - 1

    def test_array_matches_scalar(self, grid):
        rng = np.random.default_rng(11)
        vals = rng.uniform(-15000.0, 22000.0, 300)
        arr = quantize_array(vals, grid.p_grid)
        for x, i in zip(vals, arr):
            assert quantize(float(x), grid.p_grid) == i

    def test_idempotent(self, grid):
        idx = quantize_array(grid.lam_grid, grid.lam_grid)
        assert np.array_equal(idx, np.arange(grid.lam_grid.size))


class TestStateGrid:
    def test_default_demand_grid(self, grid):
        assert grid.p_grid[0] == -12000.0
        assert grid.p_grid[-1] == 19000.0
        assert grid.n_p == 32
        assert np.allclose(np.diff(grid.p_grid), 1000.0)

    def test_default_speed_and_slip_grids(self, grid):
        assert grid.v_grid.tolist() == [0.0, 5.0, 10.0, 25.0]
        assert grid.n_lam == 11
        assert 0.0 in grid.lam_grid
        assert np.array_equal(grid.lam_grid, -grid.lam_grid[::-1])

    def test_state_count(self, grid):
        assert grid.n_states == 32 * 4 * 11 * 11 == 15488
        assert grid.n_det == 4 * 11 * 11

    def test_control_grid(self, grid):
        u = default_u_grid()
        assert u.size == 32
        assert u[0] == -12000.0 and u[-1] == 19000.0
        assert np.allclose(np.diff(u), 1000.0)
        assert 0.0 in u

    def test_state_index_round_trip(self, grid):
        rng = np.random.default_rng(5)
        for _ in range(100):
            tup = (int(rng.integers(grid.n_p)), int(rng.integers(grid.n_v)),
                   int(rng.integers(grid.n_lam)), int(rng.integers(grid.n_lam)))
            assert grid.state_tuple(grid.state_index(*tup)) == tup

    def test_demand_is_slowest_axis(self, grid):
        s = grid.state_index(3, 0, 0, 0)
        assert s == 3 * grid.n_det

    def test_grids_must_increase(self):
        with pytest.raises(ValueError):
            StateGrid(p_grid=np.array([0.0, 0.0, 1.0]),
                      v_grid=np.array([0.0, 1.0]),
                      lam_grid=np.array([-1.0, 0.0, 1.0]),
                      u_grid=np.array([0.0, 1.0]))

    def test_matches(self, grid):
        assert grid.matches(StateGrid.default())
        other = StateGrid(p_grid=grid.p_grid + 1e-3, v_grid=grid.v_grid,
                          lam_grid=grid.lam_grid, u_grid=grid.u_grid)
        assert not grid.matches(other)


class TestEstimateTpm:
    def test_rows_stochastic(self, grid):
        rng = np.random.default_rng(2)
        seqs = [rng.uniform(-12000, 19000, 500) for _ in range(3)]
        tpm = estimate_tpm(seqs, grid)
        assert np.allclose(tpm.p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(tpm.p >= 0.0)

    def test_constant_sequence_is_identity(self, grid):
        tpm = estimate_tpm([np.full(50, 5000.0)], grid)
        assert np.array_equal(tpm.p, np.eye(grid.n_p))

    def test_alternating_sequence(self, grid):
        seq = np.array([0.0, 5000.0] * 40)
        tpm = estimate_tpm([seq], grid)
        i0 = quantize(0.0, grid.p_grid)
        i5 = quantize(5000.0, grid.p_grid)
        assert tpm.p[i0, i5] == 1.0
        assert tpm.p[i5, i0] == 1.0

    def test_unvisited_levels_self_loop(self, grid):
        tpm = estimate_tpm([np.array([0.0, 1000.0, 0.0])], grid)
        j = quantize(-12000.0, grid.p_grid)
        assert tpm.p[j, j] == 1.0

    def test_no_transition_across_sequence_boundaries(self, grid):
        tpm = estimate_tpm([np.full(10, 0.0), np.full(10, 7000.0)], grid)
        i0 = quantize(0.0, grid.p_grid)
        i7 = quantize(7000.0, grid.p_grid)
        assert tpm.p[i0, i7] == 0.0
        assert tpm.p[i7, i0] == 0.0

    def test_concatenation_order_invariant(self, grid):
        rng = np.random.default_rng(9)
        seqs = [rng.uniform(-12000, 19000, 200) for _ in range(4)]
        a = estimate_tpm(seqs, grid)
        b = estimate_tpm(list(reversed(seqs)), grid)
        assert np.array_equal(a.p, b.p)
        assert np.array_equal(a.counts, b.counts)

    def test_counts_preserved(self, grid):
        seq = np.array([0.0, 1000.0, 0.0, 1000.0, 0.0])
        tpm = estimate_tpm([seq], grid)
        assert tpm.counts.sum() == 4.0

    def test_short_sequences_rejected(self, grid):
        with pytest.raises(EmptyObservation):
            estimate_tpm([np.array([1.0]), np.array([]), np.array([2.0])], grid)

    def test_single_long_sequence_with_short_companions(self, grid):
        # short sequences are skipped, not fatal, when a usable one exists
        tpm = estimate_tpm([np.array([1.0]), np.full(10, 0.0)], grid)
        i0 = quantize(0.0, grid.p_grid)
        assert tpm.p[i0, i0] == 1.0

    def test_statistical_consistency(self, grid):
        # sample a known two-level chain and recover its transition rates
        rng = np.random.default_rng(17)
        p01, p10 = 0.3, 0.45
        n = 100_000
        levels = np.array([0.0, 5000.0])
        states = np.empty(n, dtype=int)
        states[0] = 0
        u = rng.uniform(size=n)
        for k in range(1, n):
            if states[k - 1] == 0:
                states[k] = 1 if u[k] < p01 else 0
            else:
                states[k] = 0 if u[k] < p10 else 1
        tpm = estimate_tpm([levels[states]], grid)
        i0 = quantize(0.0, grid.p_grid)
        i1 = quantize(5000.0, grid.p_grid)
        assert tpm.p[i0, i1] == pytest.approx(p01, abs=0.02)
        assert tpm.p[i1, i0] == pytest.approx(p10, abs=0.02)


class TestExpectedValue:
    def test_deterministic_row(self):
        row = np.zeros(4)
        row[2] = 1.0
        assert expected_value(row, np.array([5.0, 6.0, 7.0, 8.0])) == 7.0

    def test_uniform_row(self):
        row = np.full(4, 0.25)
        assert expected_value(row, np.array([1.0, 2.0, 3.0, 4.0])) == pytest.approx(2.5)

    def test_weighted(self):
        assert expected_value(np.array([0.3, 0.7]),
                              np.array([10.0, 20.0])) == pytest.approx(17.0)

    def test_callable(self):
        row = np.array([0.5, 0.5])
        assert expected_value(row, lambda j: float(j)) == pytest.approx(0.5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            expected_value(np.array([0.5, 0.5]), np.array([1.0, 2.0, 3.0]))


class TestTpmValidation:
    def test_rows_must_normalize(self, grid):
        p = np.eye(grid.n_p)
        p[0, 0] = 0.5
        with pytest.raises(ValueError):
            Tpm(p=p, counts=np.zeros_like(p))

    def test_negative_rejected(self, grid):
        p = np.eye(grid.n_p)
        p[0, 0] = -1.0
        p[0, 1] = 2.0
        with pytest.raises(ValueError):
            Tpm(p=p, counts=np.zeros_like(p))


class TestTpmArtifacts:
    @pytest.fixture()
    def tpm(self, grid):
        rng = np.random.default_rng(23)
        return estimate_tpm([rng.uniform(-12000, 19000, 400)], grid)

    def test_round_trip(self, tmp_path, grid, tpm):
        path = str(tmp_path / "tpm.csv")
        save_tpm(tpm, path, grid, dt_sdp=0.1, cycles=["unit-test"])
        loaded, meta = load_tpm(path, grid=grid)
        assert np.allclose(loaded.p, tpm.p, atol=1e-15)
        assert meta["dt_sdp"] == 0.1
        assert tpm_checksum(loaded) == tpm_checksum(tpm)

    def test_missing_artifact(self, tmp_path, grid):
        with pytest.raises(MissingArtifact):
            load_tpm(str(tmp_path / "absent.csv"), grid=grid)

    def test_partial_artifact(self, tmp_path, grid, tpm):
        path = str(tmp_path / "tpm.csv")
        save_tpm(tpm, path, grid, dt_sdp=0.1, cycles=[])
        (tmp_path / "tpm.json").unlink()
        with pytest.raises(ArtifactMismatch):
            load_tpm(path, grid=grid)

    def test_tampered_matrix_detected(self, tmp_path, grid, tpm):
        path = str(tmp_path / "tpm.csv")
        save_tpm(tpm, path, grid, dt_sdp=0.1, cycles=[])
        lines = open(path).read().splitlines()
        cells = lines[1].split(",")
        cells[1] = "0.123456"
        lines[1] = ",".join(cells)
        open(path, "w").write("\n".join(lines) + "\n")
        with pytest.raises((ArtifactMismatch, ValueError)):
            load_tpm(path, grid=grid)

    def test_grid_mismatch_detected(self, tmp_path, grid, tpm):
        path = str(tmp_path / "tpm.csv")
        save_tpm(tpm, path, grid, dt_sdp=0.1, cycles=[])
        shifted = StateGrid(p_grid=grid.p_grid + 500.0, v_grid=grid.v_grid,
                            lam_grid=grid.lam_grid, u_grid=grid.u_grid)
        with pytest.raises(ArtifactMismatch):
            load_tpm(path, grid=shifted)

    def test_wrong_header_rejected(self, tmp_path, grid, tpm):
        path = str(tmp_path / "tpm.csv")
        save_tpm(tpm, path, grid, dt_sdp=0.1, cycles=[])
        text = open(path).read()
        open(path, "w").write("bogus" + text)
        with pytest.raises((ParseError, ArtifactMismatch)):
            load_tpm(path, grid=grid)
