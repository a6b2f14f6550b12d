"""Command-line front end: the artifact pipeline and exit codes.

The pipeline tests run on a reduced state grid from a config file, which
keeps training to well under a second while still exercising the config
plumbing, every subcommand, and the artifact hand-off between them.
"""
import json

import numpy as np
import pytest

from powersplit.cli import main

SMALL_GRID = """
[grid]
v_grid = [0.0, 10.0]
lam_grid = [-0.35, 0.0, 0.35]
"""


@pytest.fixture(scope="module")
def small_cfg_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.toml"
    p.write_text(SMALL_GRID)
    return str(p)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory, small_cfg_path):
    """Run build-tpm then train-sdp once; later tests reuse the artifacts."""
    out = tmp_path_factory.mktemp("artifacts")
    rc = main(["build-tpm", "--cycles", "nycc", "--config", small_cfg_path,
               "--out", str(out)])
    assert rc == 0
    rc = main(["train-sdp", "--config", small_cfg_path, "--out", str(out)])
    assert rc == 0
    return out


class TestBuildTpm:
    def test_artifacts_written(self, pipeline_dir):
        assert (pipeline_dir / "tpm.csv").exists()
        assert (pipeline_dir / "tpm.json").exists()
        meta = json.loads((pipeline_dir / "tpm.json").read_text())
        assert meta["kind"] == "tpm"
        assert meta["cycles"] == ["nycc"]

    def test_rows_normalized(self, pipeline_dir):
        rows = (pipeline_dir / "tpm.csv").read_text().splitlines()[1:]
        for row in rows:
            p = np.array([float(x) for x in row.split(",")[1:]])
            assert p.sum() == pytest.approx(1.0, abs=1e-9)


class TestTrainSdp:
    def test_policy_written(self, pipeline_dir):
        assert (pipeline_dir / "policy.csv").exists()
        meta = json.loads((pipeline_dir / "policy.json").read_text())
        assert meta["kind"] == "policy"
        assert meta["diagnostics"]["changes"][-1] == 0

    def test_missing_tpm_is_exit_2(self, tmp_path, small_cfg_path):
        rc = main(["train-sdp", "--config", small_cfg_path,
                   "--out", str(tmp_path)])
        assert rc == 2


class TestSimulate:
    def test_ed_prints_summary(self, tmp_path, capsys):
        rc = main(["simulate", "--cycle", "nycc", "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["cycle"] == "nycc"
        assert doc["strategy"] == "ed"
        assert doc["dsoc_pp"] > 0.0

    def test_trace_written(self, tmp_path):
        trace = tmp_path / "trace.csv"
        rc = main(["simulate", "--cycle", "nycc", "--trace", str(trace),
                   "--out", str(tmp_path)])
        assert rc == 0
        assert trace.exists()
        assert trace.read_text().startswith("t_s,")

    def test_sdp_with_pipeline_policy(self, pipeline_dir, small_cfg_path,
                                      capsys):
        rc = main(["simulate", "--cycle", "nycc", "--strategy", "sdp",
                   "--policy", str(pipeline_dir / "policy.csv"),
                   "--config", small_cfg_path, "--out", str(pipeline_dir)])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["strategy"] == "sdp"

    def test_sdp_defaults_to_out_dir_policy(self, pipeline_dir,
                                            small_cfg_path, capsys):
        rc = main(["simulate", "--cycle", "nycc", "--strategy", "sdp",
                   "--config", small_cfg_path, "--out", str(pipeline_dir)])
        assert rc == 0
        capsys.readouterr()

    def test_missing_rule_is_exit_2(self, tmp_path):
        rc = main(["simulate", "--strategy", "grdp", "--out", str(tmp_path)])
        assert rc == 2

    def test_unknown_strategy_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--strategy", "magic", "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestFitGrdp:
    def test_artifacts_written(self, tmp_path, capsys):
        rc = main(["fit-grdp", "--cycle", "ftp75", "--duration", "60",
                   "--v-bin", "1.0", "--p-bin", "2000.0",
                   "--out", str(tmp_path)])
        assert rc == 0
        rule = json.loads((tmp_path / "grdp.json").read_text())
        assert rule["kind"] == "grdp-rule"
        assert np.isfinite(rule["a"]) and np.isfinite(rule["b"])
        assert (tmp_path / "dp_trajectory.csv").exists()


class TestCompare:
    def test_table_written(self, tmp_path, capsys):
        rc = main(["compare", "--cycles", "nycc", "--mu", "0.9",
                   "--strategies", "ed", "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "comparison.json").read_text())
        assert doc["rows"][0]["cycle"] == "nycc"
        header = (tmp_path / "comparison.csv").read_text().splitlines()[0]
        assert header.startswith("cycle,mu_max")

    def test_sdp_without_artifact_is_exit_2(self, tmp_path):
        rc = main(["compare", "--cycles", "nycc", "--mu", "0.9",
                   "--strategies", "ed,sdp", "--out", str(tmp_path)])
        assert rc == 2


class TestSweep:
    def test_curve_written(self, tmp_path, capsys):
        rc = main(["sweep", "--p-dem", "10000", "--points", "11",
                   "--out", str(tmp_path)])
        assert rc == 0
        rows = (tmp_path / "sweep.csv").read_text().splitlines()
        assert rows[0] == "p_f_w,dsoc_pp"
        assert len(rows) == 12
        out = capsys.readouterr().out
        assert "minimizer" in out


class TestCalibrate:
    def test_round_trip_from_trace(self, tmp_path, capsys):
        trace = tmp_path / "ref.csv"
        rc = main(["simulate", "--cycle", "nycc", "--trace", str(trace),
                   "--out", str(tmp_path)])
        assert rc == 0
        capsys.readouterr()
        rc = main(["calibrate", "--reference", str(trace), "--cycle", "nycc",
                   "--span", "0.02,0.15", "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["r_batt_ohm"] == pytest.approx(0.063, rel=0.05)


class TestConfigHandling:
    def test_unknown_key_is_exit_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[sdp]\nbogus_knob = 1\n")
        rc = main(["sweep", "--p-dem", "1000", "--config", str(bad),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_malformed_toml_is_exit_2(self, tmp_path):
        bad = tmp_path / "broken.toml"
        bad.write_text("[sdp\n")
        rc = main(["sweep", "--p-dem", "1000", "--config", str(bad),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
