import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from ehrenfestdb import configs
from ehrenfestdb.bath import DiscretizedBath
from ehrenfestdb.cli import main
from ehrenfestdb.diagnostics import check_reorganization_sum_rule
from ehrenfestdb.io import read_metadata, read_series_csv


@pytest.fixture()
def runner():
    return CliRunner()


def tiny_config(tmp_path, **extra):
    cfg = {
        "scenario": "two_level_paper",
        "ensemble": {"n_traj": 24, "t_final": 0.5, "n_record": 11},
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(extra)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestRun:
    def test_dry_run_writes_nothing(self, runner, tmp_path):
        cfg = tiny_config(tmp_path)
        result = runner.invoke(main, ["run", str(cfg), "--dry-run"])
        assert result.exit_code == 0, result.output
        assert "reorganization energy" in result.output
        assert "Boltzmann reference" in result.output
        assert "dry run" in result.output
        assert not (tmp_path / "out").exists()

    def test_malformed_config_exit_2(self, runner, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("scenario: two_level_paper\nbogus_key: 1\n")
        result = runner.invoke(main, ["run", str(path)])
        assert result.exit_code == 2
        assert "bogus_key" in result.output
        assert not (tmp_path / "out").exists()

    def test_missing_system_exit_2(self, runner, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("ensemble: {n_traj: 4}\n")
        result = runner.invoke(main, ["run", str(path)])
        assert result.exit_code == 2

    def test_numerical_failure_exit_3(self, runner, tmp_path):
        cfg = tiny_config(tmp_path, norm_drift_budget=1e-4)
        result = runner.invoke(main, ["run", str(cfg), "--workers", "1"])
        assert result.exit_code == 3
        assert "invalid" in result.output

    def test_tiny_run_outputs(self, runner, tmp_path):
        cfg = tiny_config(tmp_path, with_redfield=True)
        result = runner.invoke(main, ["run", str(cfg), "--workers", "1"])
        assert result.exit_code == 0, result.output
        out = tmp_path / "out"
        for name in ("populations.csv", "coherences.csv", "pop_diff.csv",
                     "metadata.json", "redfield_populations.csv",
                     "redfield_pop_diff.csv"):
            assert (out / name).exists(), name
        t, value, stderr = read_series_csv(out / "pop_diff.csv")
        assert t.shape == (11,)
        assert value[0] == pytest.approx(1.0, abs=1e-12)
        # >= 12 significant digits survive the round trip
        meta = read_metadata(out / "metadata.json")
        assert meta["n_valid"] == 24
        assert meta["run"]["base_seed"] == 12345
        raw = (out / "pop_diff.csv").read_text().splitlines()[1:]
        assert any(len(line.split(",")[1].replace("-", "").replace(".", "")
                       .lstrip("0")) >= 12 for line in raw)

    def test_reproducible_from_metadata(self, runner, tmp_path):
        cfg = tiny_config(tmp_path)
        assert runner.invoke(main, ["run", str(cfg), "--workers", "1"]
                             ).exit_code == 0
        meta = read_metadata(tmp_path / "out" / "metadata.json")
        replay_cfg = dict(meta["config"])
        replay_cfg["output_dir"] = str(tmp_path / "replay")
        replay_path = tmp_path / "replay.yaml"
        replay_path.write_text(yaml.safe_dump(replay_cfg))
        assert runner.invoke(main, ["run", str(replay_path), "--workers", "4"]
                             ).exit_code == 0
        original = (tmp_path / "out" / "pop_diff.csv").read_bytes()
        replay = (tmp_path / "replay" / "pop_diff.csv").read_bytes()
        assert original == replay

    def test_seed_override(self, runner, tmp_path):
        cfg = tiny_config(tmp_path)
        runner.invoke(main, ["run", str(cfg), "--seed", "99"])
        meta = read_metadata(tmp_path / "out" / "metadata.json")
        assert meta["run"]["base_seed"] == 99

    def test_bundled_configs_resolve(self, runner):
        for name in ("two_level_paper", "two_level_uncorrected",
                     "three_level_case1", "three_level_case2",
                     "three_level_case3", "two_temperature"):
            result = runner.invoke(
                main, ["run", str(configs.path(name)), "--dry-run"])
            assert result.exit_code == 0, (name, result.output)


class TestCompare:
    @pytest.fixture()
    def run_dir(self, runner, tmp_path):
        cfg = tiny_config(tmp_path, with_redfield=True)
        result = runner.invoke(main, ["run", str(cfg), "--workers", "1"])
        assert result.exit_code == 0, result.output
        return tmp_path / "out"

    def test_self_comparison_zero(self, runner, run_dir):
        csv = str(run_dir / "pop_diff.csv")
        result = runner.invoke(main, ["compare", csv, csv])
        assert result.exit_code == 0, result.output
        assert "deviation A-B = +0.00000 (0.00σ)" in result.output

    def test_boltzmann_reference(self, runner, run_dir):
        result = runner.invoke(
            main, ["compare", str(run_dir / "pop_diff.csv"), "--boltzmann"])
        assert result.exit_code == 0, result.output
        assert "0.23530" in result.output
        assert "σ" in result.output

    def test_redfield_comparison(self, runner, run_dir):
        result = runner.invoke(
            main, ["compare", str(run_dir / "pop_diff.csv"),
                   str(run_dir / "redfield_pop_diff.csv")])
        assert result.exit_code == 0, result.output
        assert "series RMS difference" in result.output

    def test_grid_mismatch_needs_interpolate(self, runner, run_dir,
                                             tmp_path):
        other = tmp_path / "coarse.csv"
        t, v, e = read_series_csv(run_dir / "pop_diff.csv")
        lines = ["t,value,stderr"] + [
            f"{ti},{vi},{ei}" for ti, vi, ei in zip(t[::2], v[::2], e[::2])]
        other.write_text("\n".join(lines) + "\n")
        args = ["compare", str(run_dir / "pop_diff.csv"), str(other)]
        result = runner.invoke(main, args)
        assert result.exit_code == 2
        assert "interpolate" in result.output
        result = runner.invoke(main, args + ["--interpolate"])
        assert result.exit_code == 0

    def test_usage_errors(self, runner, run_dir):
        csv = str(run_dir / "pop_diff.csv")
        assert runner.invoke(main, ["compare", csv]).exit_code == 2
        assert runner.invoke(
            main, ["compare", csv, csv, "--boltzmann"]).exit_code == 2


class TestDiagnose:
    def test_default_bath_passes(self, runner, tmp_path):
        cfg = tiny_config(
            tmp_path,
            diagnostics={"seed": 5, "n_samples_moments": 4000,
                         "n_samples_fdt": 4000, "n_wick": 50_000})
        result = runner.invoke(main, ["diagnose", str(cfg)])
        assert result.exit_code == 0, result.output
        assert result.output.count("[PASS]") == 6
        assert (tmp_path / "out" /
                "diagnose_bath_reorganization_sum_rule.csv").exists()

    def test_single_mode_kernel_check_skipped(self, runner, tmp_path):
        cfg = {
            "system": {"epsilon_cm1": [0.0, 100.0],
                       "couplings": [{"reservoir": "b",
                                      "v": [[0.0, 1.0], [1.0, 0.0]]}]},
            "baths": [{"label": "b", "family": "ohmic_exp", "eta": 10.0,
                       "omega_c": 10.0, "temperature": 300.0, "n_modes": 1,
                       "omega_max_factor": 5.0}],
            "output_dir": str(tmp_path / "diag"),
            "diagnostics": {"seed": 5, "n_samples_moments": 4000,
                            "n_samples_fdt": 4000, "n_wick": 50_000},
        }
        path = tmp_path / "single.yaml"
        path.write_text(yaml.safe_dump(cfg))
        result = runner.invoke(main, ["diagnose", str(path)])
        assert result.exit_code == 0, result.output
        assert "[SKIP] b/kernel_continuum" in result.output
        assert "meaningless" in result.output

    def test_broken_coupling_scaling_fails(self, paper_bath):
        # injected fault: double every g_i; the sum-rule check must trip
        broken = DiscretizedBath(
            omegas=paper_bath.omegas.copy(), gs=2.0 * paper_bath.gs,
            temperature=paper_bath.temperature, label="broken",
            provenance=dict(paper_bath.provenance))
        check = check_reorganization_sum_rule(broken)
        assert not check.passed
        assert check.statistic > 2.0  # 4x the reorganization energy

    def test_bad_config_exit_2(self, runner, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("baths: []\n")
        result = runner.invoke(main, ["diagnose", str(path)])
        assert result.exit_code == 2
