"""CLI: config handling, subcommand outputs, determinism, exit codes."""

import csv
import json
from pathlib import Path

import pytest

from fluidbatch.cli import main

TINY_GRID = ["--t-r-candidates", "512,1024", "--t-p-candidates", "8",
             "--t-c-candidates", "32,64"]


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


class TestDseCommand:
    def test_smoke_and_outputs(self, tmp_path):
        rc = main(["dse", "--model", "synthetic10", "--out-dir", str(tmp_path)] + TINY_GRID)
        assert rc == 0
        for name in ("design.json", "fbcb.json", "dse_report.csv"):
            assert (tmp_path / name).exists()
        report = read_csv(tmp_path / "dse_report.csv")
        assert len(report) == 4  # 2 x 1 x 2 grid, all feasible
        assert {"T_R", "T_P", "T_C", "objective_gops"} <= set(report[0])

    def test_repeated_run_identical_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["dse", "--model", "synthetic10", "--out-dir", str(out)] + TINY_GRID) == 0
        for name in ("design.json", "fbcb.json", "dse_report.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_infeasible_grid_error_exit(self, tmp_path, capsys):
        rc = main(["dse", "--model", "synthetic10", "--out-dir", str(tmp_path),
                   "--t-r-candidates", "1000000", "--t-p-candidates", "32",
                   "--t-c-candidates", "256"])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestSweepCommand:
    def _sweep(self, tmp_path, rates="20,40", seeds="0,1,2", policies="fluidb,serial"):
        rc = main(["sweep", "--model", "synthetic10", "--policies", policies,
                   "--rates", rates, "--seeds", seeds, "--n-samples", "120",
                   "--out-dir", str(tmp_path)] + TINY_GRID)
        assert rc == 0
        return read_csv(tmp_path / "results.csv"), read_csv(tmp_path / "summary.csv")

    def test_row_counting(self, tmp_path):
        results, summary = self._sweep(tmp_path)
        assert len(results) == 2 * 3 * 2  # policies x rates x seeds
        assert len(summary) == 2 * 2

    def test_summary_rows_are_seed_means(self, tmp_path):
        results, summary = self._sweep(tmp_path)
        for srow in summary:
            group = [r for r in results
                     if r["policy"] == srow["policy"] and r["arrival_rate"] == srow["arrival_rate"]]
            assert len(group) == 3
            for col in ("processing_rate", "avg_latency", "p99_latency",
                        "violation_rate", "utilisation"):
                mean = sum(float(r[col]) for r in group) / len(group)
                assert abs(float(srow[col]) - mean) < 2e-6

    def test_event_logs_written(self, tmp_path):
        self._sweep(tmp_path, rates="20", seeds="0", policies="fluidb")
        assert (tmp_path / "events" / "fluidb_r20_s0.log").exists()


class TestConfigFile:
    def test_config_with_flag_override(self, tmp_path):
        cfg = {
            "model": "synthetic10", "policies": ["fluidb"], "rates": [30],
            "seeds": [0], "n_samples": 100, "out_dir": str(tmp_path / "from_cfg"),
            "t_r_candidates": [1024], "t_p_candidates": [8], "t_c_candidates": [64],
        }
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = main(["run", "--config", str(cfg_path), "--out-dir", str(tmp_path / "cli_wins")])
        assert rc == 0
        assert (tmp_path / "cli_wins" / "results.csv").exists()
        assert not (tmp_path / "from_cfg").exists()

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"modle": "synthetic10"}))
        assert main(["run", "--config", str(cfg_path)]) == 2

    def test_env_var_default_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FLUIDBATCH_OUT_DIR", str(tmp_path / "envdir"))
        monkeypatch.chdir(tmp_path)
        rc = main(["run", "--model", "synthetic10", "--policies", "serial",
                   "--rates", "30", "--seeds", "0", "--n-samples", "60"] + TINY_GRID)
        assert rc == 0
        assert (tmp_path / "envdir" / "results.csv").exists()

    def test_unknown_policy_rejected(self, tmp_path):
        assert main(["run", "--model", "synthetic10", "--policies", "magic",
                     "--out-dir", str(tmp_path)]) == 2


class TestAblateCommand:
    def test_table_shape(self, tmp_path):
        rc = main(["ablate", "--model", "synthetic10", "--b-max", "8",
                   "--out-dir", str(tmp_path)] + TINY_GRID)
        assert rc == 0
        rows = read_csv(tmp_path / "ablation.csv")
        policies = {r["policy"] for r in rows}
        assert policies == {"fluidb", "fluidb-nostack", "r-batching", "p-batching", "fc-only"}
        assert len(rows) == 5 * 8
        batches = sorted(int(r["batch_size"]) for r in rows if r["policy"] == "fluidb")
        assert batches == list(range(1, 9))
        assert all(float(r["peak_gops"]) > 0 for r in rows)

    def test_fluid_dominates_uniform_rows(self, tmp_path):
        main(["ablate", "--model", "synthetic10", "--b-max", "4",
              "--out-dir", str(tmp_path)] + TINY_GRID)
        rows = read_csv(tmp_path / "ablation.csv")
        by = {(r["policy"], int(r["batch_size"])): float(r["gops"]) for r in rows}
        for b in range(1, 5):
            assert by[("fluidb", b)] >= by[("r-batching", b)] - 1e-9
            assert by[("fluidb", b)] >= by[("p-batching", b)] - 1e-9


class TestSloSweepCommand:
    def test_violation_curve(self, tmp_path):
        rc = main(["slo-sweep", "--model", "synthetic10", "--policies", "fluidb",
                   "--rates", "40", "--slos", "0.05,0.3", "--seeds", "0",
                   "--n-samples", "120", "--out-dir", str(tmp_path)] + TINY_GRID)
        assert rc == 0
        rows = read_csv(tmp_path / "slo_sweep.csv")
        assert len(rows) == 2
        viol = {float(r["slo"]): float(r["violation_rate"]) for r in rows}
        assert viol[0.3] <= viol[0.05]  # relaxing the SLO cannot add violations
