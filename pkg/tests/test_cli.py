import json

import pytest

from gepower.cli import (
    EXIT_IO,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    EXIT_VALIDATION,
    main,
)

FAST = [
    "--grid", "21",
    "--tol", "1e-6",
]


def _solve_args(outdir, extra=()):
    return ["solve", "--out", str(outdir)] + FAST + list(extra)


class TestSolveCommand:
    def test_writes_value_and_report(self, tmp_path, capsys):
        assert main(_solve_args(tmp_path)) == EXIT_OK
        value = json.loads((tmp_path / "value.json").read_text())
        assert value["n"] == 21
        assert len(value["values"]) == 21 * 21
        report = json.loads((tmp_path / "solve_report.json").read_text())
        assert report["converged"] is True
        assert report["diagonal"]["kind"] == "one-threshold"
        assert "converged" in capsys.readouterr().out

    def test_two_threshold_parameters(self, tmp_path):
        assert main(_solve_args(tmp_path, ["--rh", "3.7", "--grid", "41"])) == EXIT_OK
        report = json.loads((tmp_path / "solve_report.json").read_text())
        assert report["diagonal"]["kind"] == "two-threshold"

    def test_invalid_channel_rejected_before_compute(self, tmp_path, capsys):
        code = main(_solve_args(tmp_path, ["--lambda0", "0.9", "--lambda1", "0.1"]))
        assert code == EXIT_VALIDATION
        assert "lambda0 < lambda1" in capsys.readouterr().err
        assert not (tmp_path / "value.json").exists()

    def test_nonconvergence_exit_code(self, tmp_path):
        code = main(_solve_args(tmp_path, ["--max-iter", "2"]))
        assert code == EXIT_NONCONVERGENCE

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"grid": 15, "rh": 3.5}))
        assert main(["solve", "--out", str(tmp_path), "--config", str(cfg), "--rh", "3.0"]) == EXIT_OK
        value = json.loads((tmp_path / "value.json").read_text())
        assert value["n"] == 15
        assert value["rh"] == 3.0   # flag wins over config

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gird": 15}))
        assert main(["solve", "--out", str(tmp_path), "--config", str(cfg)]) == EXIT_VALIDATION

    def test_byte_identical_reruns(self, tmp_path):
        out1 = tmp_path / "one"
        out2 = tmp_path / "two"
        assert main(_solve_args(out1)) == EXIT_OK
        assert main(_solve_args(out2)) == EXIT_OK
        assert (out1 / "value.json").read_bytes() == (out2 / "value.json").read_bytes()
        assert (out1 / "solve_report.json").read_bytes() == (out2 / "solve_report.json").read_bytes()


class TestAnalyzeCommand:
    @pytest.fixture()
    def value_file(self, tmp_path):
        out = tmp_path / "solve"
        main(_solve_args(out))
        return out / "value.json"

    def test_outputs_and_exit_code(self, value_file, tmp_path, capsys):
        out = tmp_path / "analysis"
        code = main(["analyze", str(value_file), "--out", str(out)])
        captured = capsys.readouterr().out
        assert (out / "policy.csv").exists()
        assert (out / "policy.ppm").exists()
        doc = json.loads((out / "structure.json").read_text())
        assert doc["diagonal"]["kind"] == "one-threshold"
        assert "symmetry_ok: pass" in captured
        # at this coarse grid the one-threshold field is violation-free
        assert code == EXIT_OK

    def test_corrupted_value_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n": 21, "values": [1, 2\n')
        code = main(["analyze", str(bad), "--out", str(tmp_path)])
        assert code == EXIT_IO
        err = capsys.readouterr().err
        assert "line" in err and "column" in err

    def test_truncated_values_array(self, tmp_path, capsys):
        doc = {
            "n": 5, "lambda0": 0.1, "lambda1": 0.9, "rh": 3.0, "rl": 2.0,
            "ch": 1.2, "cl": 0.8, "beta": 0.9, "iterations": 1, "residual": 0.0,
            "values": [0.0] * 24,
        }
        bad = tmp_path / "short.json"
        bad.write_text(json.dumps(doc))
        assert main(["analyze", str(bad), "--out", str(tmp_path)]) == EXIT_IO
        assert "expected 25 values" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["analyze", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_IO


class TestSweepCommand:
    def test_lambda0_sweep(self, tmp_path):
        code = main(
            ["sweep", "--param", "lambda0", "--start", "0.1", "--stop", "0.5",
             "--points", "3", "--grid", "15", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        header = [ln for ln in lines if ln.startswith("#")]
        rows = [ln for ln in lines if not ln.startswith("#")]
        assert rows[0] == "swept-value,area_Bb,area_B1,area_B2,area_Br,class,rho1,rho2,Th1,Th2"
        assert len(rows) == 1 + 3
        assert any("fixed:" in ln for ln in header)

    def test_invalid_points_skipped_with_log(self, tmp_path, capsys):
        # lambda0 values at and above lambda1 are invalid and skipped
        code = main(
            ["sweep", "--param", "lambda0", "--start", "0.8", "--stop", "1.0",
             "--points", "3", "--grid", "11", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        rows = [
            ln for ln in (tmp_path / "sweep.csv").read_text().splitlines()
            if not ln.startswith("#") and ln
        ]
        assert len(rows) == 1 + 1   # only lambda0=0.8 is valid
        assert "skipping" in capsys.readouterr().err

    def test_lambda1_sweep_notes_fixed_lambda0(self, tmp_path):
        main(
            ["sweep", "--param", "lambda1", "--start", "0.9", "--stop", "0.5",
             "--points", "2", "--grid", "11", "--out", str(tmp_path)]
        )
        text = (tmp_path / "sweep.csv").read_text()
        assert "lambda0 stays at 0.1" in text

    def test_ratio_sweep_scales_rh(self, tmp_path):
        main(
            ["sweep", "--param", "rh_over_rl", "--start", "1.2", "--stop", "1.8",
             "--points", "2", "--grid", "11", "--out", str(tmp_path)]
        )
        rows = [
            ln for ln in (tmp_path / "sweep.csv").read_text().splitlines()
            if not ln.startswith("#")
        ]
        assert len(rows) == 1 + 2


class TestSimulateCommand:
    def test_baseline_summary(self, tmp_path):
        code = main(
            ["simulate", "--baseline", "always-conservative", "--episodes", "50",
             "--horizon", "10", "--seed", "4", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "sim_summary.json").read_text())
        assert doc["mean"] == 0.0 and doc["se"] == 0.0

    def test_policy_file_simulation_with_traces(self, tmp_path):
        out = tmp_path / "solve"
        main(_solve_args(out))
        code = main(
            ["simulate", str(out / "value.json"), "--episodes", "20", "--horizon", "5",
             "--seed", "3", "--dump-traces", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        assert (tmp_path / "traces.csv").exists()
        doc = json.loads((tmp_path / "sim_summary.json").read_text())
        assert doc["policy"] == "grid-policy"

    def test_requires_exactly_one_source(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_identical_seed_identical_bytes(self, tmp_path):
        args = ["simulate", "--baseline", "myopic", "--episodes", "40", "--horizon", "8",
                "--seed", "12"]
        out1 = tmp_path / "one"
        out2 = tmp_path / "two"
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert main(args + ["--out", str(out2)]) == EXIT_OK
        assert (out1 / "sim_summary.json").read_bytes() == (out2 / "sim_summary.json").read_bytes()


class TestExportLpCommand:
    def test_tiny_model(self, tmp_path, capsys):
        code = main(["export-lp", "--grid", "2", "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert "4 variables" in capsys.readouterr().out
        text = (tmp_path / "model.lp").read_text()
        assert text.startswith("\\")
        assert "Minimize" in text and "Subject To" in text and text.rstrip().endswith("End")
        meta = json.loads((tmp_path / "model_meta.json").read_text())
        assert meta["n"] == 2
        assert "row-major" in meta["variables"]

    def test_deterministic_bytes(self, tmp_path):
        out1 = tmp_path / "one"
        out2 = tmp_path / "two"
        main(["export-lp", "--grid", "5", "--out", str(out1)])
        main(["export-lp", "--grid", "5", "--out", str(out2)])
        assert (out1 / "model.lp").read_bytes() == (out2 / "model.lp").read_bytes()
