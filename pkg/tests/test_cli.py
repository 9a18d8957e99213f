from __future__ import annotations

import json
import subprocess
import sys

import pytest


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "exitkit.cli", *map(str, args)],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated trace with splits, diagrams, and temperatures on disk."""
    root = tmp_path_factory.mktemp("cliws")
    t = root / "t.bin"
    val = root / "val.bin"
    test = root / "test.bin"
    plain = root / "plain.json"
    smooth = root / "smooth.json"
    temps = root / "temps.json"
    steps = [
        ["gen", "--out", t, "--n", 1500, "--seed", 7, "--gamma", "2.0"],
        [
            "split",
            "--trace",
            t,
            "--fraction",
            "0.2",
            "--seed",
            3,
            "--out-val",
            val,
            "--out-test",
            test,
        ],
        ["calibrate", "--trace", val, "--layer", "all", "--out", plain],
        [
            "calibrate",
            "--trace",
            val,
            "--layer",
            "all",
            "--smooth-H",
            50,
            "--out",
            smooth,
        ],
        ["fit-temp", "--trace", val, "--out", temps],
    ]
    for step in steps:
        proc = run_cli(*step)
        assert proc.returncode == 0, proc.stderr
    return root


class TestGen:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        for out in (a, b):
            assert run_cli("gen", "--out", out, "--n", 200, "--seed", 5).returncode == 0
        assert a.read_bytes() == b.read_bytes()

    def test_extension_picks_ndjson(self, tmp_path):
        out = tmp_path / "t.ndjson"
        assert run_cli("gen", "--out", out, "--n", 5).returncode == 0
        head = json.loads(out.read_text().splitlines()[0])
        assert head["version"] == 1

    def test_binary_magic(self, tmp_path):
        out = tmp_path / "t.bin"
        assert run_cli("gen", "--out", out, "--n", 5).returncode == 0
        assert out.read_bytes()[:4] == b"EETR"

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({"n_samples": 3, "n_classes": 4, "seed": 9}))
        out = tmp_path / "t.ndjson"
        proc = run_cli("gen", "--out", out, "--config", cfg, "--n", 6)
        assert proc.returncode == 0
        lines = out.read_text().splitlines()
        head = json.loads(lines[0])
        assert head["n_classes"] == 4
        assert len(lines) - 1 == 6

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text('{"n_samples": 3, "mystery": 1}')
        proc = run_cli("gen", "--out", tmp_path / "t.bin", "--config", cfg)
        assert proc.returncode == 2
        assert "mystery" in proc.stderr

    def test_invalid_class_count_is_usage_error(self, tmp_path):
        proc = run_cli("gen", "--out", tmp_path / "t.bin", "--n", 5, "--classes", 1)
        assert proc.returncode == 1


class TestSplitCommand:
    def test_bad_fraction_is_usage_error(self, workspace):
        proc = run_cli(
            "split",
            "--trace",
            workspace / "t.bin",
            "--fraction",
            "1.5",
            "--out-val",
            workspace / "x",
            "--out-test",
            workspace / "y",
        )
        assert proc.returncode == 1
        assert "fraction" in proc.stderr

    def test_missing_trace_is_io_error(self, workspace):
        proc = run_cli(
            "split",
            "--trace",
            workspace / "absent.bin",
            "--out-val",
            workspace / "x",
            "--out-test",
            workspace / "y",
        )
        assert proc.returncode == 2


class TestEval:
    def test_json_report_to_stdout(self, workspace):
        proc = run_cli(
            "eval",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "pcee",
            "--delta",
            "0.7",
            "--diagrams",
            workspace / "plain.json",
            "--format",
            "json",
        )
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert report["kind"] == "pcee"
        assert report["delta"] == 0.7
        assert len(report["exit_histogram"]) == 4

    def test_policy_config_file_flags_win(self, workspace, tmp_path):
        cfg = tmp_path / "pol.json"
        cfg.write_text(json.dumps({"kind": "confidence", "delta": 0.2}))
        proc = run_cli(
            "eval",
            "--trace",
            workspace / "test.bin",
            "--config",
            cfg,
            "--delta",
            "0.9",
            "--format",
            "json",
        )
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert report["kind"] == "confidence"
        assert report["delta"] == 0.9

    def test_temperatures_applied(self, workspace):
        proc = run_cli(
            "eval",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "pcee_ws",
            "--delta",
            "0.75",
            "--diagrams",
            workspace / "smooth.json",
            "--temps",
            workspace / "temps.json",
            "--format",
            "json",
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["kind"] == "pcee_ws"

    def test_mismatched_diagram_smoothing_is_data_error(self, workspace):
        proc = run_cli(
            "eval",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "pcee",
            "--delta",
            "0.7",
            "--diagrams",
            workspace / "smooth.json",
        )
        assert proc.returncode == 2
        assert "smooth" in proc.stderr

    def test_missing_diagrams_is_usage_error(self, workspace):
        proc = run_cli(
            "eval",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "pcee",
            "--delta",
            "0.7",
        )
        assert proc.returncode == 1

    def test_delta_out_of_range_is_usage_error(self, workspace):
        proc = run_cli(
            "eval",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "confidence",
            "--delta",
            "1.5",
        )
        assert proc.returncode == 1

    def test_corrupt_trace_is_data_error(self, workspace, tmp_path):
        bad = tmp_path / "bad.bin"
        blob = (workspace / "test.bin").read_bytes()
        bad.write_bytes(blob[: len(blob) - 7])
        proc = run_cli("eval", "--trace", bad, "--policy", "oracle")
        assert proc.returncode == 2


class TestSweep:
    def test_csv_layout_and_pareto(self, workspace, tmp_path):
        out = tmp_path / "sweep.csv"
        pareto = tmp_path / "pareto.csv"
        proc = run_cli(
            "sweep",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "pcee",
            "--deltas",
            "0.5,0.7,0.9",
            "--diagrams",
            workspace / "plain.json",
            "--format",
            "csv",
            "--out",
            out,
            "--pareto-out",
            pareto,
        )
        assert proc.returncode == 0
        lines = out.read_text().splitlines()
        assert lines[0] == (
            "kind,delta,accuracy,avg_layers,avg_flops,"
            "exit_hist_0,exit_hist_1,exit_hist_2,exit_hist_3"
        )
        assert len(lines) == 4
        assert pareto.read_text().splitlines()[0] == (
            "kind,delta,avg_flops,prediction_error_pct"
        )

    def test_unsorted_deltas_rejected(self, workspace):
        proc = run_cli(
            "sweep",
            "--trace",
            workspace / "test.bin",
            "--policy",
            "confidence",
            "--deltas",
            "0.9,0.5",
        )
        assert proc.returncode == 1


class TestCalibrateAndEce:
    def test_single_layer_selection(self, workspace, tmp_path):
        out = tmp_path / "d1.json"
        proc = run_cli(
            "calibrate",
            "--trace",
            workspace / "val.bin",
            "--layer",
            "2",
            "--out",
            out,
        )
        assert proc.returncode == 0
        entries = json.loads(out.read_text())
        assert [e["layer"] for e in entries] == [2]

    def test_bad_layer_is_usage_error(self, workspace, tmp_path):
        proc = run_cli(
            "calibrate",
            "--trace",
            workspace / "val.bin",
            "--layer",
            "9",
            "--out",
            tmp_path / "d.json",
        )
        assert proc.returncode == 1

    def test_ece_prints_one_line_per_layer(self, workspace):
        proc = run_cli("ece", "--diagrams", workspace / "plain.json")
        assert proc.returncode == 0
        lines = proc.stdout.strip().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("layer 0 ece 0.")

    def test_ece_rejects_smoothed(self, workspace):
        proc = run_cli("ece", "--diagrams", workspace / "smooth.json")
        assert proc.returncode == 2


class TestConvert:
    def test_round_trip_byte_identity(self, workspace, tmp_path):
        nd = tmp_path / "t.ndjson"
        back = tmp_path / "t2.bin"
        assert (
            run_cli(
                "convert", "--in", workspace / "t.bin", "--to", "ndjson", "--out", nd
            ).returncode
            == 0
        )
        assert (
            run_cli("convert", "--in", nd, "--to", "binary", "--out", back).returncode
            == 0
        )
        assert back.read_bytes() == (workspace / "t.bin").read_bytes()


class TestTopLevel:
    def test_no_arguments_is_usage_error(self):
        proc = run_cli()
        assert proc.returncode == 1
        assert "usage" in proc.stderr

    def test_unknown_command_is_usage_error(self):
        proc = run_cli("frobnicate")
        assert proc.returncode == 1

    def test_help_exits_zero(self):
        proc = run_cli("--help")
        assert proc.returncode == 0
        assert "gen" in proc.stdout
