"""Script-level exporter tests, including the end-to-end smoke path."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("exitkit_exporter")

from exitkit_exporter.model import new_model, save_checkpoint


def _check(name: str, ok: bool, detail: str) -> None:
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name} failed: {detail}"


def run_export(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "exitkit_exporter.cli", *args],
        capture_output=True,
        text=True,
    )


def run_exitkit(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "exitkit.cli", *args],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory) -> str:
    path = str(tmp_path_factory.mktemp("ckpt") / "toy.ckpt")
    save_checkpoint(new_model(16, 32, 2, 5, seed=3), path)
    return path


def test_s1_smoke_export_convert_eval(tmp_path):
    out = tmp_path / "smoke.bin"
    proc = run_export(
        "--out", str(out), "--samples", "64", "--exits", "2", "--classes", "5"
    )
    assert proc.returncode == 0, proc.stderr

    as_text = tmp_path / "smoke.ndjson"
    back = tmp_path / "smoke2.bin"
    convert1 = run_exitkit(
        "convert", "--in", str(out), "--out", str(as_text), "--to", "ndjson"
    )
    convert2 = run_exitkit(
        "convert", "--in", str(as_text), "--out", str(back), "--to", "binary"
    )
    round_trip_ok = (
        convert1.returncode == 0
        and convert2.returncode == 0
        and out.read_bytes() == back.read_bytes()
    )

    evaluated = run_exitkit("eval", "--trace", str(out), "--policy", "oracle")
    report = json.loads(evaluated.stdout) if evaluated.returncode == 0 else {}
    oracle_ok = (
        evaluated.returncode == 0
        and report["accuracy"] == report["per_layer_accuracy"][-1]
    )

    _check(
        "S1",
        round_trip_ok and oracle_ok,
        "64-sample export validates, convert round-trips byte-identically, "
        f"oracle accuracy {report.get('accuracy')} equals forced final",
    )


def test_s2_cli_exports_are_identical_across_processes(tmp_path, checkpoint):
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    for path in (first, second):
        proc = run_export("--out", str(path), "--checkpoint", checkpoint)
        assert proc.returncode == 0, proc.stderr
    assert first.read_bytes() == second.read_bytes()


def test_stdout_reports_heads_and_record_count(tmp_path, checkpoint):
    out = tmp_path / "t.bin"
    proc = run_export(
        "--out", str(out), "--checkpoint", checkpoint, "--samples", "20"
    )
    assert proc.returncode == 0
    assert "head 0 accuracy" in proc.stdout
    assert "head 1 accuracy" in proc.stdout
    assert "wrote 20 records (2 heads, 5 classes, costs uniform_default)" in proc.stdout


def test_format_follows_extension_unless_overridden(tmp_path, checkpoint):
    text = tmp_path / "t.ndjson"
    packed = tmp_path / "t.bin"
    forced = tmp_path / "t.trace"
    for args in (
        ("--out", str(text)),
        ("--out", str(packed)),
        ("--out", str(forced), "--format", "ndjson"),
    ):
        assert run_export(*args, "--checkpoint", checkpoint).returncode == 0
    assert text.read_bytes()[:1] == b"{"
    assert packed.read_bytes()[:4] == b"EETR"
    assert forced.read_bytes()[:1] == b"{"


def test_missing_out_is_a_usage_error():
    proc = run_export("--samples", "8")
    assert proc.returncode == 1
    assert "--out" in proc.stderr


def test_unknown_format_choice_is_a_usage_error(tmp_path):
    proc = run_export("--out", str(tmp_path / "t.bin"), "--format", "xml")
    assert proc.returncode == 1


def test_bad_cost_table_exits_2(tmp_path, checkpoint):
    proc = run_export(
        "--out", str(tmp_path / "t.bin"), "--checkpoint", checkpoint,
        "--costs", "3,2",
    )
    assert proc.returncode == 2
    assert "strictly increasing" in proc.stderr


def test_nonfinite_model_output_exits_2(tmp_path):
    model = new_model(16, 32, 2, 5, seed=3)
    with torch.no_grad():
        model.heads[0].bias[0] = float("nan")
    ckpt = str(tmp_path / "nan.ckpt")
    save_checkpoint(model, ckpt)
    proc = run_export("--out", str(tmp_path / "t.bin"), "--checkpoint", ckpt)
    assert proc.returncode == 2
    assert "sample 0: non-finite" in proc.stderr


def test_unknown_dataset_exits_2(tmp_path, checkpoint):
    proc = run_export(
        "--out", str(tmp_path / "t.bin"), "--checkpoint", checkpoint,
        "--dataset", "imagenet",
    )
    assert proc.returncode == 2
    assert "unknown dataset" in proc.stderr


def test_help_exits_0():
    proc = run_export("--help")
    assert proc.returncode == 0
    assert "--checkpoint" in proc.stdout
