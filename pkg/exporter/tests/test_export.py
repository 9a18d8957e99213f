"""Library-level exporter tests: format fidelity, determinism, errors."""

from __future__ import annotations

import importlib
import json
import struct
import subprocess
import sys

import numpy as np
import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("exitkit_exporter")

# the package re-exports the export() function under the submodule's
# name, so the module object needs an explicit lookup
export_mod = importlib.import_module("exitkit_exporter.export")
from exitkit_exporter.data import load_dataset
from exitkit_exporter.export import ExportError, ExportJob, export
from exitkit_exporter.model import (
    ModelError,
    MultiExitClassifier,
    load_checkpoint,
    new_model,
    save_checkpoint,
)


def _check(name: str, ok: bool, detail: str) -> None:
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name} failed: {detail}"


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


def job_for(out_path: str, checkpoint: str, **overrides) -> ExportJob:
    settings = dict(
        out_path=out_path, checkpoint=checkpoint, n_samples=64, data_seed=11
    )
    settings.update(overrides)
    return ExportJob(**settings)


class TestDeterminism:
    def test_s2_two_exports_are_value_identical(self, tmp_path, checkpoint):
        first = tmp_path / "a.bin"
        second = tmp_path / "b.bin"
        export(job_for(str(first), checkpoint))
        export(job_for(str(second), checkpoint))
        identical = first.read_bytes() == second.read_bytes()
        _check(
            "S2",
            identical,
            "two exports of the same checkpoint are byte-identical",
        )

    def test_ndjson_exports_identical_too(self, tmp_path, checkpoint):
        paths = [str(tmp_path / f"{i}.ndjson") for i in range(2)]
        for path in paths:
            export(job_for(path, checkpoint, fmt="ndjson"))
        with open(paths[0]) as a, open(paths[1]) as b:
            assert a.read() == b.read()


class TestAccuracyBridge:
    def test_per_head_accuracy_matches_eval_report(self, tmp_path, checkpoint):
        out = tmp_path / "trace.bin"
        result = export(job_for(str(out), checkpoint))
        proc = run_exitkit("eval", "--trace", str(out), "--policy", "oracle")
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        gaps = [
            abs(mine - theirs)
            for mine, theirs in zip(
                result.per_head_accuracy, report["per_layer_accuracy"]
            )
        ]
        assert len(report["per_layer_accuracy"]) == result.n_layers
        assert max(gaps) <= 1e-6

    def test_single_head_model_exports_and_evaluates(self, tmp_path):
        ckpt = str(tmp_path / "one.ckpt")
        save_checkpoint(new_model(8, 16, 1, 3, seed=1), ckpt)
        out = tmp_path / "one.bin"
        result = export(job_for(str(out), ckpt, n_samples=32))
        proc = run_exitkit("eval", "--trace", str(out), "--policy", "oracle")
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["exit_histogram"] == [32]
        assert report["accuracy"] == result.per_head_accuracy[0]


class TestRecordContent:
    def test_records_follow_dataset_order(self, tmp_path, checkpoint):
        out = tmp_path / "trace.ndjson"
        export(job_for(str(out), checkpoint, n_samples=10, fmt="ndjson",
                       batch_size=4))
        lines = out.read_text().splitlines()
        header = json.loads(lines[0])
        assert header == {
            "version": 1,
            "n_layers": 2,
            "n_classes": 5,
            "layer_costs": [1.0, 2.0],
        }
        records = [json.loads(line) for line in lines[1:]]
        assert [r["id"] for r in records] == list(range(10))
        _, labels = load_dataset("synthetic", "test", 10, 16, 5, seed=11)
        assert [r["label"] for r in records] == labels.tolist()
        for record in records:
            block = np.asarray(record["logits"], dtype=np.float32)
            assert block.shape == (2, 5)
            assert np.isfinite(block).all()

    def test_binary_layout_matches_documented_framing(self, tmp_path, checkpoint):
        binary = tmp_path / "t.bin"
        text = tmp_path / "t.ndjson"
        costs = (1.5, 4.0)
        export(job_for(str(binary), checkpoint, n_samples=3, layer_costs=costs))
        export(job_for(str(text), checkpoint, n_samples=3, layer_costs=costs,
                       fmt="ndjson"))
        blob = binary.read_bytes()
        assert blob[:4] == b"EETR"
        version, n_layers, n_classes = struct.unpack("<III", blob[4:16])
        assert (version, n_layers, n_classes) == (1, 2, 5)
        assert np.frombuffer(blob[16:32], dtype="<f8").tolist() == list(costs)
        (count,) = struct.unpack("<Q", blob[32:40])
        assert count == 3
        dtype = np.dtype(
            [("id", "<u8"), ("label", "<u4"), ("logits", "<f4", (2, 5))]
        )
        assert len(blob) == 40 + 3 * dtype.itemsize
        table = np.frombuffer(blob, dtype=dtype, offset=40)
        parsed = [json.loads(line) for line in text.read_text().splitlines()[1:]]
        for row, record in zip(table, parsed):
            assert int(row["id"]) == record["id"]
            assert int(row["label"]) == record["label"]
            # the decimal literals must reproduce the binary32 values exactly
            assert np.array_equal(
                row["logits"], np.asarray(record["logits"], dtype=np.float32)
            )

    def test_split_streams_differ(self, tmp_path, checkpoint):
        val = tmp_path / "val.ndjson"
        test = tmp_path / "test.ndjson"
        export(job_for(str(val), checkpoint, split="val", fmt="ndjson"))
        export(job_for(str(test), checkpoint, split="test", fmt="ndjson"))
        assert val.read_text() != test.read_text()


class TestCostTable:
    def test_uniform_default_is_flagged_in_sidecar(self, tmp_path, checkpoint):
        out = tmp_path / "t.bin"
        result = export(job_for(str(out), checkpoint))
        meta = json.loads((tmp_path / "t.bin.meta.json").read_text())
        assert result.cost_source == "uniform_default"
        assert meta["layer_costs_source"] == "uniform_default"
        assert meta["layer_costs"] == [1.0, 2.0]

    def test_supplied_costs_are_flagged_as_provided(self, tmp_path, checkpoint):
        out = tmp_path / "t.bin"
        result = export(job_for(str(out), checkpoint, layer_costs=(2.0, 7.5)))
        meta = json.loads((tmp_path / "t.bin.meta.json").read_text())
        assert result.cost_source == "provided"
        assert meta["layer_costs_source"] == "provided"
        assert meta["layer_costs"] == [2.0, 7.5]

    def test_cost_arity_must_match_head_count(self, tmp_path, checkpoint):
        with pytest.raises(ExportError, match="3 entries.*2 exit heads"):
            export(job_for(str(tmp_path / "t.bin"), checkpoint,
                           layer_costs=(1.0, 2.0, 3.0)))

    @pytest.mark.parametrize(
        "costs,message",
        [
            ((2.0, 2.0), "strictly increasing"),
            ((3.0, 1.0), "strictly increasing"),
            ((0.0, 1.0), "finite and positive"),
            ((1.0, float("inf")), "finite and positive"),
            ((), "must not be empty"),
        ],
    )
    def test_bad_cost_tables_rejected(self, costs, message):
        with pytest.raises(ExportError, match=message):
            ExportJob(out_path="t.bin", layer_costs=costs)


class TestErrors:
    def test_nonfinite_logits_name_the_sample(self, tmp_path):
        model = new_model(16, 32, 2, 5, seed=3)
        with torch.no_grad():
            model.heads[1].bias[0] = float("nan")
        ckpt = str(tmp_path / "nan.ckpt")
        save_checkpoint(model, ckpt)
        with pytest.raises(ExportError, match="sample 0: non-finite"):
            export(job_for(str(tmp_path / "t.bin"), ckpt))

    def test_nonfinite_index_counts_across_batches(
        self, tmp_path, checkpoint, monkeypatch
    ):
        def poisoned(name, split, n, dim, classes, seed):
            features, labels = load_dataset(name, split, n, dim, classes, seed)
            features = features.clone()
            features[5] = float("inf")  # propagates to the head logits
            return features, labels

        monkeypatch.setattr(export_mod, "load_dataset", poisoned)
        with pytest.raises(ExportError, match="sample 5: non-finite"):
            export(job_for(str(tmp_path / "t.bin"), checkpoint, n_samples=10,
                           batch_size=4))

    def test_declared_fields_must_match_checkpoint(self, tmp_path, checkpoint):
        with pytest.raises(ExportError, match="declared n_classes=7.*has n_classes=5"):
            export(job_for(str(tmp_path / "t.bin"), checkpoint, n_classes=7))
        with pytest.raises(ExportError, match="declared n_exits=3"):
            export(job_for(str(tmp_path / "t.bin"), checkpoint, n_exits=3))

    def test_malformed_checkpoint_rejected(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(ExportError, match="cannot load checkpoint"):
            export(job_for(str(tmp_path / "t.bin"), str(bad)))

    @pytest.mark.parametrize(
        "overrides,message",
        [
            (dict(dataset="imagenet"), "unknown dataset"),
            (dict(split="holdout"), "unknown split"),
            (dict(device="warpdrive"), "warpdrive"),
        ],
    )
    def test_bad_job_inputs(self, tmp_path, checkpoint, overrides, message):
        with pytest.raises(ExportError, match=message):
            export(job_for(str(tmp_path / "t.bin"), checkpoint, **overrides))

    @pytest.mark.parametrize(
        "overrides,message",
        [
            (dict(fmt="xml"), "unknown output format"),
            (dict(n_samples=0), "n_samples must be positive"),
            (dict(batch_size=0), "batch_size must be positive"),
        ],
    )
    def test_bad_job_fields(self, overrides, message):
        with pytest.raises(ExportError, match=message):
            ExportJob(out_path="t.bin", **overrides)


class TestModel:
    @pytest.mark.parametrize(
        "args",
        [(0, 8, 2, 5), (8, 0, 2, 5), (8, 8, 0, 5), (8, 8, 2, 1)],
    )
    def test_invalid_architecture_rejected(self, args):
        with pytest.raises(ModelError):
            MultiExitClassifier(*args)

    def test_checkpoint_round_trip_preserves_outputs(self, tmp_path):
        model = new_model(16, 32, 2, 5, seed=8)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(model, path)
        clone = load_checkpoint(path)
        probe = torch.randn(4, 16, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            original = model(probe)
            restored = clone(probe)
        for a, b in zip(original, restored):
            assert torch.equal(a, b)

    def test_forward_returns_one_logit_block_per_head(self):
        model = new_model(6, 12, 3, 4, seed=0)
        out = model(torch.zeros(2, 6))
        assert len(out) == 3
        assert all(block.shape == (2, 4) for block in out)

    def test_save_checkpoint_flag_writes_loadable_model(self, tmp_path):
        out = tmp_path / "t.bin"
        saved = tmp_path / "fresh.ckpt"
        export(
            ExportJob(
                out_path=str(out),
                n_samples=8,
                n_exits=2,
                n_classes=4,
                save_checkpoint_path=str(saved),
            )
        )
        clone = load_checkpoint(str(saved))
        assert clone.n_exits == 2
        assert clone.n_classes == 4
