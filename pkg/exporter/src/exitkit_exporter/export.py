"""Export job definition and the batched export loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from exitkit_exporter.data import DataError, load_dataset
from exitkit_exporter.model import (
    ModelError,
    MultiExitClassifier,
    load_checkpoint,
    new_model,
    save_checkpoint,
)
from exitkit_exporter.writer import FORMATS, write_metadata, write_trace

COST_SOURCE_PROVIDED = "provided"
COST_SOURCE_UNIFORM = "uniform_default"


class ExportError(Exception):
    """Job/model inconsistency or bad values coming out of the model."""


@dataclass(frozen=True)
class ExportJob:
    out_path: str
    checkpoint: str | None = None
    dataset: str = "synthetic"
    split: str = "test"
    n_samples: int = 64
    batch_size: int = 32
    device: str = "cpu"
    fmt: str = "binary"
    layer_costs: tuple[float, ...] | None = None
    # toy-model architecture, used only when no checkpoint is given;
    # with a checkpoint, a non-None value must match what it declares
    input_dim: int | None = None
    hidden_dim: int | None = None
    n_exits: int | None = None
    n_classes: int | None = None
    model_seed: int = 0
    data_seed: int = 0
    save_checkpoint_path: str | None = None

    def __post_init__(self) -> None:
        if self.fmt not in FORMATS:
            raise ExportError(f"unknown output format {self.fmt!r}")
        if self.n_samples < 1:
            raise ExportError("n_samples must be positive")
        if self.batch_size < 1:
            raise ExportError("batch_size must be positive")
        if self.layer_costs is not None:
            costs = self.layer_costs
            if len(costs) < 1:
                raise ExportError("cost table must not be empty")
            if any(not math.isfinite(c) or c <= 0 for c in costs):
                raise ExportError("layer costs must be finite and positive")
            if any(b <= a for a, b in zip(costs, costs[1:])):
                raise ExportError("layer costs must be strictly increasing")


@dataclass(frozen=True)
class ExportResult:
    out_path: str
    meta_path: str
    n_samples: int
    n_layers: int
    n_classes: int
    layer_costs: tuple[float, ...]
    cost_source: str
    per_head_accuracy: tuple[float, ...]


_TOY_DEFAULTS = {"input_dim": 16, "hidden_dim": 32, "n_exits": 2, "n_classes": 10}


def _resolve_model(job: ExportJob) -> MultiExitClassifier:
    declared = {
        "input_dim": job.input_dim,
        "hidden_dim": job.hidden_dim,
        "n_exits": job.n_exits,
        "n_classes": job.n_classes,
    }
    if job.checkpoint is not None:
        model = load_checkpoint(job.checkpoint)
        for field, value in declared.items():
            if value is not None and value != getattr(model, field):
                raise ExportError(
                    f"declared {field}={value} but checkpoint "
                    f"{job.checkpoint} has {field}={getattr(model, field)}"
                )
        return model
    arch = {k: v if v is not None else _TOY_DEFAULTS[k] for k, v in declared.items()}
    return new_model(seed=job.model_seed, **arch)


def export(job: ExportJob) -> ExportResult:
    """Run the model over the dataset and write one record per sample.

    Forward passes are batched; records land in dataset order with ids
    equal to their dataset position. Logits are recorded exactly as the
    heads produce them (no softmax, no temperature).
    """
    try:
        model = _resolve_model(job)
    except ModelError as exc:
        raise ExportError(str(exc)) from exc
    if job.save_checkpoint_path is not None:
        save_checkpoint(model, job.save_checkpoint_path)

    if job.layer_costs is not None:
        if len(job.layer_costs) != model.n_exits:
            raise ExportError(
                f"cost table has {len(job.layer_costs)} entries but the "
                f"model has {model.n_exits} exit heads"
            )
        costs = job.layer_costs
        cost_source = COST_SOURCE_PROVIDED
    else:
        costs = tuple(float(i) for i in range(1, model.n_exits + 1))
        cost_source = COST_SOURCE_UNIFORM

    try:
        device = torch.device(job.device)
        features, labels = load_dataset(
            job.dataset,
            job.split,
            job.n_samples,
            model.input_dim,
            model.n_classes,
            job.data_seed,
        )
    except (DataError, RuntimeError) as exc:
        raise ExportError(str(exc)) from exc

    model = model.to(device)
    model.eval()
    blocks: list[np.ndarray] = []
    hit_counts = torch.zeros(model.n_exits, dtype=torch.int64)
    with torch.no_grad():
        for start in range(0, job.n_samples, job.batch_size):
            batch = features[start : start + job.batch_size].to(device)
            heads = model(batch)
            if len(heads) != model.n_exits:
                raise ExportError(
                    f"model produced {len(heads)} heads, declared {model.n_exits}"
                )
            for head in heads:
                if head.shape[1] != model.n_classes:
                    raise ExportError(
                        f"head produced {head.shape[1]} logits, declared "
                        f"{model.n_classes} classes"
                    )
            block = torch.stack(heads, dim=1).to("cpu", torch.float32)
            finite = torch.isfinite(block).all(dim=2).all(dim=1)
            if not bool(finite.all()):
                bad = int(torch.nonzero(~finite)[0])
                raise ExportError(f"sample {start + bad}: non-finite logit value")
            truth = labels[start : start + job.batch_size].unsqueeze(1)
            hit_counts += (block.argmax(dim=2) == truth).sum(dim=0)
            blocks.append(block.numpy())

    logits = np.concatenate(blocks, axis=0)
    per_head_accuracy = tuple(
        float(c) / job.n_samples for c in hit_counts.tolist()
    )

    write_trace(
        job.out_path,
        job.fmt,
        labels.numpy().astype(np.uint32),
        logits,
        costs,
    )
    meta_path = write_metadata(
        job.out_path,
        {
            "layer_costs": list(costs),
            "layer_costs_source": cost_source,
            "checkpoint": job.checkpoint,
            "dataset": job.dataset,
            "split": job.split,
            "n_samples": job.n_samples,
            "format": job.fmt,
        },
    )
    return ExportResult(
        out_path=job.out_path,
        meta_path=meta_path,
        n_samples=job.n_samples,
        n_layers=model.n_exits,
        n_classes=model.n_classes,
        layer_costs=costs,
        cost_source=cost_source,
        per_head_accuracy=per_head_accuracy,
    )
