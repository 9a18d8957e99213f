"""Aggregate policy evaluation: accuracy/compute reports, threshold sweeps,
and Pareto-front extraction over a test split.

All aggregates derive from exact integer counts (correct predictions, exit
histogram), so reports are independent of record order and of the number
of worker threads used for the per-sample decision pass.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from exitkit import calib
from exitkit.policy import (
    ExitPolicy,
    PreparedDecisions,
    exits_from_prepared,
    prepare_decisions,
)
from exitkit.trace import TraceDataset

_DEFAULT_ECE_BINS = 50


@dataclass(frozen=True)
class EvaluationReport:
    kind: str
    delta: float
    measure: str
    accuracy: float
    avg_layers: float
    avg_flops: float
    exit_histogram: tuple[int, ...]
    per_layer_accuracy: tuple[float, ...]
    per_layer_ece: tuple[float, ...]


@dataclass(frozen=True)
class ParetoPoint:
    kind: str
    delta: float
    avg_flops: float
    prediction_error: float


def _prepare_chunked(
    test: TraceDataset, policy: ExitPolicy, threads: int | None
) -> PreparedDecisions:
    n = test.n_samples
    workers = threads if threads is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise ValueError("threads must be at least 1")
    workers = min(workers, n)
    if workers == 1:
        return prepare_decisions(test.logits, policy, test.header)
    bounds = np.linspace(0, n, workers + 1).astype(np.int64)
    spans = [
        (int(bounds[i]), int(bounds[i + 1]))
        for i in range(workers)
        if bounds[i] < bounds[i + 1]
    ]
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        parts = list(
            pool.map(
                lambda span: prepare_decisions(
                    test.logits[span[0] : span[1]], policy, test.header
                ),
                spans,
            )
        )
    return PreparedDecisions(
        predictions=np.concatenate([p.predictions for p in parts]),
        confidences=np.concatenate([p.confidences for p in parts]),
        scores=np.ascontiguousarray(
            np.concatenate([p.scores for p in parts])
        ),
        oracle=parts[0].oracle,
    )


def _diagnostic_bins(policy: ExitPolicy) -> int:
    if policy.diagrams:
        return policy.diagrams[0].n_bins
    return _DEFAULT_ECE_BINS


def _per_layer_diagnostics(
    test: TraceDataset, policy: ExitPolicy, prepared: PreparedDecisions
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    n_bins = _diagnostic_bins(policy)
    temps = (
        policy.temperatures.temperatures
        if policy.temperatures is not None
        else (1.0,) * test.n_layers
    )
    labels = test.labels.astype(np.int64)
    accuracies = []
    eces = []
    for layer in range(test.n_layers):
        # forced accuracy from exact integer counts
        hits = int((prepared.predictions[:, layer] == labels).sum())
        accuracies.append(hits / test.n_samples)
        diagram = calib.build_diagram(
            test,
            layer,
            n_bins=n_bins,
            measure=policy.measure,
            temperature=temps[layer],
        )
        eces.append(calib.ece(diagram))
    return tuple(accuracies), tuple(eces)


def _finalize(
    test: TraceDataset,
    policy: ExitPolicy,
    prepared: PreparedDecisions,
    delta: float,
    diagnostics: tuple[tuple[float, ...], tuple[float, ...]],
) -> EvaluationReport:
    n = test.n_samples
    exits = exits_from_prepared(prepared, delta)
    chosen = prepared.predictions[np.arange(n), exits]
    correct = int((chosen == test.labels.astype(np.int64)).sum())
    histogram = np.bincount(exits, minlength=test.n_layers)
    costs = np.asarray(test.header.layer_costs, dtype=np.float64)
    per_layer_accuracy, per_layer_ece = diagnostics
    return EvaluationReport(
        kind=policy.kind,
        delta=delta,
        measure=policy.measure,
        accuracy=correct / n,
        avg_layers=float(int((exits + 1).sum())) / n,
        avg_flops=float(histogram @ costs) / n,
        exit_histogram=tuple(int(c) for c in histogram),
        per_layer_accuracy=per_layer_accuracy,
        per_layer_ece=per_layer_ece,
    )


def evaluate(
    test: TraceDataset, policy: ExitPolicy, threads: int | None = 1
) -> EvaluationReport:
    """Evaluate one policy at its own threshold over a test split."""
    prepared = _prepare_chunked(test, policy, threads)
    diagnostics = _per_layer_diagnostics(test, policy, prepared)
    return _finalize(test, policy, prepared, policy.delta, diagnostics)


def sweep(
    test: TraceDataset,
    policy: ExitPolicy,
    deltas: list[float],
    threads: int | None = 1,
) -> list[EvaluationReport]:
    """Evaluate one policy family over a strictly increasing delta grid.

    The per-sample scores are threshold-free, so they are computed once
    and only the exit scan repeats per delta.
    """
    if not deltas:
        raise ValueError("delta grid must not be empty")
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta grid must be strictly increasing")
    if not all(0.0 <= d <= 1.0 for d in deltas):
        raise ValueError("deltas must lie in [0, 1]")
    prepared = _prepare_chunked(test, policy, threads)
    diagnostics = _per_layer_diagnostics(test, policy, prepared)
    return [
        _finalize(
            test, replace(policy, delta=d), prepared, d, diagnostics
        )
        for d in deltas
    ]


def sweep_points(reports: list[EvaluationReport]) -> list[ParetoPoint]:
    return [
        ParetoPoint(
            kind=r.kind,
            delta=r.delta,
            avg_flops=r.avg_flops,
            prediction_error=1.0 - r.accuracy,
        )
        for r in reports
    ]


def pareto(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Minimal non-dominated subset under (avg_flops down, error down).

    A point survives when no other point is at most as costly and at most
    as erroneous with at least one strict improvement. Coordinate ties
    within the front are all kept. Result is sorted by cost.
    """
    if not points:
        raise ValueError("no points to filter")
    ordered = sorted(
        points,
        key=lambda p: (p.avg_flops, p.prediction_error, p.kind, p.delta),
    )
    front: list[ParetoPoint] = []
    best_error = float("inf")
    i = 0
    while i < len(ordered):
        j = i
        while (
            j < len(ordered) and ordered[j].avg_flops == ordered[i].avg_flops
        ):
            j += 1
        group = ordered[i:j]
        group_min = min(p.prediction_error for p in group)
        if group_min < best_error:
            front.extend(
                p for p in group if p.prediction_error == group_min
            )
            best_error = group_min
        i = j
    return front


# export helpers


def report_to_obj(report: EvaluationReport) -> dict:
    return {
        "kind": report.kind,
        "delta": report.delta,
        "measure": report.measure,
        "accuracy": report.accuracy,
        "avg_layers": report.avg_layers,
        "avg_flops": report.avg_flops,
        "exit_histogram": list(report.exit_histogram),
        "per_layer_accuracy": list(report.per_layer_accuracy),
        "per_layer_ece": list(report.per_layer_ece),
    }


def reports_to_csv_text(reports: list[EvaluationReport]) -> str:
    if not reports:
        raise ValueError("no reports to export")
    n_layers = len(reports[0].exit_histogram)
    if any(len(r.exit_histogram) != n_layers for r in reports):
        raise ValueError("reports cover different layer counts")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["kind", "delta", "accuracy", "avg_layers", "avg_flops"]
        + [f"exit_hist_{i}" for i in range(n_layers)]
    )
    for r in reports:
        writer.writerow(
            [r.kind, r.delta, r.accuracy, r.avg_layers, r.avg_flops]
            + list(r.exit_histogram)
        )
    return buffer.getvalue()


def pareto_to_csv_text(points: list[ParetoPoint]) -> str:
    """Plot-ready front: prediction error exported as a percentage."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["kind", "delta", "avg_flops", "prediction_error_pct"])
    for p in points:
        writer.writerow(
            [p.kind, p.delta, p.avg_flops, f"{100.0 * p.prediction_error:.2f}"]
        )
    return buffer.getvalue()
