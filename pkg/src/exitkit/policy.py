"""Per-sample exit decisions for all supported strategies.

Strategy kinds (wire names are fixed by the file formats):

- "confidence": exit at the first layer whose confidence meets the
  threshold delta.
- "pcee": exit at the first layer whose reliability-diagram accuracy
  estimate at the observed confidence meets delta.
- "pcee_ws": same rule, but the diagrams were built from neighbor-smoothed
  correctness.
- "oracle": exit at the first layer whose argmax prediction matches the
  final layer's argmax (delta is ignored).

One threshold is shared by every layer. The final layer always exits, so
it needs no diagram; policies for an L-layer trace carry L-1 diagrams.
All comparisons use >= and argmax ties resolve to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from exitkit import _kernels
from exitkit.calib import (
    MEASURES,
    ReliabilityDiagram,
    TemperatureTable,
    _confidence2d,
    _softmax2d,
    bin_index,
)
from exitkit.trace import TraceError, TraceHeader, TraceRecord

KINDS = ("confidence", "pcee", "pcee_ws", "oracle")
_DIAGRAM_KINDS = ("pcee", "pcee_ws")


@dataclass(frozen=True, eq=False)
class ExitPolicy:
    kind: str
    delta: float = 0.0
    measure: str = "max_softmax"
    diagrams: tuple[ReliabilityDiagram, ...] | None = None
    temperatures: TemperatureTable | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.measure not in MEASURES:
            raise ValueError(f"unknown confidence measure {self.measure!r}")
        if self.kind in _DIAGRAM_KINDS:
            if self.diagrams is None:
                raise ValueError(f"kind {self.kind!r} requires diagrams")
            diagrams = tuple(self.diagrams)
            object.__setattr__(self, "diagrams", diagrams)
            for i, diagram in enumerate(diagrams):
                if diagram.layer != i:
                    raise ValueError(
                        f"diagram {i} covers layer {diagram.layer}; "
                        f"policies need consecutive layers from 0"
                    )
                if diagram.n_bins != diagrams[0].n_bins:
                    raise ValueError("diagrams must share one bin count")
                smoothed = diagram.smoothing_h is not None
                if self.kind == "pcee" and smoothed:
                    raise ValueError("pcee requires unsmoothed diagrams")
                if self.kind == "pcee_ws" and not smoothed:
                    raise ValueError("pcee_ws requires smoothed diagrams")
        elif self.diagrams is not None:
            raise ValueError(f"kind {self.kind!r} does not take diagrams")


@dataclass(frozen=True)
class ExitDecision:
    exit_layer: int
    prediction: int
    confidence_at_exit: float
    cost: float


def resolved_accuracy_table(diagram: ReliabilityDiagram) -> np.ndarray:
    """Dense per-bin accuracy with empty bins filled from the nearest
    non-empty bin by bin-center distance, ties toward the lower index."""
    nonempty = np.flatnonzero(diagram.bin_count > 0)
    if nonempty.size == 0:
        raise TraceError(
            f"diagram for layer {diagram.layer} has zero total count"
        )
    if nonempty.size == diagram.n_bins:
        return diagram.bin_accuracy.copy()
    bins = np.arange(diagram.n_bins)
    pos = np.searchsorted(nonempty, bins)
    left = nonempty[np.clip(pos - 1, 0, nonempty.size - 1)]
    right = nonempty[np.clip(pos, 0, nonempty.size - 1)]
    has_left = pos > 0
    has_right = pos < nonempty.size
    dist_left = np.where(has_left, np.abs(bins - left), np.iinfo(np.int64).max)
    dist_right = np.where(
        has_right, np.abs(right - bins), np.iinfo(np.int64).max
    )
    # equal distances pick the left (lower-index) bin
    source = np.where(dist_left <= dist_right, left, right)
    return diagram.bin_accuracy[source]


def lookup_accuracy(diagram: ReliabilityDiagram, confidence_value: float) -> float:
    """Diagram accuracy estimate for one confidence value."""
    table = resolved_accuracy_table(diagram)
    return float(table[bin_index(confidence_value, diagram.n_bins)])


@dataclass(eq=False)
class PreparedDecisions:
    """Per-sample quantities that do not depend on the threshold."""

    predictions: np.ndarray  # (N, L) int64
    confidences: np.ndarray  # (N, L) float64
    scores: np.ndarray  # (N, L-1) float64, C-contiguous
    oracle: bool


def _temperature_vector(
    policy: ExitPolicy, n_layers: int
) -> np.ndarray:
    if policy.temperatures is None:
        return np.ones(n_layers, dtype=np.float64)
    temps = np.asarray(policy.temperatures.temperatures, dtype=np.float64)
    if temps.shape != (n_layers,):
        raise TraceError(
            f"temperature table covers {temps.shape[0]} layers, "
            f"trace has {n_layers}"
        )
    return temps


def prepare_decisions(
    logits: np.ndarray, policy: ExitPolicy, header: TraceHeader
) -> PreparedDecisions:
    """Compute predictions, confidences, and threshold-free exit scores."""
    n_layers = header.n_layers
    n_classes = header.n_classes
    arr = np.asarray(logits)
    if arr.ndim != 3 or arr.shape[1:] != (n_layers, n_classes):
        raise TraceError(
            f"logit block of shape {arr.shape} does not match header "
            f"({n_layers} layers, {n_classes} classes)"
        )
    if policy.kind in _DIAGRAM_KINDS and len(policy.diagrams) != n_layers - 1:
        raise TraceError(
            f"policy carries {len(policy.diagrams)} diagrams, "
            f"trace needs {n_layers - 1}"
        )
    temps = _temperature_vector(policy, n_layers)
    n = arr.shape[0]
    predictions = np.empty((n, n_layers), dtype=np.int64)
    confidences = np.empty((n, n_layers), dtype=np.float64)
    for layer in range(n_layers):
        probs = _softmax2d(
            arr[:, layer, :].astype(np.float64), float(temps[layer])
        )
        predictions[:, layer] = probs.argmax(axis=1)
        confidences[:, layer] = _confidence2d(probs, policy.measure)
    if policy.kind == "oracle":
        scores = (
            predictions[:, : n_layers - 1] == predictions[:, n_layers - 1 :]
        ).astype(np.float64)
    elif policy.kind == "confidence":
        scores = confidences[:, : n_layers - 1].copy()
    else:
        scores = np.empty((n, n_layers - 1), dtype=np.float64)
        for layer in range(n_layers - 1):
            table = resolved_accuracy_table(policy.diagrams[layer])
            idx = np.minimum(
                (confidences[:, layer] * policy.diagrams[layer].n_bins).astype(
                    np.int64
                ),
                policy.diagrams[layer].n_bins - 1,
            )
            scores[:, layer] = table[idx]
    return PreparedDecisions(
        predictions=predictions,
        confidences=confidences,
        scores=np.ascontiguousarray(scores),
        oracle=policy.kind == "oracle",
    )


def exits_from_prepared(
    prepared: PreparedDecisions, delta: float
) -> np.ndarray:
    """First layer whose score meets the threshold; the last layer catches
    everything else. The oracle ignores delta."""
    threshold = 0.5 if prepared.oracle else delta
    return _kernels.first_exceed(prepared.scores, threshold)


def decide_exits(
    logits: np.ndarray, policy: ExitPolicy, header: TraceHeader
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch decisions: (exit layers, all-layer predictions, confidences)."""
    prepared = prepare_decisions(logits, policy, header)
    exits = exits_from_prepared(prepared, policy.delta)
    return exits, prepared.predictions, prepared.confidences


def decide_exit(
    record: TraceRecord, policy: ExitPolicy, header: TraceHeader
) -> ExitDecision:
    """Single-record decision; delegates to the batch path."""
    logits = np.asarray(record.logits)
    if logits.shape != (header.n_layers, header.n_classes):
        raise TraceError(
            f"record logits of shape {logits.shape} do not match header"
        )
    exits, predictions, confidences = decide_exits(
        logits[None, :, :], policy, header
    )
    layer = int(exits[0])
    return ExitDecision(
        exit_layer=layer,
        prediction=int(predictions[0, layer]),
        confidence_at_exit=float(confidences[0, layer]),
        cost=float(header.layer_costs[layer]),
    )
