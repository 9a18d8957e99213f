"""Confidence, reliability diagrams, calibration error, temperature fitting.

A reliability diagram partitions [0, 1] into equal-width confidence bins
and stores, per bin, the sample count, the mean confidence, and the mean
correctness observed on a validation split. Diagrams may optionally be
built from neighbor-smoothed correctness, where each sample's 0/1 outcome
is first replaced by the mean over its nearest validation neighbors in
confidence space; such diagrams drive the pcee_ws exit policy and are not
valid inputs for calibration-error computation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from exitkit import _kernels
from exitkit._files import atomic_write_text
from exitkit.trace import TraceDataset, TraceError

MEASURES = ("max_softmax", "normalized_negentropy")
TEMPERATURE_MIN = 0.05
TEMPERATURE_MAX = 10.0

_LN_T_TOL = 1e-4
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Probabilities proportional to exp(logit / temperature)."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("logits must be finite")
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")
    return _softmax2d(z[None, :], temperature)[0]


def _softmax2d(z: np.ndarray, temperature: float) -> np.ndarray:
    z = z / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def confidence(probs: np.ndarray, measure: str = "max_softmax") -> float:
    """Scalar confidence in [0, 1] for one probability vector."""
    p = np.asarray(probs, dtype=np.float64)
    _check_prob_vector(p)
    return float(_confidence2d(p[None, :], measure)[0])


def _check_prob_vector(p: np.ndarray) -> None:
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError("expected a probability vector of length >= 2")
    if ((p < 0.0) | (p > 1.0)).any() or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError("probabilities must lie in [0, 1] and sum to 1")


def _confidence2d(p: np.ndarray, measure: str) -> np.ndarray:
    if measure == "max_softmax":
        c = p.max(axis=1)
    elif measure == "normalized_negentropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0.0, p * np.log(p), 0.0)
        entropy = -terms.sum(axis=1)
        c = 1.0 - entropy / math.log(p.shape[1])
    else:
        raise ValueError(f"unknown confidence measure {measure!r}")
    # guard against sub-epsilon drift outside [0, 1]
    return np.clip(c, 0.0, 1.0)


def bin_index(confidence_value: float, n_bins: int) -> int:
    """Equal-width bin of [0, 1]: floor(c * M), with c = 1.0 in bin M-1."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    c = float(confidence_value)
    if not (0.0 <= c <= 1.0):
        raise ValueError("confidence must lie in [0, 1]")
    return min(int(c * n_bins), n_bins - 1)


def _bin_index2d(c: np.ndarray, n_bins: int) -> np.ndarray:
    return np.minimum((c * n_bins).astype(np.int64), n_bins - 1)


def smooth_correctness(
    confidences: np.ndarray, correct: np.ndarray, neighbors: int
) -> np.ndarray:
    """Per-sample mean correctness over confidence-nearest neighbors.

    The neighbor set of sample i always contains i itself plus the
    neighbors-1 other samples closest by |confidence difference|, with
    distance ties resolved toward the lower sample index. neighbors=1 is
    therefore the identity on correctness.
    """
    conf = np.ascontiguousarray(confidences, dtype=np.float64)
    weight = np.ascontiguousarray(correct, dtype=np.float64)
    n = conf.shape[0]
    if weight.shape != (n,):
        raise ValueError("confidences and correct must have the same length")
    if not 1 <= neighbors <= n:
        raise ValueError("neighbors must lie in [1, n_samples]")
    order = np.argsort(conf, kind="stable")
    cs = conf[order]
    ws = weight[order]
    starts = np.empty(n, dtype=bool)
    starts[0] = True
    starts[1:] = cs[1:] != cs[:-1]
    run_start = np.flatnonzero(starts).astype(np.int64)
    run_end = np.append(run_start[1:], n).astype(np.int64)
    run_conf = cs[run_start]
    run_wsum = np.add.reduceat(ws, run_start)
    run_of = (np.cumsum(starts) - 1).astype(np.int64)
    smoothed = _kernels.smooth_sorted(
        cs,
        ws,
        np.ascontiguousarray(order, dtype=np.int64),
        run_start,
        np.ascontiguousarray(run_end),
        np.ascontiguousarray(run_conf),
        np.ascontiguousarray(run_wsum, dtype=np.float64),
        run_of,
        neighbors,
    )
    out = np.empty(n, dtype=np.float64)
    out[order] = smoothed
    return out


@dataclass(frozen=True)
class SmoothingSpec:
    neighbors: int

    def __post_init__(self) -> None:
        if self.neighbors < 1:
            raise ValueError("neighbors must be a positive integer")


@dataclass(frozen=True, eq=False)
class ReliabilityDiagram:
    """Binned confidence-to-accuracy mapping for one exit layer.

    Empty bins carry count 0 and NaN accuracy. smoothing_h records the
    neighbor count used to smooth correctness before binning, or None for
    a plain diagram.
    """

    layer: int
    n_bins: int
    bin_edges: np.ndarray  # (n_bins + 1,) float64
    bin_count: np.ndarray  # (n_bins,) int64
    bin_conf_mean: np.ndarray  # (n_bins,) float64
    bin_accuracy: np.ndarray  # (n_bins,) float64, NaN where count == 0
    smoothing_h: int | None = None

    def __post_init__(self) -> None:
        m = self.n_bins
        if m < 1:
            raise ValueError("n_bins must be at least 1")
        edges = np.ascontiguousarray(self.bin_edges, dtype=np.float64)
        count = np.ascontiguousarray(self.bin_count, dtype=np.int64)
        conf = np.ascontiguousarray(self.bin_conf_mean, dtype=np.float64)
        acc = np.ascontiguousarray(self.bin_accuracy, dtype=np.float64)
        if (
            edges.shape != (m + 1,)
            or count.shape != (m,)
            or conf.shape != (m,)
            or acc.shape != (m,)
        ):
            raise ValueError("diagram array lengths do not match n_bins")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_count", count)
        object.__setattr__(self, "bin_conf_mean", conf)
        object.__setattr__(self, "bin_accuracy", acc)

    @property
    def total_count(self) -> int:
        return int(self.bin_count.sum())


def binned_stats(
    conf: np.ndarray, values: np.ndarray, n_bins: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bin (count, mean confidence, mean value); NaN means for empties."""
    idx = _bin_index2d(conf, n_bins)
    count = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    value_sum = np.bincount(idx, weights=values, minlength=n_bins)
    nonempty = count > 0
    safe = np.where(nonempty, count, 1)
    conf_mean = np.where(nonempty, conf_sum / safe, 0.0)
    value_mean = np.where(nonempty, value_sum / safe, np.nan)
    return count.astype(np.int64), conf_mean, value_mean


def build_diagram(
    val: TraceDataset,
    layer: int,
    n_bins: int = 50,
    measure: str = "max_softmax",
    temperature: float = 1.0,
    smoothing: SmoothingSpec | None = None,
) -> ReliabilityDiagram:
    """Bin a validation split's confidence against (smoothed) correctness."""
    if not 0 <= layer < val.n_layers:
        raise ValueError(f"layer {layer} out of range [0, {val.n_layers})")
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")
    probs = _softmax2d(val.logits[:, layer, :].astype(np.float64), temperature)
    conf = _confidence2d(probs, measure)
    correct = (
        probs.argmax(axis=1) == val.labels.astype(np.int64)
    ).astype(np.float64)
    if smoothing is not None:
        if smoothing.neighbors > val.n_samples:
            raise ValueError(
                "smoothing neighbor count exceeds the validation size"
            )
        correct = smooth_correctness(conf, correct, smoothing.neighbors)
    count, conf_mean, accuracy = binned_stats(conf, correct, n_bins)
    return ReliabilityDiagram(
        layer=layer,
        n_bins=n_bins,
        bin_edges=np.linspace(0.0, 1.0, n_bins + 1),
        bin_count=count,
        bin_conf_mean=conf_mean,
        bin_accuracy=accuracy,
        smoothing_h=None if smoothing is None else smoothing.neighbors,
    )


def ece(diagram: ReliabilityDiagram) -> float:
    """Count-weighted mean absolute gap between bin accuracy and confidence.

    Defined only for plain diagrams: smoothed correctness changes what the
    per-bin accuracy means, so smoothed diagrams are rejected.
    """
    if diagram.smoothing_h is not None:
        raise ValueError("ece is defined on unsmoothed diagrams only")
    n = diagram.total_count
    if n == 0:
        raise ValueError("diagram was built from zero samples")
    nonempty = diagram.bin_count > 0
    gaps = np.abs(
        diagram.bin_accuracy[nonempty] - diagram.bin_conf_mean[nonempty]
    )
    return float(((diagram.bin_count[nonempty] / n) * gaps).sum())


@dataclass(frozen=True)
class TemperatureTable:
    temperatures: tuple[float, ...]

    def __post_init__(self) -> None:
        temps = tuple(float(t) for t in self.temperatures)
        object.__setattr__(self, "temperatures", temps)
        if not temps:
            raise ValueError("temperature table must not be empty")
        if not all(
            TEMPERATURE_MIN <= t <= TEMPERATURE_MAX for t in temps
        ):
            raise ValueError(
                f"temperatures must lie in "
                f"[{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]"
            )


def _mean_nll(logits: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(z.shape[0]), labels]
    return float(np.mean(lse - picked))


def fit_temperature(val: TraceDataset, layer: int) -> float:
    """Temperature minimizing mean validation NLL for one layer.

    Deterministic golden-section search on ln T over the allowed range,
    refined by direct comparison so that T=1 wins exact ties (constant
    NLL) and boundary optima return the exact bound. The result never has
    higher NLL than T=1.
    """
    if not 0 <= layer < val.n_layers:
        raise ValueError(f"layer {layer} out of range [0, {val.n_layers})")
    logits = val.logits[:, layer, :].astype(np.float64)
    labels = val.labels.astype(np.int64)

    def objective(ln_t: float) -> float:
        return _mean_nll(logits, labels, math.exp(ln_t))

    lo = math.log(TEMPERATURE_MIN)
    hi = math.log(TEMPERATURE_MAX)
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = objective(c)
    fd = objective(d)
    while b - a > _LN_T_TOL:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = objective(d)
    ln_star = 0.5 * (a + b)

    candidates = [1.0]
    if ln_star - lo <= 2.0 * _LN_T_TOL:
        candidates.append(TEMPERATURE_MIN)
    if hi - ln_star <= 2.0 * _LN_T_TOL:
        candidates.append(TEMPERATURE_MAX)
    candidates.append(math.exp(ln_star))
    values = [_mean_nll(logits, labels, t) for t in candidates]
    best = min(values)
    for t, v in zip(candidates, values):
        if v <= best + 1e-12:
            return t
    raise AssertionError("unreachable")


def fit_all_temperatures(val: TraceDataset) -> TemperatureTable:
    return TemperatureTable(
        temperatures=tuple(
            fit_temperature(val, layer) for layer in range(val.n_layers)
        )
    )


# JSON serialization


def diagram_to_obj(diagram: ReliabilityDiagram) -> dict:
    accuracy = [
        float(a) if n > 0 else None
        for a, n in zip(diagram.bin_accuracy, diagram.bin_count)
    ]
    return {
        "layer": diagram.layer,
        "n_bins": diagram.n_bins,
        "edges": [float(e) for e in diagram.bin_edges],
        "count": [int(c) for c in diagram.bin_count],
        "conf_mean": [float(c) for c in diagram.bin_conf_mean],
        "accuracy": accuracy,
        "smoothing_h": diagram.smoothing_h,
    }


def _require_list(obj: dict, key: str, length: int) -> list:
    value = obj.get(key)
    if not isinstance(value, list) or len(value) != length:
        raise TraceError(f"diagram field {key!r} must be a list of {length}")
    return value


def diagram_from_obj(obj: dict) -> ReliabilityDiagram:
    if not isinstance(obj, dict):
        raise TraceError("diagram entry must be a JSON object")
    layer = obj.get("layer")
    m = obj.get("n_bins")
    if type(layer) is not int or layer < 0:
        raise TraceError("diagram field 'layer' must be a nonnegative integer")
    if type(m) is not int or m < 1:
        raise TraceError("diagram field 'n_bins' must be a positive integer")
    edges = np.asarray(_require_list(obj, "edges", m + 1), dtype=np.float64)
    if not np.allclose(edges, np.linspace(0.0, 1.0, m + 1), atol=1e-9):
        raise TraceError("diagram edges must partition [0, 1] equally")
    counts = _require_list(obj, "count", m)
    if not all(type(c) is int and c >= 0 for c in counts):
        raise TraceError("diagram counts must be nonnegative integers")
    count = np.asarray(counts, dtype=np.int64)
    conf_mean = np.asarray(
        _require_list(obj, "conf_mean", m), dtype=np.float64
    )
    raw_acc = _require_list(obj, "accuracy", m)
    accuracy = np.empty(m, dtype=np.float64)
    for i, (a, c) in enumerate(zip(raw_acc, count)):
        if c == 0:
            if a is not None:
                raise TraceError(f"diagram bin {i}: empty bin with accuracy")
            accuracy[i] = np.nan
        else:
            if not isinstance(a, (int, float)) or isinstance(a, bool):
                raise TraceError(f"diagram bin {i}: accuracy must be a number")
            if not 0.0 <= float(a) <= 1.0:
                raise TraceError(f"diagram bin {i}: accuracy out of [0, 1]")
            accuracy[i] = float(a)
    nonempty = count > 0
    if (
        (conf_mean[nonempty] < edges[:-1][nonempty] - 1e-9)
        | (conf_mean[nonempty] > edges[1:][nonempty] + 1e-9)
    ).any():
        raise TraceError("diagram conf_mean values fall outside their bins")
    smoothing_h = obj.get("smoothing_h")
    if smoothing_h is not None and (
        type(smoothing_h) is not int or smoothing_h < 1
    ):
        raise TraceError("diagram field 'smoothing_h' must be null or int >= 1")
    return ReliabilityDiagram(
        layer=layer,
        n_bins=m,
        bin_edges=edges,
        bin_count=count,
        bin_conf_mean=conf_mean,
        bin_accuracy=accuracy,
        smoothing_h=smoothing_h,
    )


def write_diagrams(path: str, diagrams: list[ReliabilityDiagram]) -> None:
    text = json.dumps(
        [diagram_to_obj(d) for d in diagrams], separators=(",", ":")
    )
    atomic_write_text(path, text + "\n")


def read_diagrams(path: str) -> list[ReliabilityDiagram]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise TraceError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise TraceError(f"{path}: expected a nonempty JSON array of diagrams")
    return [diagram_from_obj(entry) for entry in data]


def write_temperatures(path: str, table: TemperatureTable) -> None:
    text = json.dumps(
        {"temperatures": list(table.temperatures)}, separators=(",", ":")
    )
    atomic_write_text(path, text + "\n")


def read_temperatures(path: str) -> TemperatureTable:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise TraceError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(
        data.get("temperatures"), list
    ):
        raise TraceError(f"{path}: expected {{\"temperatures\": [...]}}")
    values = data["temperatures"]
    if not all(
        isinstance(t, (int, float)) and not isinstance(t, bool) for t in values
    ):
        raise TraceError(f"{path}: temperatures must be numbers")
    try:
        return TemperatureTable(temperatures=tuple(values))
    except ValueError as exc:
        raise TraceError(f"{path}: {exc}") from exc
