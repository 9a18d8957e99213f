"""Layerwise logit traces: data model, file formats, validation, splitting.

A trace records, for every sample of a dataset, the logits produced by each
exit head of a multi-exit classifier, together with the true label and the
cumulative compute cost of reaching each head. Two on-disk formats carry
the same data.

NDJSON: line 1 is the header object

    {"version":1,"n_layers":L,"n_classes":K,"layer_costs":[c1,...,cL]}

and every further line is one record

    {"id":<u64>,"label":<u32>,"logits":[[...K floats...] x L]}

encoded as UTF-8 with LF line endings. Logit literals are the shortest
decimal strings that round-trip through IEEE-754 binary32, so converting
to the binary format and back is lossless.

Binary: magic "EETR", u32 version (=1), u32 n_layers, u32 n_classes,
n_layers f64 little-endian cumulative costs, u64 record count, then per
record: u64 id, u32 label, n_layers*n_classes f32 little-endian logits,
row-major by layer.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from exitkit._files import atomic_write_bytes
from exitkit.rng import shuffle_indices

MAGIC = b"EETR"
FORMAT_VERSION = 1
FORMATS = ("ndjson", "binary")

_U64_MAX = (1 << 64) - 1
_U32_MAX = (1 << 32) - 1


class TraceError(Exception):
    """Malformed or mutually inconsistent data in a trace or companion file."""


@dataclass(frozen=True)
class TraceHeader:
    n_layers: int
    n_classes: int
    layer_costs: tuple[float, ...]
    version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        if self.version != FORMAT_VERSION:
            raise TraceError(f"unsupported trace version {self.version}")
        if self.n_layers < 1:
            raise TraceError("n_layers must be at least 1")
        if self.n_classes < 2:
            raise TraceError("n_classes must be at least 2")
        costs = tuple(float(c) for c in self.layer_costs)
        object.__setattr__(self, "layer_costs", costs)
        if len(costs) != self.n_layers:
            raise TraceError(
                f"expected {self.n_layers} layer costs, got {len(costs)}"
            )
        if not all(math.isfinite(c) and c >= 0.0 for c in costs):
            raise TraceError("layer costs must be finite and nonnegative")
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise TraceError("layer costs must be strictly increasing")


@dataclass(frozen=True, eq=False)
class TraceRecord:
    id: int
    label: int
    logits: np.ndarray  # (n_layers, n_classes) float32


@dataclass(frozen=True, eq=False)
class TraceDataset:
    """Immutable column-oriented view of all records in file order."""

    header: TraceHeader
    ids: np.ndarray  # (N,) uint64
    labels: np.ndarray  # (N,) uint32
    logits: np.ndarray  # (N, n_layers, n_classes) float32

    def __post_init__(self) -> None:
        ids = np.ascontiguousarray(self.ids, dtype=np.uint64)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        logits = np.ascontiguousarray(self.logits, dtype=np.float32)
        n = ids.shape[0]
        expect = (n, self.header.n_layers, self.header.n_classes)
        if labels.shape != (n,) or logits.shape != expect:
            raise TraceError(
                f"column shapes {labels.shape}/{logits.shape} do not match "
                f"{n} ids and header {expect[1:]}"
            )
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "logits", logits)

    @property
    def n_samples(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_layers(self) -> int:
        return self.header.n_layers

    @property
    def n_classes(self) -> int:
        return self.header.n_classes

    def record(self, index: int) -> TraceRecord:
        return TraceRecord(
            id=int(self.ids[index]),
            label=int(self.labels[index]),
            logits=self.logits[index],
        )

    def subset(self, indices: np.ndarray) -> "TraceDataset":
        idx = np.asarray(indices)
        return TraceDataset(
            header=self.header,
            ids=self.ids[idx],
            labels=self.labels[idx],
            logits=self.logits[idx],
        )

    @staticmethod
    def from_records(
        header: TraceHeader, records: list[TraceRecord]
    ) -> "TraceDataset":
        if not records:
            raise TraceError("dataset must contain at least one record")
        return TraceDataset(
            header=header,
            ids=np.array([r.id for r in records], dtype=np.uint64),
            labels=np.array([r.label for r in records], dtype=np.uint32),
            logits=np.stack([r.logits for r in records]).astype(np.float32),
        )


def validate_dataset(dataset: TraceDataset) -> None:
    """Check record-level invariants, reporting the first offending index."""
    n = dataset.n_samples
    if n == 0:
        raise TraceError("dataset must contain at least one record")
    bad = np.flatnonzero(dataset.labels >= dataset.n_classes)
    if bad.size:
        i = int(bad[0])
        raise TraceError(
            f"record {i}: label {int(dataset.labels[i])} out of range "
            f"[0, {dataset.n_classes})"
        )
    finite = np.isfinite(dataset.logits).all(axis=(1, 2))
    bad = np.flatnonzero(~finite)
    if bad.size:
        raise TraceError(f"record {int(bad[0])}: non-finite logit value")
    order = np.argsort(dataset.ids, kind="stable")
    sorted_ids = dataset.ids[order]
    dup = np.flatnonzero(sorted_ids[1:] == sorted_ids[:-1])
    if dup.size:
        k = int(dup[0])
        raise TraceError(
            f"record {int(order[k + 1])}: duplicate id {int(sorted_ids[k])} "
            f"(first seen at record {int(order[k])})"
        )


@dataclass(frozen=True)
class SplitSpec:
    validation_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self) -> None:
        f = float(self.validation_fraction)
        if not (0.0 < f < 1.0):
            raise ValueError("validation_fraction must lie strictly in (0, 1)")
        object.__setattr__(self, "validation_fraction", f)


def split(
    dataset: TraceDataset, spec: SplitSpec
) -> tuple[TraceDataset, TraceDataset]:
    """Deterministic validation/test partition.

    Records are shuffled by a Fisher-Yates pass over the SplitMix64 stream
    for spec.seed; the first floor(fraction*N) of the shuffled order become
    the validation set and the remainder the test set, both kept in
    shuffled order. The size is clamped so neither side is empty.
    """
    n = dataset.n_samples
    if n < 2:
        raise TraceError("cannot split a dataset with fewer than 2 records")
    perm = shuffle_indices(n, spec.seed)
    n_val = int(math.floor(spec.validation_fraction * n))
    n_val = min(max(n_val, 1), n - 1)
    return dataset.subset(perm[:n_val]), dataset.subset(perm[n_val:])


def detect_format(path: str) -> str:
    with open(path, "rb") as handle:
        head = handle.read(len(MAGIC))
    return "binary" if head == MAGIC else "ndjson"


def read_trace(path: str, format: str | None = None) -> TraceDataset:
    """Load and fully validate a trace file ("ndjson", "binary", or auto)."""
    fmt = format if format is not None else detect_format(path)
    if fmt == "ndjson":
        dataset = _read_ndjson(path)
    elif fmt == "binary":
        dataset = _read_binary(path)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    validate_dataset(dataset)
    return dataset


def write_trace(dataset: TraceDataset, path: str, format: str) -> None:
    """Validate and write a trace; the file appears atomically."""
    validate_dataset(dataset)
    if format == "ndjson":
        data = _ndjson_bytes(dataset)
    elif format == "binary":
        data = _binary_bytes(dataset)
    else:
        raise ValueError(f"unknown trace format {format!r}")
    atomic_write_bytes(path, data)


# NDJSON encoding


def _header_line(header: TraceHeader) -> str:
    return json.dumps(
        {
            "version": header.version,
            "n_layers": header.n_layers,
            "n_classes": header.n_classes,
            "layer_costs": list(header.layer_costs),
        },
        separators=(",", ":"),
    )


def _ndjson_bytes(dataset: TraceDataset) -> bytes:
    lines = [_header_line(dataset.header)]
    ids = dataset.ids.tolist()
    labels = dataset.labels.tolist()
    for i in range(dataset.n_samples):
        rows = ",".join(
            "[" + ",".join(str(v) for v in row) + "]"
            for row in dataset.logits[i]
        )
        lines.append(f'{{"id":{ids[i]},"label":{labels[i]},"logits":[{rows}]}}')
    lines.append("")
    return "\n".join(lines).encode("utf-8")


def _json_int(obj: dict, key: str, where: str, lo: int, hi: int) -> int:
    value = obj.get(key)
    if type(value) is not int:
        raise TraceError(f"{where}: field {key!r} must be an integer")
    if not (lo <= value <= hi):
        raise TraceError(f"{where}: field {key!r} out of range")
    return value


def _read_ndjson(path: str) -> TraceDataset:
    try:
        return _read_ndjson_text(path)
    except UnicodeDecodeError as exc:
        raise TraceError(f"not valid NDJSON text: {exc}") from exc


def _read_ndjson_text(path: str) -> TraceDataset:
    with open(path, "r", encoding="utf-8") as handle:
        head_line = handle.readline()
        if not head_line.strip():
            raise TraceError("malformed header: empty file")
        try:
            head = json.loads(head_line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"malformed header: {exc}") from exc
        if not isinstance(head, dict):
            raise TraceError("malformed header: expected a JSON object")
        version = _json_int(head, "version", "header", 0, _U32_MAX)
        n_layers = _json_int(head, "n_layers", "header", 0, _U32_MAX)
        n_classes = _json_int(head, "n_classes", "header", 0, _U32_MAX)
        costs = head.get("layer_costs")
        if not isinstance(costs, list) or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool)
            for c in costs
        ):
            raise TraceError("malformed header: layer_costs must be numbers")
        header = TraceHeader(
            n_layers=n_layers,
            n_classes=n_classes,
            layer_costs=tuple(float(c) for c in costs),
            version=version,
        )

        ids: list[int] = []
        labels: list[int] = []
        blocks: list[np.ndarray] = []
        index = 0
        for line in handle:
            if not line.strip():
                continue
            where = f"record {index}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise TraceError(f"{where}: expected a JSON object")
            ids.append(_json_int(obj, "id", where, 0, _U64_MAX))
            labels.append(_json_int(obj, "label", where, 0, _U32_MAX))
            rows = obj.get("logits")
            if (
                not isinstance(rows, list)
                or len(rows) != n_layers
                or not all(
                    isinstance(r, list) and len(r) == n_classes for r in rows
                )
            ):
                raise TraceError(
                    f"{where}: logits must be {n_layers} rows of "
                    f"{n_classes} values"
                )
            for row in rows:
                if not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in row
                ):
                    raise TraceError(f"{where}: logits must be numbers")
            # parse as float64 then narrow once; exact for binary32 literals
            blocks.append(
                np.asarray(rows, dtype=np.float64).astype(np.float32)
            )
            index += 1

    if index == 0:
        raise TraceError("dataset must contain at least one record")
    return TraceDataset(
        header=header,
        ids=np.asarray(ids, dtype=np.uint64),
        labels=np.asarray(labels, dtype=np.uint32),
        logits=np.stack(blocks),
    )


# binary encoding


def _record_dtype(n_layers: int, n_classes: int) -> np.dtype:
    return np.dtype(
        [
            ("id", "<u8"),
            ("label", "<u4"),
            ("logits", "<f4", (n_layers, n_classes)),
        ]
    )


def _binary_bytes(dataset: TraceDataset) -> bytes:
    header = dataset.header
    head = MAGIC + struct.pack(
        "<III", header.version, header.n_layers, header.n_classes
    )
    head += np.asarray(header.layer_costs, dtype="<f8").tobytes()
    head += struct.pack("<Q", dataset.n_samples)
    table = np.empty(
        dataset.n_samples, dtype=_record_dtype(header.n_layers, header.n_classes)
    )
    table["id"] = dataset.ids
    table["label"] = dataset.labels
    table["logits"] = dataset.logits
    return head + table.tobytes()


def _read_binary(path: str) -> TraceDataset:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise TraceError("malformed header: bad magic bytes")
    fixed = len(MAGIC) + 12
    if len(blob) < fixed:
        raise TraceError("malformed header: truncated")
    version, n_layers, n_classes = struct.unpack(
        "<III", blob[len(MAGIC) : fixed]
    )
    costs_end = fixed + 8 * n_layers
    if len(blob) < costs_end + 8:
        raise TraceError("malformed header: truncated cost table")
    costs = np.frombuffer(blob, dtype="<f8", count=n_layers, offset=fixed)
    (count,) = struct.unpack("<Q", blob[costs_end : costs_end + 8])
    header = TraceHeader(
        n_layers=n_layers,
        n_classes=n_classes,
        layer_costs=tuple(costs.tolist()),
        version=version,
    )
    dtype = _record_dtype(n_layers, n_classes)
    body = costs_end + 8
    expected = body + count * dtype.itemsize
    if len(blob) != expected:
        raise TraceError(
            f"record section is {len(blob) - body} bytes, expected "
            f"{count} records x {dtype.itemsize} bytes"
        )
    table = np.frombuffer(blob, dtype=dtype, count=count, offset=body)
    return TraceDataset(
        header=header,
        ids=table["id"].copy(),
        labels=table["label"].copy(),
        logits=table["logits"].copy(),
    )
