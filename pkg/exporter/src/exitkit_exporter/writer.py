"""Standalone writer for the exitkit trace formats.

Implemented against the public file layouts, without importing the
analysis library. NDJSON: a header object line followed by one record
object per line, logit literals rendered so they parse back to the
exact binary32 values. Binary: magic "EETR", u32 version, u32 n_layers,
u32 n_classes, n_layers little-endian f64 costs, u64 record count, then
packed records of u64 id, u32 label, and n_layers*n_classes f32 logits.

A small JSON sidecar (<output>.meta.json) records where the cost table
came from, since the trace header itself has no field for that.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"EETR"
FORMAT_VERSION = 1
FORMATS = ("ndjson", "binary")


def binary_bytes(
    labels: np.ndarray, logits: np.ndarray, costs: tuple[float, ...]
) -> bytes:
    n, n_layers, n_classes = logits.shape
    head = MAGIC + struct.pack("<III", FORMAT_VERSION, n_layers, n_classes)
    head += np.asarray(costs, dtype="<f8").tobytes()
    head += struct.pack("<Q", n)
    table = np.empty(
        n,
        dtype=np.dtype(
            [
                ("id", "<u8"),
                ("label", "<u4"),
                ("logits", "<f4", (n_layers, n_classes)),
            ]
        ),
    )
    table["id"] = np.arange(n, dtype=np.uint64)
    table["label"] = labels
    table["logits"] = logits
    return head + table.tobytes()


def ndjson_text(
    labels: np.ndarray, logits: np.ndarray, costs: tuple[float, ...]
) -> str:
    n, n_layers, n_classes = logits.shape
    lines = [
        json.dumps(
            {
                "version": FORMAT_VERSION,
                "n_layers": n_layers,
                "n_classes": n_classes,
                "layer_costs": [float(c) for c in costs],
            },
            separators=(",", ":"),
        )
    ]
    for i in range(n):
        # float() of a float32 is exact, and json renders the shortest
        # decimal that round-trips through float64, so a reader casting
        # back to float32 recovers the recorded value bit for bit.
        rows = [[float(v) for v in row] for row in logits[i]]
        lines.append(
            json.dumps(
                {"id": i, "label": int(labels[i]), "logits": rows},
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + "\n"


def write_trace(
    path: str,
    fmt: str,
    labels: np.ndarray,
    logits: np.ndarray,
    costs: tuple[float, ...],
) -> None:
    """Single append-order write; record ids are the dataset positions."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    if logits.dtype != np.float32 or logits.ndim != 3:
        raise ValueError("logits must be a [n, layers, classes] float32 array")
    if fmt == "binary":
        blob = binary_bytes(labels, logits, costs)
    else:
        blob = ndjson_text(labels, logits, costs).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as handle:
        handle.write(blob)
    os.replace(tmp, path)


def write_metadata(path: str, payload: dict) -> str:
    meta_path = path + ".meta.json"
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    tmp = meta_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, meta_path)
    return meta_path
