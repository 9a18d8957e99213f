"""Records per-exit-head logit traces from multi-exit torch classifiers.

The exporter runs a classifier with several exit heads over a labeled
dataset and writes one trace record per sample: the raw pre-softmax
logits of every head, the true label, and a cumulative per-layer cost
table in the header. The output is the exitkit trace format (NDJSON or
binary), produced here independently so this package never imports the
analysis library; the two meet only at the file boundary.
"""

from exitkit_exporter.export import ExportError, ExportJob, ExportResult, export
from exitkit_exporter.model import (
    MultiExitClassifier,
    load_checkpoint,
    new_model,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportJob",
    "ExportResult",
    "MultiExitClassifier",
    "export",
    "load_checkpoint",
    "new_model",
    "save_checkpoint",
    "__version__",
]
