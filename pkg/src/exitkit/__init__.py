"""Early-exit policy evaluation over recorded per-layer logit traces.

The package turns recorded exit-head logits of a multi-exit classifier
into calibration diagnostics and accuracy/compute trade-off reports:
reliability diagrams and expected calibration error, per-layer temperature
fitting, exit policies (confidence thresholding, diagram-backed accuracy
thresholding with or without neighbor smoothing, and an oracle), plus
threshold sweeps and Pareto-front extraction. A deterministic synthetic
generator provides ground truth for testing, and the exitkit CLI ties the
pieces into a reproducible pipeline.
"""

from exitkit.calib import (
    ReliabilityDiagram,
    SmoothingSpec,
    TemperatureTable,
    bin_index,
    build_diagram,
    confidence,
    ece,
    fit_all_temperatures,
    fit_temperature,
    smooth_correctness,
    softmax,
)
from exitkit.eval import (
    EvaluationReport,
    ParetoPoint,
    evaluate,
    pareto,
    sweep,
    sweep_points,
)
from exitkit.policy import (
    ExitDecision,
    ExitPolicy,
    decide_exit,
    lookup_accuracy,
)
from exitkit.synth import GeneratorConfig, generate
from exitkit.trace import (
    SplitSpec,
    TraceDataset,
    TraceError,
    TraceHeader,
    TraceRecord,
    read_trace,
    split,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "EvaluationReport",
    "ExitDecision",
    "ExitPolicy",
    "GeneratorConfig",
    "ParetoPoint",
    "ReliabilityDiagram",
    "SmoothingSpec",
    "SplitSpec",
    "TemperatureTable",
    "TraceDataset",
    "TraceError",
    "TraceHeader",
    "TraceRecord",
    "bin_index",
    "build_diagram",
    "confidence",
    "decide_exit",
    "ece",
    "evaluate",
    "fit_all_temperatures",
    "fit_temperature",
    "generate",
    "lookup_accuracy",
    "pareto",
    "read_trace",
    "smooth_correctness",
    "softmax",
    "split",
    "sweep",
    "sweep_points",
    "write_trace",
    "__version__",
]
