"""Command line entry point: exitkit-export (or python -m exitkit_exporter.cli).

Flags map one to one onto ExportJob fields. Exit codes: 0 on success,
1 for usage errors, 2 when the job cannot be executed (bad checkpoint,
inconsistent declarations, non-finite model output, I/O failure).
"""

from __future__ import annotations

import argparse
import sys

from exitkit_exporter.data import DATASETS, SPLITS
from exitkit_exporter.export import ExportError, ExportJob, export
from exitkit_exporter.writer import FORMATS


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; keep 2 for data problems
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _costs(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad cost list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="exitkit-export",
        description="Run a multi-exit classifier over a dataset and record "
        "every exit head's logits as an exitkit trace file.",
    )
    parser.add_argument("--out", required=True, help="output trace path")
    parser.add_argument(
        "--checkpoint",
        help="model checkpoint; omitted: a fresh toy model is initialized",
    )
    parser.add_argument(
        "--save-checkpoint",
        help="also save the (possibly fresh) model checkpoint here",
    )
    parser.add_argument(
        "--dataset", default="synthetic", help=f"dataset name, one of {DATASETS}"
    )
    parser.add_argument(
        "--split", default="test", help=f"dataset split, one of {SPLITS}"
    )
    parser.add_argument("--samples", type=int, default=64, help="sample count")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu", help="torch device string")
    parser.add_argument(
        "--format",
        choices=FORMATS,
        help="output format (default: by extension, binary unless .ndjson)",
    )
    parser.add_argument(
        "--costs",
        type=_costs,
        help="comma-separated cumulative per-head costs; "
        "default: uniform 1..n, flagged in the metadata sidecar",
    )
    parser.add_argument("--input-dim", type=int, help="toy model feature width")
    parser.add_argument("--hidden-dim", type=int, help="toy model hidden width")
    parser.add_argument("--exits", type=int, help="toy model exit head count")
    parser.add_argument("--classes", type=int, help="class count")
    parser.add_argument("--model-seed", type=int, default=0)
    parser.add_argument("--data-seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.format
    if fmt is None:
        fmt = "ndjson" if args.out.endswith(".ndjson") else "binary"
    try:
        job = ExportJob(
            out_path=args.out,
            checkpoint=args.checkpoint,
            dataset=args.dataset,
            split=args.split,
            n_samples=args.samples,
            batch_size=args.batch_size,
            device=args.device,
            fmt=fmt,
            layer_costs=args.costs,
            input_dim=args.input_dim,
            hidden_dim=args.hidden_dim,
            n_exits=args.exits,
            n_classes=args.classes,
            model_seed=args.model_seed,
            data_seed=args.data_seed,
            save_checkpoint_path=args.save_checkpoint,
        )
        result = export(job)
    except (ExportError, OSError) as exc:
        print(f"exitkit-export: error: {exc}", file=sys.stderr)
        return 2
    for head, acc in enumerate(result.per_head_accuracy):
        print(f"head {head} accuracy {acc:.6f}")
    print(
        f"wrote {result.n_samples} records "
        f"({result.n_layers} heads, {result.n_classes} classes, "
        f"costs {result.cost_source}) to {result.out_path}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
