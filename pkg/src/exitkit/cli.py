"""Command-line pipeline: generate, split, calibrate, fit temperatures,
report calibration error, evaluate, sweep, and convert trace files.

Exit codes: 0 on success, 1 on usage errors (bad flags or parameter
values), 2 on data or format errors (unreadable, malformed, or mutually
inconsistent files). All file outputs are written atomically. Every
source of randomness is an explicit seed flag, so each invocation is
reproducible from its argument list.
"""

from __future__ import annotations

import argparse
import json
import sys

from exitkit import calib, eval as evalmod, policy as policymod, synth, trace
from exitkit._files import atomic_write_text


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 by default, which is reserved for data
    # errors here; route usage problems to exit code 1 instead
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_policy_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--trace", required=True, help="test trace file")
    sub.add_argument(
        "--policy",
        choices=policymod.KINDS,
        help="exit strategy kind (may come from --config instead)",
    )
    sub.add_argument(
        "--measure",
        choices=calib.MEASURES,
        help="confidence measure (default max_softmax)",
    )
    sub.add_argument(
        "--diagrams", help="reliability diagram JSON (pcee/pcee_ws kinds)"
    )
    sub.add_argument("--temps", help="temperature table JSON")
    sub.add_argument(
        "--config",
        help="policy configuration JSON; explicit flags win over it",
    )
    sub.add_argument(
        "--format", choices=("json", "csv"), default="json",
        help="report format (default json)",
    )
    sub.add_argument("--out", help="output path (default: stdout)")
    sub.add_argument(
        "--threads", type=int, default=None,
        help="decision worker threads (default: hardware parallelism)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exitkit", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser(
        "gen", help="generate a synthetic trace file"
    )
    gen.add_argument("--out", required=True, help="output trace path")
    gen.add_argument("--n", type=int, help="number of samples")
    gen.add_argument("--layers", type=int, help="exit head count")
    gen.add_argument("--classes", type=int, help="class count")
    gen.add_argument("--seed", type=int, help="generator seed")
    gen.add_argument("--gamma", type=float, help="miscalibration exponent")
    gen.add_argument(
        "--skills", help="comma-separated per-layer skill levels"
    )
    gen.add_argument("--steepness", type=float, help="difficulty sharpness")
    gen.add_argument(
        "--costs", help="comma-separated cumulative per-layer costs"
    )
    gen.add_argument(
        "--eps", type=float, help="confidence clamp margin"
    )
    gen.add_argument(
        "--format", choices=trace.FORMATS,
        help="output format (default: by extension, binary unless .ndjson)",
    )
    gen.add_argument(
        "--config", help="generator configuration JSON; flags win over it"
    )

    sp = commands.add_parser(
        "split", help="deterministic validation/test partition"
    )
    sp.add_argument("--trace", required=True, help="input trace file")
    sp.add_argument(
        "--fraction", type=float, default=0.10,
        help="validation fraction in (0, 1), default 0.10",
    )
    sp.add_argument("--seed", type=int, default=0, help="shuffle seed")
    sp.add_argument("--out-val", required=True, help="validation output path")
    sp.add_argument("--out-test", required=True, help="test output path")

    cal = commands.add_parser(
        "calibrate", help="build reliability diagrams from a validation trace"
    )
    cal.add_argument("--trace", required=True, help="validation trace file")
    cal.add_argument(
        "--layer", default="all", help="'all' or a single layer index"
    )
    cal.add_argument(
        "--bins", type=int, default=50, help="bin count (default 50)"
    )
    cal.add_argument(
        "--measure", choices=calib.MEASURES, default="max_softmax",
        help="confidence measure",
    )
    cal.add_argument(
        "--smooth-H", type=int, default=None, dest="smooth_h",
        help="neighbor count for correctness smoothing (default: off)",
    )
    cal.add_argument("--temps", help="temperature table JSON to apply")
    cal.add_argument("--out", required=True, help="diagram JSON output path")

    ft = commands.add_parser(
        "fit-temp", help="fit one temperature per layer on a validation trace"
    )
    ft.add_argument("--trace", required=True, help="validation trace file")
    ft.add_argument("--out", required=True, help="temperature JSON output")

    ec = commands.add_parser(
        "ece", help="print per-layer expected calibration error"
    )
    ec.add_argument("--diagrams", required=True, help="diagram JSON file")

    ev = commands.add_parser("eval", help="evaluate one policy at one delta")
    _add_policy_flags(ev)
    ev.add_argument("--delta", type=float, help="exit threshold in [0, 1]")

    sw = commands.add_parser(
        "sweep", help="evaluate one policy over a delta grid"
    )
    _add_policy_flags(sw)
    sw.add_argument(
        "--deltas", help="comma-separated strictly increasing thresholds"
    )
    sw.add_argument(
        "--pareto-out", dest="pareto_out",
        help="also write the cost/error Pareto front CSV here",
    )

    cv = commands.add_parser(
        "convert", help="convert a trace between ndjson and binary"
    )
    cv.add_argument("--in", dest="in_path", required=True, help="input trace")
    cv.add_argument("--out", required=True, help="output trace path")
    cv.add_argument(
        "--to", choices=trace.FORMATS, required=True, help="target format"
    )
    return parser


def _parse_float_list(text: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise _UsageError(f"{flag}: expected comma-separated numbers") from exc
    if not values:
        raise _UsageError(f"{flag}: expected at least one number")
    return values


def _load_json_file(path: str) -> object:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise trace.TraceError(f"{path}: invalid JSON: {exc}") from exc


def _load_config(path: str | None, allowed: tuple[str, ...]) -> dict:
    if path is None:
        return {}
    data = _load_json_file(path)
    if not isinstance(data, dict):
        raise trace.TraceError(f"{path}: expected a JSON object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise trace.TraceError(
            f"{path}: unknown configuration keys {unknown}"
        )
    return data


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _json_line(obj: object) -> str:
    return json.dumps(obj, separators=(",", ":")) + "\n"


_GEN_CONFIG_KEYS = (
    "n_samples",
    "n_layers",
    "n_classes",
    "seed",
    "layer_skills",
    "steepness",
    "gamma",
    "layer_costs",
    "confidence_floor_eps",
)


def _cmd_gen(args: argparse.Namespace) -> int:
    config = _load_config(args.config, _GEN_CONFIG_KEYS)

    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        return config.get(key, fallback)

    n_samples = pick(args.n, "n_samples", None)
    if n_samples is None:
        raise _UsageError("--n is required (or n_samples in --config)")
    skills = (
        _parse_float_list(args.skills, "--skills")
        if args.skills is not None
        else config.get("layer_skills")
    )
    costs = (
        _parse_float_list(args.costs, "--costs")
        if args.costs is not None
        else config.get("layer_costs")
    )
    gen_config = synth.GeneratorConfig(
        n_samples=int(n_samples),
        n_layers=int(pick(args.layers, "n_layers", 4)),
        n_classes=int(pick(args.classes, "n_classes", 10)),
        seed=int(pick(args.seed, "seed", 0)),
        layer_skills=tuple(skills) if skills is not None else None,
        steepness=float(pick(args.steepness, "steepness", 8.0)),
        gamma=float(pick(args.gamma, "gamma", 1.0)),
        layer_costs=tuple(costs) if costs is not None else None,
        confidence_floor_eps=float(
            pick(args.eps, "confidence_floor_eps", 1e-3)
        ),
    )
    fmt = args.format
    if fmt is None:
        lower = args.out.lower()
        fmt = (
            "ndjson"
            if lower.endswith((".ndjson", ".jsonl", ".json"))
            else "binary"
        )
    trace.write_trace(synth.generate(gen_config), args.out, fmt)
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    if not 0.0 < args.fraction < 1.0:
        raise _UsageError("--fraction must lie strictly in (0, 1)")
    fmt = trace.detect_format(args.trace)
    dataset = trace.read_trace(args.trace, fmt)
    val, test = trace.split(
        dataset,
        trace.SplitSpec(validation_fraction=args.fraction, seed=args.seed),
    )
    trace.write_trace(val, args.out_val, fmt)
    trace.write_trace(test, args.out_test, fmt)
    return 0


def _load_temperatures(
    path: str | None, n_layers: int
) -> calib.TemperatureTable | None:
    if path is None:
        return None
    table = calib.read_temperatures(path)
    if len(table.temperatures) != n_layers:
        raise trace.TraceError(
            f"{path}: temperature table covers "
            f"{len(table.temperatures)} layers, trace has {n_layers}"
        )
    return table


def _cmd_calibrate(args: argparse.Namespace) -> int:
    dataset = trace.read_trace(args.trace)
    if args.bins < 1:
        raise _UsageError("--bins must be at least 1")
    if args.layer == "all":
        layers = list(range(dataset.n_layers))
    else:
        try:
            layers = [int(args.layer)]
        except ValueError as exc:
            raise _UsageError(
                "--layer must be 'all' or a layer index"
            ) from exc
        if not 0 <= layers[0] < dataset.n_layers:
            raise _UsageError(
                f"--layer must lie in [0, {dataset.n_layers})"
            )
    smoothing = None
    if args.smooth_h is not None:
        if args.smooth_h < 1:
            raise _UsageError("--smooth-H must be at least 1")
        if args.smooth_h > dataset.n_samples:
            raise _UsageError(
                "--smooth-H cannot exceed the validation size"
            )
        smoothing = calib.SmoothingSpec(neighbors=args.smooth_h)
    temps = _load_temperatures(args.temps, dataset.n_layers)
    diagrams = [
        calib.build_diagram(
            dataset,
            layer,
            n_bins=args.bins,
            measure=args.measure,
            temperature=(
                temps.temperatures[layer] if temps is not None else 1.0
            ),
            smoothing=smoothing,
        )
        for layer in layers
    ]
    calib.write_diagrams(args.out, diagrams)
    return 0


def _cmd_fit_temp(args: argparse.Namespace) -> int:
    dataset = trace.read_trace(args.trace)
    calib.write_temperatures(args.out, calib.fit_all_temperatures(dataset))
    return 0


def _cmd_ece(args: argparse.Namespace) -> int:
    diagrams = calib.read_diagrams(args.diagrams)
    for diagram in diagrams:
        if diagram.smoothing_h is not None:
            raise trace.TraceError(
                f"layer {diagram.layer}: calibration error is undefined "
                f"for smoothed diagrams"
            )
    for diagram in sorted(diagrams, key=lambda d: d.layer):
        print(f"layer {diagram.layer} ece {calib.ece(diagram):.6f}")
    return 0


_POLICY_CONFIG_KEYS = (
    "kind",
    "delta",
    "measure",
    "n_bins",
    "H",
    "temperature_file",
)


def _build_policy(
    args: argparse.Namespace, dataset: trace.TraceDataset
) -> policymod.ExitPolicy:
    config = _load_config(args.config, _POLICY_CONFIG_KEYS)
    kind = args.policy if args.policy is not None else config.get("kind")
    if kind is None:
        raise _UsageError("--policy is required (or kind in --config)")
    if kind not in policymod.KINDS:
        raise trace.TraceError(f"unknown policy kind {kind!r}")
    delta = getattr(args, "delta", None)
    if delta is None:
        delta = config.get("delta", 0.0)
    if not isinstance(delta, (int, float)) or isinstance(delta, bool):
        raise trace.TraceError("policy delta must be a number")
    if not 0.0 <= float(delta) <= 1.0:
        raise _UsageError("--delta must lie in [0, 1]")
    measure = (
        args.measure
        if args.measure is not None
        else config.get("measure", "max_softmax")
    )
    if measure not in calib.MEASURES:
        raise trace.TraceError(f"unknown confidence measure {measure!r}")
    temps_path = (
        args.temps if args.temps is not None else config.get("temperature_file")
    )
    temperatures = _load_temperatures(temps_path, dataset.n_layers)

    diagrams = None
    if kind in ("pcee", "pcee_ws"):
        if args.diagrams is None:
            raise _UsageError(f"--diagrams is required for kind {kind!r}")
        loaded = calib.read_diagrams(args.diagrams)
        by_layer = {}
        for diagram in loaded:
            if diagram.layer in by_layer:
                raise trace.TraceError(
                    f"{args.diagrams}: duplicate diagram for layer "
                    f"{diagram.layer}"
                )
            by_layer[diagram.layer] = diagram
        needed = range(dataset.n_layers - 1)
        missing = [i for i in needed if i not in by_layer]
        if missing:
            raise trace.TraceError(
                f"{args.diagrams}: missing diagrams for layers {missing}"
            )
        chosen = [by_layer[i] for i in needed]
        n_bins = config.get("n_bins")
        if n_bins is not None and any(d.n_bins != n_bins for d in chosen):
            raise trace.TraceError(
                f"{args.diagrams}: diagrams do not use the configured "
                f"{n_bins} bins"
            )
        smooth_h = config.get("H")
        for diagram in chosen:
            if kind == "pcee" and diagram.smoothing_h is not None:
                raise trace.TraceError(
                    f"{args.diagrams}: layer {diagram.layer} diagram is "
                    f"smoothed; kind 'pcee' needs plain diagrams"
                )
            if kind == "pcee_ws":
                if diagram.smoothing_h is None:
                    raise trace.TraceError(
                        f"{args.diagrams}: layer {diagram.layer} diagram "
                        f"is unsmoothed; kind 'pcee_ws' needs smoothed ones"
                    )
                if smooth_h is not None and diagram.smoothing_h != smooth_h:
                    raise trace.TraceError(
                        f"{args.diagrams}: layer {diagram.layer} was "
                        f"smoothed over {diagram.smoothing_h} neighbors, "
                        f"configuration says {smooth_h}"
                    )
        diagrams = tuple(chosen)
    return policymod.ExitPolicy(
        kind=kind,
        delta=float(delta),
        measure=measure,
        diagrams=diagrams,
        temperatures=temperatures,
    )


def _check_threads(args: argparse.Namespace) -> int | None:
    if args.threads is not None and args.threads < 1:
        raise _UsageError("--threads must be at least 1")
    return args.threads


def _cmd_eval(args: argparse.Namespace) -> int:
    dataset = trace.read_trace(args.trace)
    built = _build_policy(args, dataset)
    report = evalmod.evaluate(dataset, built, threads=_check_threads(args))
    if args.format == "json":
        _emit(_json_line(evalmod.report_to_obj(report)), args.out)
    else:
        _emit(evalmod.reports_to_csv_text([report]), args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.deltas is None:
        raise _UsageError("--deltas is required")
    deltas = _parse_float_list(args.deltas, "--deltas")
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise _UsageError("--deltas must be strictly increasing")
    if not all(0.0 <= d <= 1.0 for d in deltas):
        raise _UsageError("--deltas values must lie in [0, 1]")
    dataset = trace.read_trace(args.trace)
    built = _build_policy(args, dataset)
    reports = evalmod.sweep(
        dataset, built, list(deltas), threads=_check_threads(args)
    )
    if args.format == "json":
        _emit(
            _json_line([evalmod.report_to_obj(r) for r in reports]), args.out
        )
    else:
        _emit(evalmod.reports_to_csv_text(reports), args.out)
    if args.pareto_out is not None:
        front = evalmod.pareto(evalmod.sweep_points(reports))
        atomic_write_text(args.pareto_out, evalmod.pareto_to_csv_text(front))
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    dataset = trace.read_trace(args.in_path)
    trace.write_trace(dataset, args.out, args.to)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "split": _cmd_split,
    "calibrate": _cmd_calibrate,
    "fit-temp": _cmd_fit_temp,
    "ece": _cmd_ece,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "convert": _cmd_convert,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse help exits 0; _Parser.error exits 1
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"exitkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"exitkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except trace.TraceError as exc:
        print(f"exitkit {args.command}: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"exitkit {args.command}: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
