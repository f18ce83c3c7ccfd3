"""Command-line entry point: ``incepkit <command> ...``.

Exit codes: 0 success, 1 violation or failed check, 2 bad input,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .errors import ConfigError, GraphError, NumericalError, ShapeError
from .graph import (
    count_flops,
    count_params,
    depth,
    execute,
    export_dot,
    infer_shapes,
    load_graph,
    param_manifest,
    save_graph,
    validate,
)
from .graph import gradcheck
from .tensor import read_tbin
from .train import (
    DataConfig,
    TrainConfig,
    init_weights,
    load_weights,
    save_checkpoint,
    synthetic_dataset,
    train,
)
from .train.checkpoint import ema_manifest_for
from .zoo import ArchConfig, assemble, canonical_variant, desk_config

EXIT_OK, EXIT_VIOLATION, EXIT_BAD_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("incepkit")


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _thread_limit():
    value = os.environ.get("INCEPKIT_THREADS", "0")
    try:
        limit = int(value)
    except ValueError:
        raise CommandError(f"INCEPKIT_THREADS must be an integer, got {value!r}", EXIT_BAD_INPUT) from None
    if limit <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def _fmt_shape(shape):
    return "x".join(str(d) for d in shape[1:])


def _load_graph(path):
    try:
        return load_graph(path)
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}", EXIT_BAD_INPUT) from exc
    except ValueError as exc:  # json errors and GraphError
        raise CommandError(f"malformed graph {path}: {exc}", EXIT_BAD_INPUT) from exc


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CommandError(f"cannot read {what} {path}: {exc}", EXIT_BAD_INPUT) from exc
    except ValueError as exc:
        raise CommandError(f"malformed {what} {path}: {exc}", EXIT_BAD_INPUT) from exc


def _ruleset(graph):
    return "inception_resnet" if graph.find("ResidualAdd") else "generic"


def summary_line(graph, shapes=None):
    shapes = infer_shapes(graph) if shapes is None else shapes
    features = graph.find("GlobalAvgPool")
    feat = shapes[features[0].inputs[0]] if features else shapes[graph.output_id]
    return (f"params={count_params(graph, shapes).total} macs={count_flops(graph, shapes).total} "
            f"depth={depth(graph)} features={_fmt_shape(feat)} nodes={len(graph.nodes)}")


# build ---------------------------------------------------------------------

def cmd_build(args):
    try:
        doc = _read_json(args.config, "config") if args.config else {}
        config = ArchConfig.from_json(doc) if doc else ArchConfig(canonical_variant(args.arch))
        overrides = {}
        if args.arch and doc:
            overrides["variant"] = canonical_variant(args.arch)
        if args.width is not None:
            overrides["width_multiplier"] = args.width
        if args.classes is not None:
            overrides["num_classes"] = args.classes
        if args.input_size is not None:
            overrides["input_size"] = (args.input_size, args.input_size)
        if args.residual_scale is not None:
            overrides["residual_scale"] = args.residual_scale
        config = config.with_(**overrides)
        graph = assemble(config)
    except (ConfigError, ShapeError) as exc:
        raise CommandError(f"invalid configuration: {exc}", EXIT_BAD_INPUT) from exc
    shapes = infer_shapes(graph)
    violations = validate(graph, _ruleset(graph))
    try:
        if args.out:
            save_graph(graph, args.out)
        if args.dot:
            Path(args.dot).write_text(export_dot(graph, shapes, name=config.variant))
    except OSError as exc:
        raise CommandError(f"write failed: {exc}", EXIT_VIOLATION) from exc
    print(f"{config.variant}: {summary_line(graph, shapes)}")
    for v in violations:
        print(f"violation {v}")
    return EXIT_VIOLATION if violations else EXIT_OK


# check ---------------------------------------------------------------------

def cmd_check(args):
    graph = _load_graph(args.graph)
    ruleset = _ruleset(graph) if args.ruleset == "auto" else args.ruleset
    violations = validate(graph, ruleset)
    for v in violations:
        print(f"{v.rule} {v.node_id}: {v.message}")
    print(f"{len(violations)} violation(s) [{ruleset}]")
    return EXIT_VIOLATION if violations else EXIT_OK


# summarize -----------------------------------------------------------------

COLUMNS = ("node", "kind", "output", "params", "macs")


def summary_table(graph, per_node=False):
    shapes = infer_shapes(graph)
    params = count_params(graph, shapes)
    flops = count_flops(graph, shapes)
    lines = []
    if per_node:
        rows = [(i, graph.node(i).kind, _fmt_shape(shapes[i]), str(params.per_node.get(i, 0)),
                 str(flops.per_node.get(i, 0))) for i in graph.order]
        widths = [max(len(c), *(len(r[k]) for r in rows)) for k, c in enumerate(COLUMNS)]
        lines.append("  ".join(c.ljust(w) for c, w in zip(COLUMNS, widths)).rstrip())
        lines.extend("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)
    lines.append(f"total params={params.total} non_trainable={params.non_trainable} "
                 f"macs={flops.total} elementwise={flops.elementwise}")
    return "\n".join(lines)


def cmd_summarize(args):
    graph = _load_graph(args.graph)
    try:
        print(summary_table(graph, args.per_node))
    except ShapeError as exc:
        raise CommandError(f"shape inference failed: {exc}", EXIT_BAD_INPUT) from exc
    return EXIT_OK


# infer ---------------------------------------------------------------------

def cmd_infer(args):
    graph = _load_graph(args.graph)
    manifest = ema_manifest_for(args.weights) if args.ema else args.weights
    try:
        weights = load_weights(manifest)
        x = read_tbin(args.input)
    except OSError as exc:
        raise CommandError(f"cannot read inputs: {exc}", EXIT_BAD_INPUT) from exc
    except (ValueError, KeyError) as exc:
        raise CommandError(f"bad input: {exc}", EXIT_BAD_INPUT) from exc
    dtype = next(iter(weights.values())).dtype
    try:
        probs, _ = execute(graph, weights, x.astype(dtype), "infer")
    except (ShapeError, GraphError) as exc:
        raise CommandError(f"cannot run graph: {exc}", EXIT_BAD_INPUT) from exc
    if not np.all(np.isfinite(probs)):
        raise CommandError("non-finite output", EXIT_NUMERIC)
    k = min(args.top, probs.shape[1])
    for i, row in enumerate(probs):
        ranked = np.argsort(-row, kind="stable")[:k]
        print(f"sample {i}: " + " ".join(f"{c}:{row[c]:.6f}" for c in ranked))
    return EXIT_OK


# train ---------------------------------------------------------------------

def load_run_config(doc: dict):
    """Split a run document into (ArchConfig, TrainConfig, DataConfig).

    ``arch`` fields default to the desk-scale preset; any other top-level
    key besides ``data`` is a TrainConfig field.
    """
    doc = dict(doc)
    arch_doc = doc.pop("arch", {})
    data_doc = doc.pop("data", {})
    variant = canonical_variant(arch_doc.get("variant", "inception_resnet_v2"))
    arch = desk_config(variant, **{k: v for k, v in arch_doc.items() if k != "variant"})
    arch = ArchConfig.from_json(arch.to_json())
    return arch, TrainConfig.from_json(doc), DataConfig.from_json(data_doc)


def run_training(arch, config, data, out_dir, checkpoint=True):
    """Train one model and write ``report.csv``, ``report.json`` and checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph = assemble(arch)
    dataset = synthetic_dataset(arch.num_classes, data.samples_per_class, arch.input_size, data.seed)
    weights = init_weights(graph, config.seed, np.dtype(config.dtype))
    result = train(graph, weights, dataset, config)
    report = result.report
    (out_dir / "report.csv").write_text(report.to_csv())
    sidecar = {
        "arch": arch.to_json(), "train": config.to_json(), "data": data.to_json(),
        "final": report.final, "dead_network": report.dead_network,
        "dead_checks": report.dead_checks, "metadata": report.metadata,
    }
    (out_dir / "report.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    if checkpoint:
        save_graph(result.graph, out_dir / "graph.json")
        roles = {e.name: e.role for e in param_manifest(result.graph)}
        save_checkpoint(out_dir / "checkpoint", result.weights, result.ema_weights, roles)
    return result


def cmd_train(args):
    doc = _read_json(args.config, "train config") if args.config else {}
    try:
        arch, config, data = load_run_config(doc)
    except (ConfigError, TypeError) as exc:
        raise CommandError(f"invalid train config: {exc}", EXIT_BAD_INPUT) from exc
    try:
        result = run_training(arch, config, data, args.out)
    except NumericalError as exc:
        raise CommandError(f"training diverged: {exc}", EXIT_NUMERIC) from exc
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_BAD_INPUT) from exc
    final = result.report.final
    print(f"steps={final['steps']} loss={result.report.rows[-1]['loss']:.4f} "
          f"top1_error={final['top1_error']:.4f} top{final['k']}_error={final['topk_error']:.4f} "
          f"ema_top1_error={final['ema_top1_error']:.4f} dead_network={result.report.dead_network}")
    return EXIT_OK


# experiment ----------------------------------------------------------------

def residual_vs_plain(out_dir, steps=300, threshold=0.2, width=0.25, seed=0, samples_per_class=40, window=10):
    """Train width-matched plain and residualized Inception-v4 on the same data and seeds."""
    out_dir = Path(out_dir)
    data = DataConfig(samples_per_class, seed)
    config = TrainConfig(max_steps=steps, seed=seed, ema_decay=0.99)
    base = desk_config("inception_v4", width_multiplier=width)
    summary = {"threshold": threshold, "window": window, "steps": steps, "width": width, "runs": {}}
    for name, arch in (("plain", base), ("residual", base.with_(residualize=True))):
        result = run_training(arch, config, data, out_dir / name, checkpoint=False)
        (out_dir / f"{name}.csv").write_text(result.report.to_csv())
        summary["runs"][name] = {
            "steps_to_threshold": result.report.steps_to_threshold(threshold, window),
            "final_loss": result.report.rows[-1]["loss"],
            "final_top1_error": result.report.final["top1_error"],
        }
    a = summary["runs"]["residual"]["steps_to_threshold"]
    b = summary["runs"]["plain"]["steps_to_threshold"]
    if a is not None and (b is None or a < b):
        summary["faster"] = "residual"
    elif b is not None and (a is None or b < a):
        summary["faster"] = "plain"
    else:
        summary["faster"] = "tie" if a is not None else "neither reached threshold"
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


SWEEP_SCALES = (1.0, 0.3, 0.1)
SWEEP_WIDTHS = (0.125, 0.25)
SWEEP_COLUMNS = ("width", "residual_scale", "steps", "final_loss", "final_top1_error", "dead_network")


def scaling_sweep(out_dir, steps=100, seed=0, samples_per_class=40, scales=SWEEP_SCALES, widths=SWEEP_WIDTHS):
    """Inception-ResNet-v2 at every (width, residual scale) pair; records dead-network flags."""
    out_dir = Path(out_dir)
    data = DataConfig(samples_per_class, seed)
    rows = []
    for width in widths:
        for scale in scales:
            arch = desk_config("inception_resnet_v2", width_multiplier=width)
            config = TrainConfig(max_steps=steps, seed=seed, residual_scale=scale, ema_decay=0.99)
            run_dir = out_dir / f"w{width}_s{scale}"
            try:
                result = run_training(arch, config, data, run_dir, checkpoint=False)
                row = (width, scale, steps, result.report.rows[-1]["loss"],
                       result.report.final["top1_error"], result.report.dead_network)
            except NumericalError as exc:
                log.warning("width %s scale %s diverged: %s", width, scale, exc)
                row = (width, scale, steps, float("nan"), float("nan"), True)
            rows.append(dict(zip(SWEEP_COLUMNS, row)))
    lines = [",".join(SWEEP_COLUMNS)]
    lines += [",".join(str(r[c]) for c in SWEEP_COLUMNS) for r in rows]
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    return rows


def cmd_experiment(args):
    if args.name == "residual-vs-plain":
        summary = residual_vs_plain(args.out, steps=args.steps or 300, threshold=args.threshold,
                                    width=args.width or 0.25, seed=args.seed)
        for name, run in summary["runs"].items():
            print(f"{name}: steps_to_threshold={run['steps_to_threshold']} final_loss={run['final_loss']:.4f}")
        print(f"faster: {summary['faster']}")
    else:
        widths = (args.width,) if args.width else SWEEP_WIDTHS
        rows = scaling_sweep(args.out, steps=args.steps or 100, seed=args.seed, widths=widths)
        print(",".join(SWEEP_COLUMNS))
        for r in rows:
            print(",".join(str(r[c]) for c in SWEEP_COLUMNS))
    return EXIT_OK


# gradcheck -----------------------------------------------------------------

def cmd_gradcheck(args):
    if args.all_ops:
        results = gradcheck.check_all_ops(instances=args.instances, seed=args.seed)
    else:
        graph = _load_graph(args.graph)
        try:
            weights = init_weights(graph, args.seed, np.float64)
            shape = (args.batch, *graph.input_shape[1:])
        except ShapeError as exc:
            raise CommandError(str(exc), EXIT_BAD_INPUT) from exc
        x = np.random.default_rng(args.seed).standard_normal(shape)
        results = gradcheck.check_graph(graph, weights, x, seed=args.seed, samples=args.samples)
    failed = [r for r in results if not r.passed(args.tolerance)]
    for kind, r in gradcheck.worst_by_kind(results).items():
        print(f"{kind:<16} worst_rel_err={r.error:.3e} at {r.label} {list(r.worst_index)}")
    for r in failed:
        print(f"FAIL {r.kind} {r.label} coordinate={list(r.worst_index)} rel_err={r.error:.3e} > {args.tolerance:g}")
    return EXIT_VIOLATION if failed else EXIT_OK


# parser --------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="incepkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="assemble an architecture and write its graph")
    p.add_argument("--arch", default="v4", help="v4 | ir1 | ir2")
    p.add_argument("--config", help="ArchConfig JSON file")
    p.add_argument("--width", type=float)
    p.add_argument("--classes", type=int)
    p.add_argument("--input-size", type=int)
    p.add_argument("--residual-scale", type=float)
    p.add_argument("--out", help="graph JSON output path")
    p.add_argument("--dot", help="DOT output path")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check", help="validate a graph file")
    p.add_argument("graph")
    p.add_argument("--ruleset", choices=("auto", "generic", "inception_resnet"), default="auto")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("summarize", help="parameter and MAC totals of a graph")
    p.add_argument("graph")
    p.add_argument("--per-node", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("infer", help="run a graph on a TBIN input")
    p.add_argument("graph")
    p.add_argument("--weights", required=True, help="checkpoint manifest.json")
    p.add_argument("--input", required=True, help="rank-4 NHWC TBIN tensor")
    p.add_argument("--ema", action="store_true", help="use the EMA shadow weights")
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train", help="train on the synthetic task")
    p.add_argument("--config", help="run JSON: TrainConfig fields plus optional 'arch' and 'data'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="desk-scale experiments")
    p.add_argument("name", choices=("residual-vs-plain", "scaling-sweep"))
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--threshold", type=float, default=0.2, help="train top-1 error threshold")
    p.add_argument("--width", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks (float64)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--graph")
    group.add_argument("--all-ops", action="store_true")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--instances", type=int, default=20, help="random cases per op kind")
    p.add_argument("--samples", type=int, default=8, help="coordinates per tensor (graph mode)")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
