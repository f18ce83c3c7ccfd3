"""Structural checks. Violations are returned, never raised."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import IncepkitError
from .shapes import node_output_shape
from .spec import ARITY, KINDS, GraphSpec

RULESETS = ("generic", "inception_resnet")


@dataclass(frozen=True)
class Violation:
    rule: str
    node_id: str | None
    message: str

    def __str__(self):
        where = f"[{self.node_id}] " if self.node_id else ""
        return f"{self.rule}: {where}{self.message}"


def _generic(graph: GraphSpec) -> list:
    out = []
    seen = set()
    for n in graph.nodes:
        if n.id in seen:
            out.append(Violation("unique-ids", n.id, "duplicate node id"))
        seen.add(n.id)
        if n.kind not in KINDS:
            out.append(Violation("kind", n.id, f"unknown node kind {n.kind!r}"))
            continue
        arity = ARITY[n.kind]
        if arity is None and len(n.inputs) < 2:
            out.append(Violation("arity", n.id, f"{n.kind} needs at least 2 inputs, has {len(n.inputs)}"))
        elif arity is not None and len(n.inputs) != arity:
            out.append(Violation("arity", n.id, f"{n.kind} needs {arity} inputs, has {len(n.inputs)}"))
    for n in graph.nodes:
        for src in n.inputs:
            if src not in seen:
                out.append(Violation("dangling-input", n.id, f"input {src!r} does not exist"))
    n_inputs = sum(n.kind == "Input" for n in graph.nodes)
    if n_inputs != 1:
        out.append(Violation("single-input", None, f"expected exactly one Input node, found {n_inputs}"))
    if out:
        return out
    try:
        graph.order
    except IncepkitError as exc:
        return [Violation("acyclic", None, str(exc))]
    if graph.output_id not in graph.by_id:
        out.append(Violation("output", None, f"output id {graph.output_id!r} does not exist"))
    elif graph.input_id not in graph.ancestors(graph.output_id):
        out.append(Violation("output", graph.output_id, "output is not reachable from the Input node"))
    return out


def _lenient_shapes(graph: GraphSpec, out: list):
    """Shape inference that lets a mismatched ResidualAdd through (as its shortcut
    shape) so rule checks can continue; any other failure is a ``shape`` violation."""
    shapes = {}
    for node_id in graph.order:
        node = graph.node(node_id)
        if node.kind == "Input":
            shapes[node_id] = tuple(graph.input_shape)
            continue
        in_shapes = [shapes[s] for s in node.inputs]
        if node.kind == "ResidualAdd" and len(in_shapes) == 2 and in_shapes[0] != in_shapes[1]:
            shapes[node_id] = in_shapes[0]
            continue
        try:
            shapes[node_id] = node_output_shape(node, in_shapes)
        except IncepkitError as exc:
            out.append(Violation("shape", node_id, f"shape inference failed: {exc}"))
            return None
    return shapes


def _inception_resnet(graph: GraphSpec) -> list:
    out = []
    shapes = _lenient_shapes(graph, out)
    for n in graph.nodes:
        if n.kind == "BatchNorm" and graph.node(n.inputs[0]).kind == "ResidualAdd":
            out.append(Violation("no-bn-on-sum", n.id, f"BatchNorm consumes the residual sum {n.inputs[0]!r}"))
        if n.kind != "ResidualAdd":
            continue
        shortcut, residual = n.inputs
        producer = graph.node(residual)
        if producer.kind != "Conv" or producer.params.get("activation", "none") != "none":
            out.append(Violation(
                "linear-expansion", n.id,
                f"residual input {residual!r} must be a Conv without activation, found {producer.kind}"
                + (f"(activation={producer.params.get('activation')})" if producer.kind == "Conv" else ""),
            ))
        if shapes is not None and shapes[shortcut][-1] != shapes[residual][-1]:
            out.append(Violation(
                "channel-match", n.id,
                f"shortcut {shortcut!r} has {shapes[shortcut][-1]} channels, residual {residual!r} has {shapes[residual][-1]}",
            ))
    return out


def validate(graph: GraphSpec, ruleset: str = "generic") -> list:
    if ruleset not in RULESETS:
        raise ValueError(f"unknown ruleset {ruleset!r}; choose from {RULESETS}")
    out = _generic(graph)
    if out or ruleset == "generic":
        return out
    return _inception_resnet(graph)
