"""Parameter and multiply-accumulate counting.

MACs are per image. Pooling, BN, ReLU, sums and softmax contribute 0 MACs and are
reported as elementwise operations instead.
"""
from __future__ import annotations

from math import prod
from typing import NamedTuple

from .shapes import infer_shapes, pool_geometry
from .spec import GraphSpec


class ParamEntry(NamedTuple):
    name: str
    shape: tuple
    role: str  # "trainable" or "state"
    node_id: str


class ParamCount(NamedTuple):
    total: int
    per_node: dict
    non_trainable: int


class FlopCount(NamedTuple):
    total: int
    per_node: dict
    elementwise: int


def param_manifest(graph: GraphSpec, shapes=None) -> list:
    """Flat list of every parameter array the graph needs, in node order."""
    shapes = infer_shapes(graph) if shapes is None else shapes
    out = []
    for node_id in graph.order:
        node = graph.node(node_id)
        if node.kind == "Conv":
            cin = shapes[node.inputs[0]][-1]
            kh, kw = node.params["kernel"]
            cout = node.params["out_channels"]
            out.append(ParamEntry(f"{node_id}/kernel", (kh, kw, cin, cout), "trainable", node_id))
            out.append(ParamEntry(f"{node_id}/bias", (cout,), "trainable", node_id))
        elif node.kind == "BatchNorm":
            c = shapes[node.inputs[0]][-1]
            for name, role in (("gamma", "trainable"), ("beta", "trainable"),
                               ("moving_mean", "state"), ("moving_var", "state")):
                out.append(ParamEntry(f"{node_id}/{name}", (c,), role, node_id))
        elif node.kind == "FullyConnected":
            fan_in = shapes[node.inputs[0]][-1]
            units = node.params["units"]
            out.append(ParamEntry(f"{node_id}/weights", (fan_in, units), "trainable", node_id))
            out.append(ParamEntry(f"{node_id}/bias", (units,), "trainable", node_id))
    return out


def count_params(graph: GraphSpec, shapes=None) -> ParamCount:
    shapes = infer_shapes(graph) if shapes is None else shapes
    per_node = {}
    non_trainable = 0
    for node in graph.nodes:
        if node.kind == "Conv":
            kh, kw = node.params["kernel"]
            cin, cout = shapes[node.inputs[0]][-1], node.params["out_channels"]
            per_node[node.id] = kh * kw * cin * cout + cout
        elif node.kind == "BatchNorm":
            c = shapes[node.inputs[0]][-1]
            per_node[node.id] = 2 * c
            non_trainable += 2 * c
        elif node.kind == "FullyConnected":
            fan_in, units = shapes[node.inputs[0]][-1], node.params["units"]
            per_node[node.id] = fan_in * units + units
    return ParamCount(sum(per_node.values()), per_node, non_trainable)


def count_flops(graph: GraphSpec, shapes=None) -> FlopCount:
    shapes = infer_shapes(graph, batch=1) if shapes is None else shapes
    per_node = {}
    elementwise = 0
    for node in graph.nodes:
        out_shape = shapes[node.id]
        if node.kind == "Conv":
            kh, kw = node.params["kernel"]
            cin = shapes[node.inputs[0]][-1]
            _, ho, wo, cout = out_shape
            per_node[node.id] = kh * kw * cin * cout * ho * wo
        elif node.kind == "FullyConnected":
            per_node[node.id] = shapes[node.inputs[0]][-1] * node.params["units"]
        elif node.kind in ("MaxPool", "AvgPool"):
            (kh, kw), _, _ = pool_geometry(node.params)
            elementwise += prod(out_shape[1:]) * kh * kw
        elif node.kind == "GlobalAvgPool":
            elementwise += prod(shapes[node.inputs[0]][1:])
        elif node.kind in ("BatchNorm", "ReLU", "ResidualAdd", "Dropout", "Softmax"):
            elementwise += prod(out_shape[1:])
    return FlopCount(sum(per_node.values()), per_node, elementwise)


def depth(graph: GraphSpec) -> int:
    """Largest number of Conv/FullyConnected layers on any input-to-output path."""
    best = {}
    for node_id in graph.order:
        node = graph.node(node_id)
        here = 1 if node.kind in ("Conv", "FullyConnected") else 0
        best[node_id] = here + max((best[s] for s in node.inputs), default=0)
    return best[graph.output_id]
