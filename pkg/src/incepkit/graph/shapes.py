from __future__ import annotations

from ..errors import GraphError, ShapeError
from ..ops.conv import ConvSpec, output_size
from .spec import GraphSpec, NodeSpec


def pool_geometry(params):
    kernel = tuple(int(k) for k in params["kernel"])
    stride = tuple(int(s) for s in params.get("stride", kernel))
    return kernel, stride, params.get("padding", "valid")


def _require_rank(node, shape, rank):
    if len(shape) != rank:
        raise ShapeError(f"node {node.id!r} ({node.kind}) expects a rank-{rank} input, got {shape}")


def node_output_shape(node: NodeSpec, in_shapes: list) -> tuple:
    kind = node.kind
    try:
        if kind == "Conv":
            _require_rank(node, in_shapes[0], 4)
            spec = ConvSpec.from_params(node.params)
            n, h, w, _ = in_shapes[0]
            return (n, *spec.output_grid(h, w), spec.out_channels)
        if kind in ("MaxPool", "AvgPool"):
            _require_rank(node, in_shapes[0], 4)
            (kh, kw), (sh, sw), padding = pool_geometry(node.params)
            n, h, w, c = in_shapes[0]
            return (n, output_size(h, kh, sh, padding), output_size(w, kw, sw, padding), c)
        if kind in ("BatchNorm", "ReLU", "Dropout", "Softmax"):
            return tuple(in_shapes[0])
        if kind == "Concat":
            lead = in_shapes[0][:-1]
            for src, shape in zip(node.inputs, in_shapes):
                if shape[:-1] != lead:
                    raise ShapeError(
                        f"node {node.id!r} (Concat): grid mismatch between {node.inputs[0]!r} {in_shapes[0]} "
                        f"and {src!r} {shape}"
                    )
            return (*lead, sum(s[-1] for s in in_shapes))
        if kind == "ResidualAdd":
            if in_shapes[0] != in_shapes[1]:
                raise ShapeError(
                    f"node {node.id!r} (ResidualAdd): shortcut {node.inputs[0]!r} has shape {in_shapes[0]} but "
                    f"residual {node.inputs[1]!r} has shape {in_shapes[1]} (missing filter-expansion layer?)"
                )
            return tuple(in_shapes[0])
        if kind == "GlobalAvgPool":
            _require_rank(node, in_shapes[0], 4)
            return (in_shapes[0][0], in_shapes[0][3])
        if kind == "FullyConnected":
            _require_rank(node, in_shapes[0], 2)
            return (in_shapes[0][0], int(node.params["units"]))
    except ShapeError as exc:
        if node.id in str(exc):
            raise
        raise ShapeError(f"node {node.id!r} ({kind}): {exc}; input shapes {in_shapes}") from exc
    raise GraphError(f"node {node.id!r}: unknown kind {kind!r}")


def infer_shapes(graph: GraphSpec, batch: int | None = None) -> dict:
    """Map every node id to its output shape (NHWC, or (N, C) after pooling)."""
    input_shape = tuple(graph.input_shape)
    if batch is not None:
        input_shape = (batch, *input_shape[1:])
    shapes = {}
    for node_id in graph.order:
        node = graph.node(node_id)
        if node.kind == "Input":
            shapes[node_id] = input_shape
            continue
        if not node.inputs:
            raise GraphError(f"node {node_id!r} ({node.kind}) has no inputs")
        shapes[node_id] = node_output_shape(node, [shapes[src] for src in node.inputs])
    return shapes
