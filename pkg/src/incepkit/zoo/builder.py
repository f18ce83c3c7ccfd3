"""Graph builders for the stems, blocks and full networks.

Filter counts come from the JSON definition files in ``defs/``; this module
only knows how to wire layers. Every ordinary convolution is emitted as
``Conv (linear) -> BatchNorm -> ReLU``. Residual blocks end in
``Concat -> 1x1 Conv (linear, no BN) -> ResidualAdd(alpha) -> ReLU``.
"""
from __future__ import annotations

import math

from ..errors import ConfigError, GraphError
from ..graph.shapes import infer_shapes, node_output_shape
from ..graph.spec import GraphSpec, NodeSpec
from .config import ArchConfig, ReductionAParams, load_definition

GRIDS = {"A35": "inception_a", "B17": "inception_b", "C8": "inception_c"}


def scale_filters(filters: int, width: float) -> int:
    """Round ``filters * width`` to the nearest multiple of 4 (halves round up).

    Raises ConfigError when the result would fall below 4.
    """
    scaled = 4 * math.floor(filters * width / 4 + 0.5)
    if scaled < 4:
        raise ConfigError(f"width multiplier {width} is infeasible: {filters} filters scale to {filters * width:.3g}")
    return scaled


class _Builder:
    def __init__(self, config: ArchConfig):
        self.config = config
        self.nodes = []
        self.shapes = {}

    def add(self, node_id, kind, params, inputs=()):
        if node_id in self.shapes:
            raise GraphError(f"duplicate node id {node_id!r}")
        node = NodeSpec(node_id, kind, params, tuple(inputs))
        if kind == "Input":
            shape = tuple(params.pop("shape"))
            node = NodeSpec(node_id, kind, {}, ())
        else:
            shape = node_output_shape(node, [self.shapes[i] for i in inputs])
        self.nodes.append(node)
        self.shapes[node_id] = shape
        return node_id

    def channels(self, node_id):
        return self.shapes[node_id][-1]

    def conv_unit(self, node_id, layer, filters, src):
        stride = layer.get("stride", 1)
        params = {
            "kernel": list(layer["kernel"]),
            "stride": [stride, stride] if isinstance(stride, int) else list(stride),
            "padding": layer.get("padding", "same"),
            "out_channels": filters,
            "activation": "none",
        }
        self.add(node_id, "Conv", params, [src])
        bn = {"epsilon": self.config.bn_epsilon, "momentum": self.config.bn_momentum}
        self.add(f"{node_id}/bn", "BatchNorm", bn, [node_id])
        return self.add(f"{node_id}/relu", "ReLU", {}, [f"{node_id}/bn"])

    def layers(self, prefix, layers, src, symbols=None):
        """Emit a definition-file layer list; returns the id of the last layer."""
        names = {"in": src}
        last = src
        for layer in layers:
            node_id = f"{prefix}/{layer['id']}"
            inputs = [names[i] for i in layer.get("inputs", [])] or [last]
            op = layer["op"]
            if op == "conv":
                filters = layer["filters"]
                if isinstance(filters, str):
                    filters = getattr(symbols, filters)
                out = self.conv_unit(node_id, layer, scale_filters(filters, self.config.width_multiplier), inputs[0])
            elif op in ("maxpool", "avgpool"):
                stride = layer.get("stride", 1)
                params = {
                    "kernel": list(layer["kernel"]),
                    "stride": [stride, stride] if isinstance(stride, int) else list(stride),
                    "padding": layer.get("padding", "valid"),
                }
                out = self.add(node_id, "MaxPool" if op == "maxpool" else "AvgPool", params, inputs)
            elif op == "concat":
                out = self.add(node_id, "Concat", {}, inputs)
            else:
                raise GraphError(f"unknown op {op!r} in definition layer {layer['id']!r}")
            names[layer["id"]] = out
            last = out
        return last

    def residual_tail(self, prefix, merged, shortcut, alpha):
        for node in residual_tail_nodes(prefix, merged, shortcut, self.channels(shortcut), alpha):
            self.add(node.id, node.kind, dict(node.params), node.inputs)
        return node.id

    def graph(self, output_id):
        return GraphSpec(tuple(self.nodes), self.shapes[self.nodes[0].id], output_id)


def residual_tail_nodes(prefix, merged, shortcut, channels, alpha):
    """Filter-expansion conv, scaled residual sum and ReLU appended to a merge node."""
    expand = f"{prefix}/expand"
    add = f"{prefix}/residual_add"
    return [
        NodeSpec(expand, "Conv", {"kernel": [1, 1], "stride": [1, 1], "padding": "same",
                                  "out_channels": channels, "activation": "none"}, (merged,)),
        NodeSpec(add, "ResidualAdd", {"alpha": alpha}, (shortcut, expand)),
        NodeSpec(f"{prefix}/relu", "ReLU", {}, (add,)),
    ]


def _inception_block(b: _Builder, definition, key, prefix, src):
    merged = b.layers(prefix, definition[key]["layers"], src)
    if b.config.is_residual:
        return b.residual_tail(prefix, merged, src, b.config.residual_scale)
    return merged


def _reduction_a(b: _Builder, src, params: ReductionAParams, prefix="reduction_a"):
    return b.layers(prefix, load_definition("reduction_a")["layers"], src, symbols=params)


def _stages(config: ArchConfig, stop_after=None):
    """Build the network; returns (builder, stage boundary ids)."""
    definition = load_definition(config.variant)
    b = _Builder(config)
    h, w = config.input_size
    x = b.add("input", "Input", {"shape": (1, h, w, 3)})
    marks = {}
    x = marks["stem"] = b.layers("stem", definition["stem"]["layers"], x)
    a, bb, c = config.block_counts
    for i in range(a):
        x = _inception_block(b, definition, "inception_a", f"inception_a_{i + 1}", x)
    x = marks["reduction_a"] = _reduction_a(b, x, config.reduction_a)
    for i in range(bb):
        x = _inception_block(b, definition, "inception_b", f"inception_b_{i + 1}", x)
    x = marks["reduction_b"] = b.layers("reduction_b", definition["reduction_b"]["layers"], x)
    for i in range(c):
        x = _inception_block(b, definition, "inception_c", f"inception_c_{i + 1}", x)
    marks["features"] = x
    return b, marks


def assemble(config: ArchConfig) -> GraphSpec:
    """Input -> stem -> A x a -> Reduction-A -> B x b -> Reduction-B -> C x c -> head."""
    b, marks = _stages(config)
    x = b.add("head/avgpool", "GlobalAvgPool", {}, [marks["features"]])
    x = b.add("head/dropout", "Dropout", {"keep_prob": config.dropout_keep}, [x])
    x = b.add("head/logits", "FullyConnected", {"units": config.num_classes}, [x])
    x = b.add("head/softmax", "Softmax", {}, [x])
    return b.graph(x)


def stage_input_shapes(config: ArchConfig) -> dict:
    """NHWC input shape seen by each block type in the assembled network."""
    b, marks = _stages(config.with_(block_counts=(0, 0, 0)))
    return {
        "inception_a": b.shapes[marks["stem"]],
        "reduction_a": b.shapes[marks["stem"]],
        "inception_b": b.shapes[marks["reduction_a"]],
        "reduction_b": b.shapes[marks["reduction_a"]],
        "inception_c": b.shapes[marks["reduction_b"]],
    }


def _fragment_builder(config, input_shape):
    b = _Builder(config)
    src = b.add("input", "Input", {"shape": tuple(input_shape)})
    return b, src


def build_stem(variant, config: ArchConfig | None = None) -> GraphSpec:
    config = ArchConfig(variant) if config is None else config.with_(variant=variant)
    b, src = _fragment_builder(config, (1, *config.input_size, 3))
    out = b.layers("stem", load_definition(config.variant)["stem"]["layers"], src)
    return b.graph(out)


def build_inception_block(variant, grid, config: ArchConfig | None = None, input_shape=None) -> GraphSpec:
    """One A35/B17/C8 block; residual variants include the expansion/sum/ReLU tail."""
    if grid not in GRIDS:
        raise ConfigError(f"grid must be one of {sorted(GRIDS)}, got {grid!r}")
    config = ArchConfig(variant) if config is None else config.with_(variant=variant)
    key = GRIDS[grid]
    input_shape = stage_input_shapes(config)[key] if input_shape is None else input_shape
    b, src = _fragment_builder(config, input_shape)
    out = _inception_block(b, load_definition(config.variant), key, key, src)
    return b.graph(out)


def build_reduction_a(params: ReductionAParams, config: ArchConfig | None = None, input_shape=(1, 35, 35, 384)) -> GraphSpec:
    config = ArchConfig() if config is None else config
    b, src = _fragment_builder(config, input_shape)
    return b.graph(_reduction_a(b, src, params))


def build_reduction_b(variant, config: ArchConfig | None = None, input_shape=None) -> GraphSpec:
    config = ArchConfig(variant) if config is None else config.with_(variant=variant)
    input_shape = stage_input_shapes(config)["reduction_b"] if input_shape is None else input_shape
    b, src = _fragment_builder(config, input_shape)
    out = b.layers("reduction_b", load_definition(config.variant)["reduction_b"]["layers"], src)
    return b.graph(out)


def residualize(fragment: GraphSpec, alpha: float) -> GraphSpec:
    """Turn a grid-preserving Concat-terminated block into a residual block.

    The Concat output feeds a new 1x1 linear expansion conv sized to the
    fragment input, whose result is scaled by ``alpha``, added to the input and
    passed through ReLU.
    """
    out = fragment.node(fragment.output_id)
    if out.kind != "Concat":
        raise GraphError(f"residualize needs a fragment ending in Concat, got {out.kind}")
    shapes = infer_shapes(fragment)
    src = fragment.input_id
    if shapes[src][1:3] != shapes[out.id][1:3]:
        raise GraphError(
            f"cannot residualize a fragment that changes the grid: {shapes[src][1:3]} -> {shapes[out.id][1:3]}"
        )
    prefix = out.id.rsplit("/", 1)[0] if "/" in out.id else out.id
    tail = residual_tail_nodes(prefix, out.id, src, shapes[src][-1], alpha)
    clash = {n.id for n in tail} & set(fragment.by_id)
    if clash:
        raise GraphError(f"residualize would duplicate node ids {sorted(clash)}")
    return fragment.replace_nodes([*fragment.nodes, *tail], output_id=tail[-1].id)
