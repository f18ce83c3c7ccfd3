"""Topological-order execution and reverse-mode sweep over a GraphSpec.

Weights are a flat ``dict`` keyed as in :func:`incepkit.graph.cost.param_manifest`
(``"<node>/kernel"``, ``"<node>/gamma"``, ...). Every node kind registers a
``(forward, backward)`` pair in :data:`KERNELS`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GraphError, ShapeError
from ..ops import conv, head, merge, norm, pool
from .shapes import pool_geometry
from .spec import GraphSpec

MODES = ("train", "infer")
PARAM_SUFFIXES = {"Conv": ("kernel", "bias"), "BatchNorm": ("gamma", "beta"), "FullyConnected": ("weights", "bias")}


@dataclass
class ExecutionContext:
    mode: str
    order: tuple
    outputs: dict
    caches: dict = field(default_factory=dict)
    state_updates: dict = field(default_factory=dict)
    graph_nodes: int = 0


def _weight(weights, name):
    try:
        return weights[name]
    except KeyError:
        raise GraphError(f"missing weights for {name!r}") from None


def _bn_params(node, weights):
    p = node.params
    return norm.BatchNormParams(
        _weight(weights, f"{node.id}/gamma"), _weight(weights, f"{node.id}/beta"),
        _weight(weights, f"{node.id}/moving_mean"), _weight(weights, f"{node.id}/moving_var"),
        epsilon=p.get("epsilon", 1e-3), momentum=p.get("momentum", 0.99),
    )


# forward(node, inputs, weights, mode, seed) -> (output, cache, state_updates)
# backward(node, grad, inputs, output, cache, weights, mode) -> (input_grads, param_grads)

def _conv_fwd(node, xs, weights, mode, seed):
    spec = conv.ConvSpec.from_params(node.params)
    y = conv.conv2d_forward(xs[0], _weight(weights, f"{node.id}/kernel"), _weight(weights, f"{node.id}/bias"), spec)
    return y, spec, None


def _conv_bwd(node, g, xs, y, spec, weights, mode):
    gx, gw, gb = conv.conv2d_backward(g, xs[0], weights[f"{node.id}/kernel"], spec, output=y)
    return [gx], {f"{node.id}/kernel": gw, f"{node.id}/bias": gb}


def _pool_fwd(node, xs, weights, mode, seed):
    kernel, stride, padding = pool_geometry(node.params)
    kind = "max" if node.kind == "MaxPool" else "avg"
    return pool.pool2d(xs[0], kind, kernel, stride, padding), None, None


def _pool_bwd(node, g, xs, y, cache, weights, mode):
    kernel, stride, padding = pool_geometry(node.params)
    kind = "max" if node.kind == "MaxPool" else "avg"
    return [pool.pool2d_backward(g, xs[0], kind, kernel, stride, padding)], {}


def _bn_fwd(node, xs, weights, mode, seed):
    params = _bn_params(node, weights)
    y, updated = norm.batchnorm(xs[0], params, mode)
    updates = None
    if mode == "train":
        updates = {f"{node.id}/moving_mean": updated.running_mean, f"{node.id}/moving_var": updated.running_var}
    return y, params, updates


def _bn_bwd(node, g, xs, y, params, weights, mode):
    gx, gg, gb = norm.batchnorm_backward(g, xs[0], params, mode)
    return [gx], {f"{node.id}/gamma": gg, f"{node.id}/beta": gb}


def _relu_fwd(node, xs, weights, mode, seed):
    return head.relu(xs[0]), None, None


def _relu_bwd(node, g, xs, y, cache, weights, mode):
    return [head.relu_backward(g, xs[0])], {}


def _concat_fwd(node, xs, weights, mode, seed):
    return merge.concat_channels(xs), [x.shape[-1] for x in xs], None


def _concat_bwd(node, g, xs, y, sizes, weights, mode):
    return merge.split_channels(g, sizes), {}


def _add_fwd(node, xs, weights, mode, seed):
    return merge.add_scaled(xs[0], xs[1], node.params.get("alpha", 1.0)), None, None


def _add_bwd(node, g, xs, y, cache, weights, mode):
    return list(merge.add_scaled_backward(g, node.params.get("alpha", 1.0))), {}


def _gap_fwd(node, xs, weights, mode, seed):
    return head.global_avgpool(xs[0]), None, None


def _gap_bwd(node, g, xs, y, cache, weights, mode):
    return [head.global_avgpool_backward(g, xs[0].shape)], {}


def _dropout_fwd(node, xs, weights, mode, seed):
    y, mask = head.dropout(xs[0], node.params.get("keep_prob", 1.0), mode, seed)
    return y, mask, None


def _dropout_bwd(node, g, xs, y, mask, weights, mode):
    return [g if mask is None else g * mask], {}


def _fc_fwd(node, xs, weights, mode, seed):
    y = head.fully_connected(xs[0], _weight(weights, f"{node.id}/weights"), _weight(weights, f"{node.id}/bias"))
    return y, None, None


def _fc_bwd(node, g, xs, y, cache, weights, mode):
    gx, gw, gb = head.fully_connected_backward(g, xs[0], weights[f"{node.id}/weights"])
    return [gx], {f"{node.id}/weights": gw, f"{node.id}/bias": gb}


def _softmax_fwd(node, xs, weights, mode, seed):
    return head.softmax(xs[0]), None, None


def _softmax_bwd(node, g, xs, y, cache, weights, mode):
    return [head.softmax_backward(g, y)], {}


KERNELS = {
    "Conv": (_conv_fwd, _conv_bwd),
    "MaxPool": (_pool_fwd, _pool_bwd),
    "AvgPool": (_pool_fwd, _pool_bwd),
    "BatchNorm": (_bn_fwd, _bn_bwd),
    "ReLU": (_relu_fwd, _relu_bwd),
    "Concat": (_concat_fwd, _concat_bwd),
    "ResidualAdd": (_add_fwd, _add_bwd),
    "GlobalAvgPool": (_gap_fwd, _gap_bwd),
    "Dropout": (_dropout_fwd, _dropout_bwd),
    "FullyConnected": (_fc_fwd, _fc_bwd),
    "Softmax": (_softmax_fwd, _softmax_bwd),
}


def node_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, index])


def execute(graph: GraphSpec, weights: dict, x, mode="infer", seed=0, target=None, retain=None):
    """Evaluate ``graph`` on ``x``.

    Returns ``(output, context)``. ``target`` evaluates only the ancestors of
    that node and returns its value. Train mode keeps every intermediate in the
    context for :func:`backward`; BN running-stat updates land in
    ``context.state_updates``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if tuple(x.shape[1:]) != tuple(graph.input_shape[1:]):
        raise ShapeError(f"input shape {x.shape} does not match graph input {graph.input_shape}")
    retain = (mode == "train") if retain is None else retain
    target = graph.output_id if target is None else target
    needed = graph.ancestors(target)
    order = tuple(i for i in graph.order if i in needed)
    remaining = {}
    if not retain:
        for node_id in order:
            for src in graph.node(node_id).inputs:
                remaining[src] = remaining.get(src, 0) + 1
    positions = {node_id: i for i, node_id in enumerate(graph.order)}
    outputs, caches, updates = {}, {}, {}
    for node_id in order:
        node = graph.node(node_id)
        if node.kind == "Input":
            outputs[node_id] = x
            continue
        xs = [outputs[src] for src in node.inputs]
        forward = KERNELS[node.kind][0]
        y, cache, update = forward(node, xs, weights, mode, node_seed(seed, positions[node_id]))
        outputs[node_id] = y
        if retain:
            caches[node_id] = cache
        if update:
            updates.update(update)
        if not retain:
            for src in node.inputs:
                remaining[src] -= 1
                if remaining[src] == 0 and src != target:
                    del outputs[src]
    ctx = ExecutionContext(mode, order, outputs, caches, updates, len(graph.nodes))
    return outputs[target], ctx


def backward(graph: GraphSpec, ctx: ExecutionContext, grad_output, weights: dict, target=None) -> dict:
    """Reverse sweep from ``target`` (default: the last executed node).

    Returns parameter gradients keyed like ``weights`` plus the gradient w.r.t.
    the network input under the Input node's id. Gradients arriving at a node
    from several consumers are summed.
    """
    if ctx.graph_nodes != len(graph.nodes) or not ctx.caches and len(ctx.order) > 1:
        raise GraphError("execution context does not belong to this graph or was not retained")
    target = ctx.order[-1] if target is None else target
    if target not in ctx.outputs:
        raise GraphError(f"target {target!r} was not executed")
    if grad_output.shape != ctx.outputs[target].shape:
        raise ShapeError(f"grad_output {grad_output.shape} does not match output {ctx.outputs[target].shape}")
    pending = {target: grad_output}
    grads = {}
    for node_id in reversed(ctx.order):
        g = pending.pop(node_id, None)
        node = graph.node(node_id)
        if node.kind == "Input":
            grads[node_id] = g if g is not None else np.zeros_like(ctx.outputs[node_id])
            continue
        if g is None:
            continue
        xs = [ctx.outputs[src] for src in node.inputs]
        bwd = KERNELS[node.kind][1]
        input_grads, param_grads = bwd(node, g, xs, ctx.outputs[node_id], ctx.caches[node_id], weights, ctx.mode)
        grads.update(param_grads)
        for src, gi in zip(node.inputs, input_grads):
            if src in pending:
                pending[src] = pending[src] + gi
            else:
                pending[src] = gi
    for node_id in ctx.order:
        for suffix in PARAM_SUFFIXES.get(graph.node(node_id).kind, ()):
            name = f"{node_id}/{suffix}"
            if name not in grads:
                grads[name] = np.zeros_like(weights[name])
    return grads
