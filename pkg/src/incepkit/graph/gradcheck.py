"""Finite-difference checks of the engine's backward kernels.

Every check contracts the op output with a fixed random tensor ``R`` so the
scalar loss is ``sum(R * y)`` and its analytic gradient is the kernel's
backward applied to ``R``. Kernels are looked up in ``engine.KERNELS`` at call
time, so a patched registry is what gets checked.

Errors are per tensor: ``max|a - n| / max(max|a|, max|n|, floor)`` where the
floor is ``SCALE_FLOOR`` times the largest analytic gradient in the same
check. Central differences carry absolute roundoff of order
``eps * |loss| / h``, so a tensor whose true gradient is exactly zero (a conv
bias feeding BatchNorm) needs a floor tied to the gradient scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ops.gradcheck import finite_difference_gradient, relative_error
from . import engine
from .spec import GraphSpec, NodeSpec

H = 1e-5
SCALE_FLOOR = 1e-3


@dataclass
class CheckResult:
    kind: str
    label: str  # which tensor, e.g. "input0" or "conv/kernel"
    error: float
    worst_index: tuple  # coordinate of the largest |analytic - numeric|

    def passed(self, tolerance):
        return self.error <= tolerance


def _sample(size, samples, rng):
    if samples is None or size <= samples:
        return np.arange(size)
    return np.sort(rng.choice(size, samples, replace=False))


def _sampled(kind, label, analytic, numeric_fn, array, samples, rng):
    idx = _sample(array.size, samples, rng)
    numeric = numeric_fn(idx).reshape(-1)[idx]
    a = np.asarray(analytic).reshape(-1)[idx]
    worst = np.unravel_index(idx[int(np.argmax(np.abs(a - numeric)))], array.shape) if len(idx) else ()
    return kind, label, a, numeric, tuple(int(i) for i in worst), float(np.max(np.abs(analytic), initial=0.0))


def _finish(pending):
    scale = max((p[5] for p in pending), default=0.0)
    floor = max(1e-6, SCALE_FLOOR * scale)
    return [CheckResult(kind, label, relative_error(a, n, floor), worst) for kind, label, a, n, worst, _ in pending]


def check_node(node: NodeSpec, xs: list, weights: dict, mode="train", seed=0, samples=None, rng=None):
    """Check input and parameter gradients of one node; returns CheckResults."""
    rng = np.random.default_rng(0) if rng is None else rng
    fwd, bwd = engine.KERNELS[node.kind]
    node_seed = engine.node_seed(seed, 0)
    y, cache, _ = fwd(node, xs, weights, mode, node_seed)
    probe = rng.standard_normal(y.shape)

    def loss(*_):
        out, _, _ = fwd(node, xs, weights, mode, node_seed)
        return float(np.sum(probe * out))

    input_grads, param_grads = bwd(node, probe, xs, y, cache, weights, mode)
    pending = []
    for i, (x, g) in enumerate(zip(xs, input_grads)):
        num = lambda idx, x=x: finite_difference_gradient(loss, x, H, idx)
        pending.append(_sampled(node.kind, f"{node.id}:input{i}", g, num, x, samples, rng))
    for suffix in engine.PARAM_SUFFIXES.get(node.kind, ()):
        name = f"{node.id}/{suffix}"
        arr = weights[name]
        num = lambda idx, arr=arr: finite_difference_gradient(loss, arr, H, idx)
        pending.append(_sampled(node.kind, name, param_grads[name], num, arr, samples, rng))
    return _finish(pending)


def _away_from_zero(rng, shape, gap=0.05):
    x = rng.standard_normal(shape)
    return np.sign(x) * (np.abs(x) + gap)


def _distinct(rng, shape, spacing=0.01):
    """Values whose pairwise gaps are >= spacing, so max-pool has no near-ties."""
    size = int(np.prod(shape))
    return (rng.permutation(size) * spacing - size * spacing / 2).reshape(shape)


def random_instance(kind: str, rng):
    """A small random (node, inputs, weights, mode) case for one op kind."""
    n = int(rng.integers(1, 3))
    h, w = (int(v) for v in rng.integers(3, 8, size=2))
    c = int(rng.integers(1, 5))
    mode = "train"
    weights = {}
    if kind == "Conv":
        kh, kw = (int(v) for v in rng.integers(1, 4, size=2))
        stride = [int(v) for v in rng.integers(1, 3, size=2)]
        padding = str(rng.choice(["same", "valid"]))
        cout = int(rng.integers(1, 5))
        h, w = max(h, kh), max(w, kw)
        act = str(rng.choice(["none", "relu"]))
        params = {"kernel": [kh, kw], "stride": stride, "padding": padding, "out_channels": cout, "activation": act}
        weights = {"op/kernel": rng.standard_normal((kh, kw, c, cout)), "op/bias": rng.standard_normal(cout)}
        xs = [rng.standard_normal((n, h, w, c))]
    elif kind in ("MaxPool", "AvgPool"):
        k = int(rng.integers(1, 4))
        h, w = max(h, k), max(w, k)
        params = {"kernel": [k, k], "stride": [int(rng.integers(1, 3))] * 2,
                  "padding": str(rng.choice(["same", "valid"]))}
        xs = [_distinct(rng, (n, h, w, c))]
    elif kind == "BatchNorm":
        params = {"epsilon": 1e-3, "momentum": 0.99}
        n = max(n, 2)
        weights = {"op/gamma": rng.uniform(0.5, 1.5, c), "op/beta": rng.standard_normal(c),
                   "op/moving_mean": rng.standard_normal(c), "op/moving_var": rng.uniform(0.5, 2.0, c)}
        mode = str(rng.choice(["train", "infer"]))
        xs = [rng.standard_normal((n, h, w, c))]
    elif kind == "ReLU":
        params = {}
        xs = [_away_from_zero(rng, (n, h, w, c))]
    elif kind == "Concat":
        params = {}
        xs = [rng.standard_normal((n, h, w, int(rng.integers(1, 5)))) for _ in range(int(rng.integers(2, 4)))]
    elif kind == "ResidualAdd":
        params = {"alpha": float(rng.uniform(0, 1))}
        xs = [rng.standard_normal((n, h, w, c)) for _ in range(2)]
    elif kind == "GlobalAvgPool":
        params = {}
        xs = [rng.standard_normal((n, h, w, c))]
    elif kind == "Dropout":
        params = {"keep_prob": float(rng.uniform(0.3, 1.0))}
        xs = [rng.standard_normal((n, h, w, c))]
    elif kind == "FullyConnected":
        units = int(rng.integers(1, 6))
        params = {"units": units}
        weights = {"op/weights": rng.standard_normal((c * 2, units)), "op/bias": rng.standard_normal(units)}
        xs = [rng.standard_normal((n, c * 2))]
    elif kind == "Softmax":
        params = {}
        xs = [rng.standard_normal((n, int(rng.integers(2, 8))))]
    else:
        raise ValueError(f"no gradient check for kind {kind!r}")
    inputs = tuple(f"x{i}" for i in range(len(xs)))
    return NodeSpec("op", kind, params, inputs), xs, weights, mode


DIFFERENTIABLE = ("Conv", "MaxPool", "AvgPool", "BatchNorm", "ReLU", "Concat", "ResidualAdd",
                  "GlobalAvgPool", "Dropout", "FullyConnected", "Softmax")


def check_all_ops(instances=20, seed=0, samples=None, kinds=DIFFERENTIABLE) -> list:
    rng = np.random.default_rng(seed)
    results = []
    for kind in kinds:
        for i in range(instances):
            node, xs, weights, mode = random_instance(kind, rng)
            for r in check_node(node, xs, weights, mode, seed=i, samples=samples, rng=rng):
                r.label = f"#{i} {r.label}"
                results.append(r)
    return results


def check_graph(graph: GraphSpec, weights: dict, x, mode="train", seed=0, samples=8, rng=None) -> list:
    """Check every parameter and the input gradient of a whole graph on ``x``."""
    rng = np.random.default_rng(seed) if rng is None else rng
    y, ctx = engine.execute(graph, weights, x, mode, seed=seed, retain=True)
    probe = rng.standard_normal(y.shape)

    def loss(*_):
        out, _ = engine.execute(graph, weights, x, mode, seed=seed, retain=False)
        return float(np.sum(probe * out))

    grads = engine.backward(graph, ctx, probe, weights)
    pending = []
    owners = {}
    for node_id in ctx.order:
        for suffix in engine.PARAM_SUFFIXES.get(graph.node(node_id).kind, ()):
            owners[f"{node_id}/{suffix}"] = graph.node(node_id).kind
    for name, kind in owners.items():
        arr = weights[name]
        num = lambda idx, arr=arr: finite_difference_gradient(loss, arr, H, idx)
        pending.append(_sampled(kind, name, grads[name], num, arr, samples, rng))
    num = lambda idx: finite_difference_gradient(loss, x, H, idx)
    pending.append(_sampled("Input", graph.input_id, grads[graph.input_id], num, x, samples, rng))
    return _finish(pending)


def worst_by_kind(results) -> dict:
    worst = {}
    for r in results:
        if r.kind not in worst or r.error > worst[r.kind].error:
            worst[r.kind] = r
    return dict(sorted(worst.items()))
