import json
import random

import numpy as np
import pydot
import pytest

from incepkit.errors import GraphError, ShapeError
from incepkit.graph import (
    GraphSpec,
    NodeSpec,
    backward,
    count_flops,
    count_params,
    execute,
    export_dot,
    infer_shapes,
    param_manifest,
    validate,
)
from incepkit.graph.gradcheck import check_graph
from incepkit.train import init_weights
from incepkit.zoo import ArchConfig, assemble, build_inception_block, desk_config


def conv(node_id, src, out, k=1, stride=1, padding="same", act="none"):
    return NodeSpec(node_id, "Conv", {"kernel": [k, k], "stride": [stride, stride], "padding": padding,
                                      "out_channels": out, "activation": act}, (src,))


def graph(nodes, shape, output=None):
    return GraphSpec(tuple(nodes), tuple(shape), output or nodes[-1].id)


def residual_graph(bn_after_sum=False, act="none", expand_channels=4):
    nodes = [
        NodeSpec("input", "Input", {}, ()),
        conv("branch", "input", 6, k=3),
        NodeSpec("branch/relu", "ReLU", {}, ("branch",)),
        conv("expand", "branch/relu", expand_channels, act=act),
        NodeSpec("add", "ResidualAdd", {"alpha": 0.2}, ("input", "expand")),
    ]
    nodes.append(NodeSpec("bn", "BatchNorm", {}, ("add",)) if bn_after_sum else NodeSpec("relu", "ReLU", {}, ("add",)))
    return graph(nodes, (1, 5, 5, 4))


# shapes

def test_identity_graph_shapes():
    g = graph([NodeSpec("input", "Input", {}, ())], (1, 7, 7, 3))
    assert infer_shapes(g) == {"input": (1, 7, 7, 3)}


def test_residual_channel_mismatch_detected():
    with pytest.raises(ShapeError) as info:
        infer_shapes(residual_graph(expand_channels=5))
    assert "add" in str(info.value) and "5" in str(info.value)


def test_concat_sums_channels():
    g = graph([NodeSpec("input", "Input", {}, ()), conv("a", "input", 3), conv("b", "input", 5),
               NodeSpec("cat", "Concat", {}, ("a", "b"))], (2, 4, 4, 2))
    assert infer_shapes(g)["cat"] == (2, 4, 4, 8)


# random graphs: execute agrees with inference

def random_graph(rng: random.Random):
    h = rng.randint(5, 9)
    nodes = [NodeSpec("input", "Input", {}, ())]
    shapes = {"input": (2, h, h, rng.randint(1, 4))}
    live = ["input"]
    for i in range(rng.randint(2, 9)):
        src = rng.choice(live)
        _, hh, ww, c = shapes[src]
        kind = rng.choice(["Conv", "Conv", "MaxPool", "AvgPool", "BatchNorm", "ReLU", "Concat", "ResidualAdd", "Dropout"])
        nid = f"n{i}"
        if kind == "Conv":
            k = rng.randint(1, min(3, hh, ww))
            node = conv(nid, src, rng.randint(1, 5), k=k, stride=rng.randint(1, 2),
                        padding=rng.choice(["same", "valid"]), act=rng.choice(["none", "relu"]))
        elif kind in ("MaxPool", "AvgPool"):
            k = rng.randint(1, min(3, hh, ww))
            node = NodeSpec(nid, kind, {"kernel": [k, k], "stride": [rng.randint(1, 2)] * 2,
                                        "padding": rng.choice(["same", "valid"])}, (src,))
        elif kind == "Concat":
            peers = [n for n in live if shapes[n][1:3] == (hh, ww)]
            node = NodeSpec(nid, "Concat", {}, (src, rng.choice(peers)))
        elif kind == "ResidualAdd":
            node = NodeSpec(nid, "ResidualAdd", {"alpha": rng.random()}, (src, src))
            peers = [n for n in live if shapes[n] == shapes[src] and n != src]
            if peers:
                node = NodeSpec(nid, "ResidualAdd", {"alpha": rng.random()}, (src, rng.choice(peers)))
        elif kind == "Dropout":
            node = NodeSpec(nid, kind, {"keep_prob": 0.7}, (src,))
        else:
            node = NodeSpec(nid, kind, {}, (src,))
        nodes.append(node)
        shapes.update(infer_shapes(graph(nodes, shapes["input"])))
        live.append(nid)
    nodes.append(NodeSpec("gap", "GlobalAvgPool", {}, (live[-1],)))
    nodes.append(NodeSpec("fc", "FullyConnected", {"units": 3}, ("gap",)))
    nodes.append(NodeSpec("softmax", "Softmax", {}, ("fc",)))
    return graph(nodes, shapes["input"])


def test_execute_matches_inferred_shapes_on_random_graphs():
    rng = random.Random(0)
    for i in range(100):
        g = random_graph(rng)
        assert validate(g) == []
        shapes = infer_shapes(g)
        weights = init_weights(g, seed=i, dtype=np.float64)
        x = np.random.default_rng(i).standard_normal(g.input_shape)
        for mode in ("train", "infer"):
            _, ctx = execute(g, weights, x, mode, retain=True)
            for node_id, value in ctx.outputs.items():
                assert value.shape == shapes[node_id], node_id


def test_execute_relu_on_negative():
    g = graph([NodeSpec("input", "Input", {}, ()), NodeSpec("relu", "ReLU", {}, ("input",))], (1, 2, 2, 1))
    out, _ = execute(g, {}, -np.ones((1, 2, 2, 1)))
    assert not np.any(out)


def test_execute_deterministic_and_errors():
    g = random_graph(random.Random(3))
    w = init_weights(g, 0, np.float64)
    x = np.random.default_rng(0).standard_normal(g.input_shape)
    assert np.array_equal(execute(g, w, x)[0], execute(g, w, x)[0])
    a, _ = execute(g, w, x, "train", seed=5)
    b, _ = execute(g, w, x, "train", seed=5)
    assert np.array_equal(a, b)
    with pytest.raises(ShapeError):
        execute(g, w, np.zeros((1, 3, 3, 9)))
    with pytest.raises(GraphError):
        execute(g, {k: v for k, v in w.items() if k != "fc/weights"}, x)


def test_backward_zero_grad():
    g = random_graph(random.Random(4))
    w = init_weights(g, 0, np.float64)
    x = np.random.default_rng(1).standard_normal(g.input_shape)
    y, ctx = execute(g, w, x, "train")
    grads = backward(g, ctx, np.zeros_like(y), w)
    assert all(not np.any(v) for v in grads.values())


def test_backward_fanout_residual():
    g = graph([NodeSpec("input", "Input", {}, ()), NodeSpec("add", "ResidualAdd", {"alpha": 0.3}, ("input", "input"))],
              (1, 3, 3, 2))
    x = np.random.default_rng(2).standard_normal((1, 3, 3, 2))
    g_out = np.random.default_rng(3).standard_normal((1, 3, 3, 2))
    y, ctx = execute(g, {}, x, "train")
    np.testing.assert_allclose(backward(g, ctx, g_out, {})["input"], 1.3 * g_out, rtol=1e-15)


def test_backward_rejects_foreign_context():
    g = random_graph(random.Random(5))
    w = init_weights(g, 0, np.float64)
    y, ctx = execute(g, w, np.zeros(g.input_shape), "train")
    other = random_graph(random.Random(6))
    with pytest.raises((GraphError, ShapeError)):
        backward(other, ctx, np.zeros_like(y), w)


def every_kind_graph():
    nodes = [
        NodeSpec("input", "Input", {}, ()),
        conv("c1", "input", 4, k=3),
        NodeSpec("bn", "BatchNorm", {"epsilon": 1e-3}, ("c1",)),
        NodeSpec("relu", "ReLU", {}, ("bn",)),
        NodeSpec("maxpool", "MaxPool", {"kernel": [3, 3], "stride": [1, 1], "padding": "same"}, ("relu",)),
        NodeSpec("avgpool", "AvgPool", {"kernel": [3, 3], "stride": [1, 1], "padding": "same"}, ("relu",)),
        NodeSpec("cat", "Concat", {}, ("maxpool", "avgpool")),
        conv("expand", "cat", 3),
        NodeSpec("add", "ResidualAdd", {"alpha": 0.3}, ("input", "expand")),
        NodeSpec("gap", "GlobalAvgPool", {}, ("add",)),
        NodeSpec("drop", "Dropout", {"keep_prob": 0.8}, ("gap",)),
        NodeSpec("fc", "FullyConnected", {"units": 4}, ("drop",)),
        NodeSpec("softmax", "Softmax", {}, ("fc",)),
    ]
    return graph(nodes, (1, 5, 5, 3))


def test_every_kind_graph_passes_fd():
    g = every_kind_graph()
    assert {n.kind for n in g.nodes} == {"Input", "Conv", "BatchNorm", "ReLU", "MaxPool", "AvgPool", "Concat",
                                          "ResidualAdd", "GlobalAvgPool", "Dropout", "FullyConnected", "Softmax"}
    w = init_weights(g, 1, np.float64)
    x = np.random.default_rng(4).standard_normal((3, 5, 5, 3))
    results = check_graph(g, w, x, seed=2, samples=None)
    assert max(r.error for r in results) <= 1e-4


def test_desk_inception_resnet_a_block_fd():
    block = build_inception_block("inception_resnet_v2", "A35", desk_config(), input_shape=(1, 5, 5, 32))
    w = init_weights(block, 3, np.float64)
    x = np.random.default_rng(5).standard_normal((2, 5, 5, 32))
    results = check_graph(block, w, x, seed=3, samples=6)
    trainable = [e for e in param_manifest(block) if e.role == "trainable"]
    assert len(results) == len(trainable) + 1
    assert max(r.error for r in results) <= 1e-4


# validation

def test_shipped_resnets_validate_clean():
    for variant in ("inception_resnet_v1", "inception_resnet_v2"):
        g = assemble(ArchConfig(variant))
        assert validate(g, "inception_resnet") == []


def test_bn_after_sum_violation():
    v = validate(residual_graph(bn_after_sum=True), "inception_resnet")
    assert [(x.rule, x.node_id) for x in v] == [("no-bn-on-sum", "bn")]


def test_activated_expansion_violation():
    v = validate(residual_graph(act="relu"), "inception_resnet")
    assert [x.rule for x in v] == ["linear-expansion"]


def test_channel_mismatch_violation():
    v = validate(residual_graph(expand_channels=5), "inception_resnet")
    assert [(x.rule, x.node_id) for x in v] == [("channel-match", "add")]


@pytest.mark.parametrize("mutate, rule", [
    (lambda n: n + [NodeSpec("relu", "ReLU", {}, ("add",))], "unique-ids"),
    (lambda n: n + [NodeSpec("x", "ReLU", {}, ("nowhere",))], "dangling-input"),
    (lambda n: n + [NodeSpec("x", "Concat", {}, ("add",))], "arity"),
    (lambda n: n + [NodeSpec("x", "Warp", {}, ("add",))], "kind"),
    (lambda n: n + [NodeSpec("input2", "Input", {}, ())], "single-input"),
])
def test_generic_mutations(mutate, rule):
    g = residual_graph()
    bad = g.replace_nodes(mutate(list(g.nodes)))
    assert rule in {v.rule for v in validate(bad)}


def test_cycle_detected():
    g = graph([NodeSpec("input", "Input", {}, ()), NodeSpec("a", "ReLU", {}, ("b",)), NodeSpec("b", "ReLU", {}, ("a",))],
              (1, 2, 2, 1), "b")
    assert [v.rule for v in validate(g)] == ["acyclic"]


# counting

def test_count_params_examples():
    g = graph([NodeSpec("input", "Input", {}, ()), conv("c", "input", 384)], (1, 8, 8, 256))
    assert count_params(g).total == 256 * 384 + 384
    bare = graph([NodeSpec("input", "Input", {}, ()), NodeSpec("r", "ReLU", {}, ("input",))], (1, 8, 8, 3))
    assert count_params(bare).total == 0
    assert count_flops(bare).total == 0


def test_count_flops_stem_conv():
    g = graph([NodeSpec("input", "Input", {}, ()), conv("c", "input", 32, k=3, stride=2, padding="valid")],
              (1, 299, 299, 3))
    assert count_flops(g).total == 9 * 3 * 32 * 149 * 149 == 19_181_664


def test_count_params_dual_path_v4():
    g = assemble(ArchConfig("inception_v4"))
    manifest = param_manifest(g)
    trainable = sum(int(np.prod(e.shape)) for e in manifest if e.role == "trainable")
    state = sum(int(np.prod(e.shape)) for e in manifest if e.role == "state")
    count = count_params(g)
    assert count.total == trainable
    assert count.non_trainable == state


def test_count_params_reorder_invariant():
    g = assemble(desk_config())
    rng = random.Random(1)
    order = list(g.order)
    # a different valid topological order: stable shuffle of independent runs is awkward,
    # so use reversed list positions, which GraphSpec re-sorts topologically
    shuffled = g.replace_nodes(tuple(reversed(g.nodes)))
    assert count_params(shuffled) == count_params(g)
    nodes = list(g.nodes)
    rng.shuffle(nodes)
    assert count_params(g.replace_nodes(nodes)).total == count_params(g).total
    assert order[0] == "input"


# serialization and DOT

def test_json_roundtrip():
    g = assemble(desk_config())
    text = g.dumps()
    again = GraphSpec.loads(text)
    assert again == g and again.dumps() == text
    assert set(json.loads(text)) == {"nodes", "input_shape", "output_id"}
    assert set(json.loads(text)["nodes"][1]) == {"id", "kind", "params", "inputs"}


def test_dot_input_only():
    g = graph([NodeSpec("input", "Input", {}, ())], (1, 4, 4, 3))
    parsed = pydot.graph_from_dot_data(export_dot(g, infer_shapes(g)))[0]
    assert [n.get_name().strip('"') for n in parsed.get_nodes() if n.get_name() not in ("node", "edge")] == ["input"]


def test_dot_parses_and_is_deterministic():
    g = assemble(desk_config())
    text = export_dot(g, infer_shapes(g))
    assert text == export_dot(assemble(desk_config()), infer_shapes(g))
    parsed = pydot.graph_from_dot_data(text)[0]
    names = {n.get_name().strip('"') for n in parsed.get_nodes()} - {"node", "edge"}
    assert names == {n.id for n in g.nodes}
    assert len(parsed.get_edges()) == sum(len(n.inputs) for n in g.nodes)
