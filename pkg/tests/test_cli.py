import json

import numpy as np
import pytest

from incepkit import cli
from incepkit.graph import count_flops, count_params, engine, load_graph, save_graph
from incepkit.tensor import write_tbin
from incepkit.train import RunReport, TrainConfig, lr_at
from incepkit.zoo import build_inception_block, desk_config

TINY_RUN = {
    "arch": {"variant": "ir2", "width_multiplier": 0.125, "num_classes": 3},
    "data": {"samples_per_class": 4, "seed": 0},
    "batch_size": 4,
    "max_steps": 4,
    "lr_decay_epochs": 1,
    "ema_decay": 0.9,
}


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr().out


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    d = tmp_path_factory.mktemp("build")
    assert cli.main(["build", "--arch", "ir1", "--out", str(d / "ir1.json"), "--dot", str(d / "ir1.dot")]) == 0
    return d / "ir1.json"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    (d / "run.json").write_text(json.dumps(TINY_RUN))
    assert cli.main(["train", "--config", str(d / "run.json"), "--out", str(d / "out")]) == 0
    return d


def test_build_summary_matches_library(built, capsys):
    graph = load_graph(built)
    params, macs = count_params(graph).total, count_flops(graph).total
    code, out = run(["build", "--arch", "ir1"], capsys)
    assert code == 0
    assert f"params={params} " in out and f"macs={macs} " in out
    assert built.with_suffix(".dot").read_text().startswith("digraph")


def test_build_bad_inputs(tmp_path, capsys):
    assert run(["build", "--arch", "v4", "--width", "0.001"], capsys)[0] == 2
    assert run(["build", "--arch", "nope"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"variant": ')
    assert run(["build", "--config", bad], capsys)[0] == 2
    assert run(["build", "--arch", "v4", "--out", tmp_path / "missing" / "g.json"], capsys)[0] == 1


def test_unknown_command_is_bad_input(capsys):
    assert cli.main(["frobnicate"]) == 2


def test_check_and_summarize(built, tmp_path, capsys):
    code, out = run(["check", built], capsys)
    assert code == 0 and "0 violation(s) [inception_resnet]" in out
    graph = load_graph(built)
    code, out = run(["summarize", built], capsys)
    p = count_params(graph)
    assert code == 0
    assert out.strip() == (f"total params={p.total} non_trainable={p.non_trainable} "
                           f"macs={count_flops(graph).total} elementwise={count_flops(graph).elementwise}")
    code, out = run(["summarize", built, "--per-node"], capsys)
    lines = out.splitlines()
    assert lines[0].split() == ["node", "kind", "output", "params", "macs"]
    assert sum(int(line.split()[3]) for line in lines[1:-1]) == p.total


def test_check_reports_violation(built, tmp_path, capsys):
    doc = json.loads(built.read_text())
    for node in doc["nodes"]:
        if node["kind"] == "ResidualAdd":
            node["inputs"] = node["inputs"][::-1][:1] + node["inputs"][:1]
            break
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    code, out = run(["check", broken], capsys)
    assert code == 1 and "violation(s)" in out
    assert run(["check", tmp_path / "nothing.json"], capsys)[0] == 2
    (tmp_path / "junk.json").write_text("{")
    assert run(["summarize", tmp_path / "junk.json"], capsys)[0] == 2


def test_train_writes_reports(trained):
    out = trained / "out"
    rows = RunReport.parse_csv((out / "report.csv").read_text())
    assert [r["step"] for r in rows] == [0, 1, 2, 3]
    config = TrainConfig.from_json({k: v for k, v in TINY_RUN.items() if k not in ("arch", "data")})
    assert all(r["lr"] == lr_at(r["epoch"], config) for r in rows)
    side = json.loads((out / "report.json").read_text())
    assert side["dead_network"] is False and side["final"]["steps"] == 4
    assert (out / "checkpoint" / "manifest.json").exists()
    assert (out / "checkpoint" / "manifest_ema.json").exists()


def test_train_is_byte_reproducible(trained, capsys):
    code, _ = run(["train", "--config", trained / "run.json", "--out", trained / "again"], capsys)
    assert code == 0
    assert (trained / "again" / "report.csv").read_bytes() == (trained / "out" / "report.csv").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exits_3(tmp_path, capsys):
    doc = {**TINY_RUN, "base_lr": 1e30}
    (tmp_path / "run.json").write_text(json.dumps(doc))
    code, _ = run(["train", "--config", tmp_path / "run.json", "--out", tmp_path / "out"], capsys)
    assert code == 3


def test_train_bad_config(tmp_path, capsys):
    (tmp_path / "run.json").write_text(json.dumps({**TINY_RUN, "optimiser": "sgd"}))
    assert run(["train", "--config", tmp_path / "run.json", "--out", tmp_path / "o"], capsys)[0] == 2


def test_infer(trained, tmp_path, capsys):
    out = trained / "out"
    x = np.random.default_rng(0).standard_normal((3, 75, 75, 3)).astype(np.float32)
    write_tbin(tmp_path / "x.tbin", x)
    argv = ["infer", out / "graph.json", "--weights", out / "checkpoint" / "manifest.json",
            "--input", tmp_path / "x.tbin", "--top", 5]
    code, first = run(argv, capsys)
    assert code == 0
    assert run(argv, capsys)[1] == first
    lines = first.splitlines()
    assert len(lines) == 3
    for line in lines:
        probs = [float(tok.split(":")[1]) for tok in line.split(": ", 1)[1].split()]
        assert len(probs) == 3 and sum(probs) == pytest.approx(1.0, abs=1e-5)
        assert probs == sorted(probs, reverse=True)
    code, ema = run(argv + ["--ema"], capsys)
    assert code == 0 and ema != first
    write_tbin(tmp_path / "bad.tbin", x[:, :40])
    assert run(argv[:-4] + ["--input", tmp_path / "bad.tbin"], capsys)[0] == 2


def test_gradcheck_all_ops(capsys):
    code, out = run(["gradcheck", "--all-ops", "--instances", 3], capsys)
    assert code == 0
    assert len(out.splitlines()) == 11 and "FAIL" not in out
    code, out = run(["gradcheck", "--all-ops", "--instances", 3, "--tolerance", 0], capsys)
    assert code == 1 and "FAIL" in out


def test_gradcheck_catches_broken_backward(monkeypatch, capsys):
    fwd, bwd = engine.KERNELS["ReLU"]

    def wrong(node, g, xs, y, cache, weights, mode):
        grads, params = bwd(node, g, xs, y, cache, weights, mode)
        return [gi * 1.01 for gi in grads], params

    monkeypatch.setitem(engine.KERNELS, "ReLU", (fwd, wrong))
    code, out = run(["gradcheck", "--all-ops", "--instances", 2], capsys)
    assert code == 1
    assert "FAIL ReLU" in out and "coordinate=" in out


def test_gradcheck_graph(tmp_path, capsys):
    # a whole 75x75 network crosses ReLU/max-pool kinks under h=1e-5, so check one block
    block = build_inception_block("inception_resnet_v2", "A35", desk_config(), input_shape=(1, 5, 5, 32))
    save_graph(block, tmp_path / "block.json")
    code, out = run(["gradcheck", "--graph", tmp_path / "block.json", "--samples", 3, "--batch", 2], capsys)
    assert code == 0, out
    assert "Conv" in out and "Input" in out


def test_experiments_record_outputs(tmp_path):
    summary = cli.residual_vs_plain(tmp_path / "rvp", steps=2, width=0.125, samples_per_class=4)
    assert (tmp_path / "rvp" / "plain.csv").exists() and (tmp_path / "rvp" / "residual.csv").exists()
    assert set(summary["runs"]) == {"plain", "residual"}
    assert summary["faster"] in ("plain", "residual", "tie", "neither reached threshold")
    rows = cli.scaling_sweep(tmp_path / "sweep", steps=1, samples_per_class=4, widths=(0.125,))
    assert len(rows) == 3
    text = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert text[0] == ",".join(cli.SWEEP_COLUMNS) and len(text) == 4
    assert all(line.rsplit(",", 1)[1] in ("True", "False") for line in text[1:])
