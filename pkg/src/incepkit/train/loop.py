"""Training loop, evaluation and the dead-network probe."""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError
from ..graph.cost import param_manifest
from ..graph.engine import backward, execute
from ..graph.spec import GraphSpec
from ..ops.head import softmax_cross_entropy
from .config import TrainConfig, lr_at
from .data import Dataset
from .optim import OptimizerState, apply_updates, ema_update

log = logging.getLogger(__name__)

DEAD_THRESHOLD = 1e-12
INIT_SCHEME = "he_normal(std=sqrt(2/fan_in)) kernels, zero biases, gamma=1, beta=0, moving_var=1"


def init_weights(graph: GraphSpec, seed=0, dtype=np.float32) -> dict:
    """Variance-scaling normal init; each array is drawn from its own name-keyed stream."""
    weights = {}
    for entry in param_manifest(graph):
        suffix = entry.name.rsplit("/", 1)[1]
        if suffix in ("kernel", "weights"):
            fan_in = int(np.prod(entry.shape[:-1]))
            rng = np.random.default_rng([int(seed), zlib.crc32(entry.name.encode())])
            value = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=entry.shape)
        elif suffix in ("gamma", "moving_var"):
            value = np.ones(entry.shape)
        else:
            value = np.zeros(entry.shape)
        weights[entry.name] = value.astype(dtype)
    return weights


def trainable_names(graph: GraphSpec) -> list:
    return [e.name for e in param_manifest(graph) if e.role == "trainable"]


def with_residual_scale(graph: GraphSpec, alpha: float) -> GraphSpec:
    nodes = [
        type(n)(n.id, n.kind, {**n.params, "alpha": alpha}, n.inputs) if n.kind == "ResidualAdd" else n
        for n in graph.nodes
    ]
    return graph.replace_nodes(nodes)


@dataclass
class RunReport:
    """Per-step rows plus final metrics. ``top1`` columns hold top-1 *error*."""

    rows: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    dead_network: bool = False
    dead_checks: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    HEADER = ("step", "epoch", "lr", "loss", "top1")

    def to_csv(self) -> str:
        lines = [",".join(self.HEADER)]
        for r in self.rows:
            lines.append(f"{r['step']},{r['epoch']!r},{r['lr']!r},{r['loss']!r},{r['top1']!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse_csv(text: str) -> list:
        lines = text.strip().splitlines()
        if tuple(lines[0].split(",")) != RunReport.HEADER:
            raise ValueError(f"unexpected RunReport header {lines[0]!r}")
        rows = []
        for line in lines[1:]:
            step, epoch, lr, loss, top1 = line.split(",")
            rows.append({"step": int(step), "epoch": float(epoch), "lr": float(lr),
                         "loss": float(loss), "top1": float(top1)})
        return rows

    def steps_to_threshold(self, threshold: float, window: int = 10):
        """First step at which the trailing-window mean of train top-1 error is <= threshold."""
        errs = [r["top1"] for r in self.rows]
        for i in range(window - 1, len(errs)):
            if np.mean(errs[i - window + 1 : i + 1]) <= threshold:
                return self.rows[i]["step"]
        return None


@dataclass
class TrainResult:
    weights: dict
    ema_weights: dict
    report: RunReport
    graph: GraphSpec


def _first_nonfinite(ctx):
    for node_id in ctx.order:
        value = ctx.outputs.get(node_id)
        if value is not None and not np.all(np.isfinite(value)):
            return node_id
    return None


def _top1_error(logits, labels):
    ranked = np.argsort(-logits, axis=1, kind="stable")
    return float(np.mean(ranked[:, 0] != labels))


def train(graph: GraphSpec, weights_init: dict, dataset: Dataset, config: TrainConfig,
          probe_batch=None, on_step=None) -> TrainResult:
    """Stochastic-gradient training with the configured optimizer and schedule.

    Each step: train-mode forward to the logits, softmax cross-entropy,
    backward, optimizer step at ``lr_at(epoch)``, BN running-stat update and
    EMA update of the trainable parameters. A dead-network probe runs after
    every completed epoch and once at the end. ``on_step(step, weights, report)``
    is called after each update. ``report.final`` holds top-1/top-k error of
    the raw and EMA weights on ``dataset`` in infer mode.
    """
    if config.residual_scale is not None:
        graph = with_residual_scale(graph, config.residual_scale)
    dtype = np.dtype(config.dtype)
    dataset = dataset.astype(dtype)
    weights = {k: np.asarray(v, dtype=dtype).copy() for k, v in weights_init.items()}
    names = trainable_names(graph)
    state = OptimizerState.create({k: weights[k] for k in names})
    steps_per_epoch = len(dataset) // config.batch_size
    if steps_per_epoch == 0:
        raise ValueError(f"dataset of {len(dataset)} samples is smaller than one batch of {config.batch_size}")
    total = config.epochs * steps_per_epoch if config.max_steps is None else config.max_steps
    if probe_batch is None:
        probe_batch = dataset.images[: config.batch_size]
    report = RunReport(metadata={"init": INIT_SCHEME, "steps_per_epoch": steps_per_epoch})
    logits_id = graph.logits_id

    step = 0
    epoch = 0
    while step < total:
        for xb, yb in dataset.batches(config.batch_size, epoch, config.seed):
            if step >= total:
                break
            epoch_pos = step / steps_per_epoch
            lr = lr_at(epoch_pos, config)
            logits, ctx = execute(graph, weights, xb, "train", seed=config.seed * 1_000_003 + step, target=logits_id)
            loss, grad = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                bad = _first_nonfinite(ctx)
                raise NumericalError(f"non-finite loss at step {step}; first non-finite output at node {bad!r}", bad)
            grads = backward(graph, ctx, grad.astype(dtype), weights, target=logits_id)
            updated = apply_updates({k: weights[k] for k in names}, grads, state, lr, config)
            weights.update(updated)
            weights.update(ctx.state_updates)
            state.shadow = ema_update(updated, state.shadow, config.ema_decay)
            report.rows.append({"step": step, "epoch": epoch_pos, "lr": lr, "loss": loss,
                                "top1": _top1_error(logits, yb)})
            step += 1
            if on_step is not None:
                on_step(step, weights, report)
        epoch += 1
        if step % steps_per_epoch == 0 or step >= total:
            dead = detect_dead_network(graph, weights, probe_batch)
            report.dead_checks.append({"epoch": epoch, "step": step, "dead": dead})
            report.dead_network = dead
            log.info("epoch %d step %d loss %.4f dead=%s", epoch, step, report.rows[-1]["loss"], dead)

    ema_weights = dict(weights)
    ema_weights.update(state.shadow)
    k = min(config.topk, dataset.num_classes)
    top1, topk = evaluate_topk(graph, weights, dataset, k)
    ema1, emak = evaluate_topk(graph, ema_weights, dataset, k)
    report.final = {"top1_error": top1, "topk_error": topk, "k": k,
                    "ema_top1_error": ema1, "ema_topk_error": emak, "steps": step}
    return TrainResult(weights, ema_weights, report, graph)


def _gap_input(graph: GraphSpec):
    pools = graph.find("GlobalAvgPool")
    if not pools:
        raise ValueError("graph has no GlobalAvgPool node")
    return pools[0].inputs[0]


def detect_dead_network(graph: GraphSpec, weights: dict, probe_batch) -> bool:
    """True iff every activation entering the global average pool is ~0."""
    features, _ = execute(graph, weights, probe_batch, "infer", target=_gap_input(graph))
    return bool(np.max(np.abs(features)) < DEAD_THRESHOLD)


def predict_logits(graph: GraphSpec, weights: dict, images, batch_size=64):
    out = []
    for start in range(0, len(images), batch_size):
        logits, _ = execute(graph, weights, images[start : start + batch_size], "infer", target=graph.logits_id)
        out.append(logits)
    return np.concatenate(out)


def topk_errors(logits, labels, k):
    """(top-1 error, top-k error); ties go to the lower class index."""
    if k > logits.shape[1]:
        raise ValueError(f"k={k} exceeds the number of classes {logits.shape[1]}")
    ranked = np.argsort(-logits, axis=1, kind="stable")
    labels = np.asarray(labels)
    top1 = float(np.mean(ranked[:, 0] != labels))
    topk = float(np.mean(~np.any(ranked[:, :k] == labels[:, None], axis=1)))
    return top1, topk


def evaluate_topk(graph: GraphSpec, weights: dict, dataset: Dataset, k=5, batch_size=64):
    if k > dataset.num_classes:
        raise ValueError(f"k={k} exceeds the number of classes {dataset.num_classes}")
    dtype = next(iter(weights.values())).dtype
    logits = predict_logits(graph, weights, dataset.images.astype(dtype), batch_size)
    return topk_errors(logits, dataset.labels, k)
