"""Oracle run that fixes the desk-scale training budget.

Trains the desk-scale Inception-ResNet-v2 on the synthetic task and logs the
full-training-set top-1 error (infer mode, raw weights) every 50 steps, plus
held-out accuracy of both the convnet and the linear pixel baseline.
"""
import argparse
import json
import time
from pathlib import Path

from incepkit.train import TrainConfig, evaluate_topk, init_weights, linear_baseline_accuracy, synthetic_dataset, train
from incepkit.zoo import assemble, desk_config


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=800)
    parser.add_argument("--out", default="results/desk_oracle.json")
    args = parser.parse_args()

    graph = assemble(desk_config())
    data = synthetic_dataset(10, 40, 75, seed=0)
    held_out = synthetic_dataset(10, 40, 75, seed=1)
    curve = []
    start = time.time()

    def on_step(step, weights, report):
        if step % 50 == 0:
            top1, _ = evaluate_topk(graph, weights, data, 5)
            curve.append({"step": step, "train_top1_error": top1, "seconds": round(time.time() - start, 1)})
            print(curve[-1], flush=True)

    result = train(graph, init_weights(graph, 0), data, TrainConfig(max_steps=args.steps), on_step=on_step)
    summary = {
        "curve": curve,
        "first_step_below_5pct": next((c["step"] for c in curve if c["train_top1_error"] < 0.05), None),
        "held_out_top1_error": evaluate_topk(graph, result.weights, held_out, 5)[0],
        "linear_baseline_held_out_accuracy": linear_baseline_accuracy(data, held_out),
        "seconds_per_step": (time.time() - start) / args.steps,
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({k: v for k, v in summary.items() if k != "curve"}, indent=2))


if __name__ == "__main__":
    main()
