"""Freeze the shape maps of the full-size builders into tests/goldens/.

Re-run only after a deliberate architecture change; the test suite compares
fresh shape inference against these files.
"""
import json
from pathlib import Path

from incepkit.graph import infer_shapes
from incepkit.zoo import ArchConfig, ReductionAParams, assemble, build_reduction_a, stage_input_shapes

OUT = Path(__file__).resolve().parent.parent / "tests" / "goldens"


def shape_map(graph):
    return {k: list(v) for k, v in infer_shapes(graph).items()}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for variant in ("inception_v4", "inception_resnet_v1", "inception_resnet_v2"):
        doc = shape_map(assemble(ArchConfig(variant)))
        (OUT / f"{variant}.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        params = ReductionAParams.for_variant(variant)
        src = stage_input_shapes(ArchConfig(variant))["reduction_a"]
        red = shape_map(build_reduction_a(params, input_shape=src))
        (OUT / f"reduction_a_{variant}.json").write_text(json.dumps(red, indent=1, sort_keys=True) + "\n")
        print(variant, len(doc), "nodes")


if __name__ == "__main__":
    main()
