"""Immutable DAG description of a network."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from functools import cached_property

from ..errors import GraphError

KINDS = (
    "Input",
    "Conv",
    "MaxPool",
    "AvgPool",
    "BatchNorm",
    "ReLU",
    "Concat",
    "ResidualAdd",
    "GlobalAvgPool",
    "Dropout",
    "FullyConnected",
    "Softmax",
)

# Required number of inputs; None means "two or more".
ARITY = {kind: 1 for kind in KINDS}
ARITY.update({"Input": 0, "ResidualAdd": 2, "Concat": None})

PARAMETRIC = ("Conv", "BatchNorm", "FullyConnected")


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    params: dict = field(default_factory=dict, hash=False, compare=True)
    inputs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "params", dict(self.params))

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind, "params": self.params, "inputs": list(self.inputs)}

    @classmethod
    def from_json(cls, doc: dict) -> "NodeSpec":
        try:
            return cls(str(doc["id"]), str(doc["kind"]), dict(doc.get("params", {})),
                       tuple(str(i) for i in doc.get("inputs", ())))
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed node entry {doc!r}: {exc}") from exc


@dataclass(frozen=True)
class GraphSpec:
    nodes: tuple
    input_shape: tuple
    output_id: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    @cached_property
    def by_id(self) -> dict:
        return {n.id: n for n in self.nodes}

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self.by_id[node_id]
        except KeyError:
            raise GraphError(f"unknown node id {node_id!r}") from None

    @property
    def input_id(self) -> str:
        inputs = [n.id for n in self.nodes if n.kind == "Input"]
        if len(inputs) != 1:
            raise GraphError(f"graph must have exactly one Input node, found {len(inputs)}")
        return inputs[0]

    @cached_property
    def consumers(self) -> dict:
        out = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for src in n.inputs:
                if src in out:
                    out[src].append(n.id)
        return out

    @cached_property
    def order(self) -> tuple:
        """Topological order; ties resolved by position in ``nodes``."""
        position = {n.id: i for i, n in enumerate(self.nodes)}
        if len(position) != len(self.nodes):
            raise GraphError("duplicate node ids")
        pending = {}
        for n in self.nodes:
            missing = [src for src in n.inputs if src not in position]
            if missing:
                raise GraphError(f"node {n.id!r} references unknown inputs {missing}")
            pending[n.id] = len(set(n.inputs))
        ready = [position[i] for i, k in pending.items() if k == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            node = self.nodes[heapq.heappop(ready)]
            order.append(node.id)
            for dst in dict.fromkeys(self.consumers[node.id]):
                pending[dst] -= 1
                if pending[dst] == 0:
                    heapq.heappush(ready, position[dst])
        if len(order) != len(self.nodes):
            raise GraphError("graph contains a cycle")
        return tuple(order)

    def ancestors(self, node_id: str) -> set:
        seen, stack = set(), [node_id]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self.node(cur).inputs)
        return seen

    def find(self, kind: str) -> list:
        return [n for n in self.nodes if n.kind == kind]

    @property
    def logits_id(self) -> str:
        """Node whose output feeds the loss: the Softmax input if the graph ends in Softmax."""
        out = self.node(self.output_id)
        return out.inputs[0] if out.kind == "Softmax" else out.id

    def replace_nodes(self, nodes, output_id=None, input_shape=None) -> "GraphSpec":
        return GraphSpec(tuple(nodes), self.input_shape if input_shape is None else input_shape,
                         self.output_id if output_id is None else output_id)

    def to_json(self) -> dict:
        return {
            "nodes": [n.to_json() for n in self.nodes],
            "input_shape": list(self.input_shape),
            "output_id": self.output_id,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=False)

    @classmethod
    def from_json(cls, doc: dict) -> "GraphSpec":
        try:
            nodes = [NodeSpec.from_json(n) for n in doc["nodes"]]
            return cls(tuple(nodes), tuple(doc["input_shape"]), str(doc["output_id"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"malformed graph document: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "GraphSpec":
        return cls.from_json(json.loads(text))


def load_graph(path) -> GraphSpec:
    with open(path) as fh:
        return GraphSpec.loads(fh.read())


def save_graph(graph: GraphSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(graph.dumps())
        fh.write("\n")
