from .cost import FlopCount, ParamCount, ParamEntry, count_flops, count_params, depth, param_manifest
from .dot import export_dot
from .engine import ExecutionContext, backward, execute
from .shapes import infer_shapes
from .spec import GraphSpec, NodeSpec, load_graph, save_graph
from .validate import Violation, validate
