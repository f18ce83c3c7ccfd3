from __future__ import annotations

from .spec import GraphSpec


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _fmt_shape(shape) -> str:
    return "x".join(str(d) for d in shape[1:]) if len(shape) > 1 else str(shape[0])


def _describe(node) -> str:
    p = node.params
    if node.kind == "Conv":
        kh, kw = p["kernel"]
        sh, sw = p.get("stride", (1, 1))
        extra = " V" if p.get("padding") == "valid" else ""
        act = "" if p.get("activation", "none") == "relu" else " linear"
        return f"Conv {kh}x{kw}/{sh}x{sw} ({p['out_channels']}{extra}{act})"
    if node.kind in ("MaxPool", "AvgPool"):
        kh, kw = p["kernel"]
        return f"{node.kind} {kh}x{kw}" + (" V" if p.get("padding", "valid") == "valid" else "")
    if node.kind == "ResidualAdd":
        return f"ResidualAdd alpha={p.get('alpha', 1.0)}"
    if node.kind == "Dropout":
        return f"Dropout keep={p.get('keep_prob')}"
    if node.kind == "FullyConnected":
        return f"FullyConnected ({p['units']})"
    return node.kind


def export_dot(graph: GraphSpec, shapes=None, name="network") -> str:
    """Graphviz DOT text: one node per NodeSpec labelled with kind and shape."""
    lines = [f"digraph {_quote(name)} {{", "  rankdir=TB;", "  node [shape=box, fontsize=10];"]
    for node in graph.nodes:
        label = f"{node.id}\\n{_describe(node)}"
        if shapes is not None and node.id in shapes:
            label += f"\\n{_fmt_shape(shapes[node.id])}"
        lines.append(f"  {_quote(node.id)} [label=\"{label.replace(chr(34), chr(39))}\"];")
    for node in graph.nodes:
        for src in node.inputs:
            lines.append(f"  {_quote(src)} -> {_quote(node.id)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
