"""Graph rewrites: activation replacement, conv-BN folding, CSE and DCE."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..functional import is_pure
from ..graph import Graph, Node
from ..modules import Conv2d, Kind, resolve_path, set_at_path
from ..runtime import GraphModule
from ..tensor import Tensor


@dataclass
class PassReport:
    name: str
    nodes_before: int
    nodes_after: int = 0
    rewrites: int = 0
    notes: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"pass: {self.name}",
            f"nodes: {self.nodes_before} -> {self.nodes_after}",
            f"rewrites: {self.rewrites}",
        ]
        out += [f"note: {n}" for n in self.notes]
        return out

    def __str__(self):
        return "\n".join(self.lines())


def _graph_of(g) -> Graph:
    return g.graph if isinstance(g, GraphModule) else g


def _finish(report: PassReport, g, target) -> PassReport:
    report.nodes_after = len(g)
    if isinstance(target, GraphModule):
        target.recompile()
    return report


def replace_activation(g, old: str, new: str) -> PassReport:
    """Retarget every ``call_function old`` to ``new`` by insert/replace/erase."""
    graph = _graph_of(g)
    report = PassReport("replace_activation", len(graph))
    for n in graph.nodes:
        if n.op == "call_function" and n.target == old:
            with graph.inserting_after(n):
                new_n = graph.call_function(new, n.args, n.kwargs)
                n.replace_all_uses_with(new_n)
                graph.erase_node(n)
            report.rewrites += 1
    return _finish(report, graph, g)


@dataclass
class FusionCandidate:
    conv: Node
    bn: Node
    single_use: bool


def find_conv_bn(gm: GraphModule) -> list[FusionCandidate]:
    out = []
    for n in gm.graph.nodes:
        if n.op != "call_module" or not n.args or not isinstance(n.args[0], Node):
            continue
        src = n.args[0]
        if src.op != "call_module":
            continue
        bn, conv = resolve_path(gm, n.target), resolve_path(gm, src.target)
        if bn.kind is Kind.BATCHNORM2D and conv.kind is Kind.CONV2D:
            out.append(FusionCandidate(src, n, len(src.users) == 1))
    return out


def fold_conv_bn_weights(conv: Conv2d, bn) -> tuple[Tensor, Tensor]:
    """Folded (weight, bias) so that conv' == bn(conv) in inference mode."""
    w = conv.params["weight"].data
    cout = w.shape[0]
    b = conv.params["bias"].data if "bias" in conv.params else np.zeros(cout, np.float32)
    gamma, beta = bn.params["weight"].data, bn.params["bias"].data
    mean, var = bn.buffers["running_mean"].data, bn.buffers["running_var"].data
    factor = gamma / np.sqrt(var + np.float32(bn.config["eps"]))
    new_w = w * factor[:, None, None, None]
    new_b = (b - mean) * factor + beta
    return Tensor(new_w), Tensor(new_b)


def _fresh_child(gm: GraphModule, prefix: str) -> str:
    i = 0
    while f"{prefix}_{i}" in gm.children:
        i += 1
    return f"{prefix}_{i}"


def fuse_conv_bn(gm: GraphModule) -> PassReport:
    graph = gm.graph
    report = PassReport("fuse_conv_bn", len(graph))
    for cand in find_conv_bn(gm):
        if not cand.single_use:
            users = ", ".join(u.name for u in cand.conv.users)
            report.notes.append(f"skipped {cand.conv.name}->{cand.bn.name}: conv output also used by {users}")
            continue
        if cand.bn.kwargs or len(cand.bn.args) != 1:
            report.notes.append(f"skipped {cand.bn.name}: unexpected extra arguments")
            continue
        conv = resolve_path(gm, cand.conv.target)
        bn = resolve_path(gm, cand.bn.target)
        w, b = fold_conv_bn_weights(conv, bn)
        c = conv.config
        fused = Conv2d(c["in_channels"], c["out_channels"], c["kernel_size"], c["stride"], c["padding"])
        fused.weight, fused.bias = w, b
        path = _fresh_child(gm, "fused")
        set_at_path(gm, path, fused)
        cand.conv.target = path
        cand.bn.replace_all_uses_with(cand.conv)
        graph.erase_node(cand.bn)
        report.rewrites += 1
        report.notes.append(f"folded {cand.bn.target} into {path}")
    return _finish(report, graph, gm)


def _key(arg):
    # duplicates are rewritten as we go, so node identity is already canonical
    if isinstance(arg, Node):
        return ("node", id(arg))
    if isinstance(arg, (tuple, list)):
        return ("seq", tuple(_key(a) for a in arg))
    if isinstance(arg, dict):
        return ("map", tuple((k, _key(v)) for k, v in arg.items()))
    # keep 1, 1.0, True and 0.0, -0.0 apart
    if isinstance(arg, float):
        return ("float", repr(arg))
    return (type(arg).__name__, arg)


def eliminate_common_subexpressions(g) -> PassReport:
    graph = _graph_of(g)
    report = PassReport("eliminate_common_subexpressions", len(graph))
    seen: dict[tuple, Node] = {}
    for n in graph.nodes:
        if n.op not in ("call_function", "call_method", "get_attr") or not is_pure(n.op, n.target):
            continue
        key = (n.op, n.target, _key(n.args), _key(n.kwargs))
        first = seen.get(key)
        if first is None:
            seen[key] = n
            continue
        n.replace_all_uses_with(first)
        graph.erase_node(n)
        report.rewrites += 1
    return _finish(report, graph, g)


def eliminate_dead_code(g) -> PassReport:
    graph = _graph_of(g)
    report = PassReport("eliminate_dead_code", len(graph))
    changed = True
    while changed:
        changed = False
        for n in reversed(graph.nodes):
            if n.op in ("placeholder", "output") or n.users or not is_pure(n.op, n.target):
                continue
            graph.erase_node(n)
            report.rewrites += 1
            changed = True
    return _finish(report, graph, g)
