"""Forward analyses over a graph: shapes, FLOPs, memory traffic, DOT drawing.

Each analysis is one sweep in graph order with a per-op transfer function.
FLOP convention: a multiply-add counts as 2; elementwise ops (gelu included)
count 1 per output element.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from ..errors import ShapeConflict, UnknownTransfer
from ..graph import Node, iter_nodes
from ..modules import Kind, Module, resolve_path
from ..runtime import GraphModule, liveness
from ..tensor import DType, Tensor, conv_output_size

Shape = tuple[int, ...]


@dataclass(frozen=True)
class TensorMeta:
    shape: Shape
    dtype: DType = DType.F32

    @property
    def numel(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.numel * self.dtype.itemsize


def _meta(v) -> TensorMeta | None:
    return v if isinstance(v, TensorMeta) else None


def _need(v, what: str) -> TensorMeta:
    if not isinstance(v, TensorMeta):
        raise ShapeConflict(f"{what} expects a tensor, got {v!r}")
    return v


def _elementwise(a, b=None):
    if b is None:
        return _meta(a)
    ma, mb = _meta(a), _meta(b)
    if ma and mb:
        if ma.shape != mb.shape:
            raise ShapeConflict(f"elementwise shapes {list(ma.shape)} and {list(mb.shape)} differ")
        return ma
    return ma or mb


def _linear_shape(x, w, what="linear") -> Shape:
    x, w = _need(x, what), _need(w, what)
    if len(x.shape) != 2 or len(w.shape) != 2 or x.shape[1] != w.shape[1]:
        raise ShapeConflict(f"{what}: {list(x.shape)} vs weight {list(w.shape)}")
    return (x.shape[0], w.shape[0])


def _pair(v) -> tuple[int, int]:
    return (int(v[0]), int(v[1])) if isinstance(v, (tuple, list)) else (int(v), int(v))


def _conv_shape(x, wshape: Shape, stride, padding) -> Shape:
    x = _need(x, "conv2d")
    if len(x.shape) != 4 or len(wshape) != 4 or x.shape[1] != wshape[1]:
        raise ShapeConflict(f"conv2d: {list(x.shape)} vs weight {list(wshape)}")
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)
    n, _, h, w = x.shape
    hout, wout = conv_output_size(h, wshape[2], sh, ph), conv_output_size(w, wshape[3], sw, pw)
    if hout < 1 or wout < 1:
        raise ShapeConflict(f"conv2d output would be {hout}x{wout}")
    return (n, wshape[0], hout, wout)


def _cat(tensors, dim=0):
    metas = [_need(t, "cat") for t in tensors]
    rank = len(metas[0].shape)
    dim %= rank
    out = list(metas[0].shape)
    for m in metas[1:]:
        if len(m.shape) != rank or any(m.shape[i] != out[i] for i in range(rank) if i != dim):
            raise ShapeConflict(f"cat: incompatible shapes {[list(x.shape) for x in metas]}")
        out[dim] += m.shape[dim]
    return TensorMeta(tuple(out), metas[0].dtype)


def _reshape(x, *dims):
    x = _need(x, "reshape")
    if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
        dims = tuple(dims[0])
    if not all(isinstance(d, int) and not isinstance(d, bool) for d in dims):
        raise UnknownTransfer("reshape with dims computed at runtime")
    dims = list(dims)
    if dims.count(-1) == 1:
        rest = math.prod(d for d in dims if d != -1)
        dims[dims.index(-1)] = x.numel // rest if rest else 0
    if math.prod(dims) != x.numel:
        raise ShapeConflict(f"reshape {list(x.shape)} -> {dims}")
    return TensorMeta(tuple(dims), x.dtype)


def _scalar(*_, **__):
    return None


FUNCTION_TRANSFERS: dict[str, Callable] = {
    "add": _elementwise,
    "mul": _elementwise,
    "neg": _elementwise,
    "relu": _elementwise,
    "gelu": _elementwise,
    "matmul": lambda a, b: TensorMeta(_linear_shape(a, TensorMeta(tuple(reversed(_need(b, "matmul").shape))), "matmul")),
    "cat": _cat,
    "reshape": _reshape,
    "linear": lambda x, w, b=None: TensorMeta(_linear_shape(x, w)),
    "conv2d": lambda x, w, b=None, stride=(1, 1), padding=(0, 0): TensorMeta(
        _conv_shape(x, _need(w, "conv2d").shape, stride, padding)),
    "batch_norm2d": lambda x, *rest: _need(x, "batch_norm2d"),
    "quantize_affine": lambda x, scale, zp: TensorMeta(_need(x, "quantize_affine").shape, DType.I8),
    "dequantize_affine": lambda x: TensorMeta(_need(x, "dequantize_affine").shape, DType.F32),
    "quantized_linear": lambda x, w, b, s, z: TensorMeta(_linear_shape(x, w, "quantized_linear"), DType.I8),
    "quantized_conv2d": lambda x, w, b, s, z, stride=(1, 1), padding=(0, 0): TensorMeta(
        _conv_shape(x, _need(w, "quantized_conv2d").shape, stride, padding), DType.I8),
    "getitem": _scalar,
    "gt": _scalar,
    "lt": _scalar,
    "ge": _scalar,
    "le": _scalar,
}

METHOD_TRANSFERS: dict[str, Callable] = {
    "neg": _elementwise,
    "relu": _elementwise,
    "gelu": _elementwise,
    "reshape": _reshape,
    "shape": _scalar,
    "ndim": _scalar,
}


def _module_transfer(mod: Module, args, kwargs):
    k = mod.kind
    c = mod.config
    if k in (Kind.LINEAR, Kind.QUANTIZED_LINEAR):
        x = _need(args[0], k.value)
        if len(x.shape) != 2 or x.shape[1] != c["in_features"]:
            raise ShapeConflict(f"{k.value} expects [N, {c['in_features']}], got {list(x.shape)}")
        return TensorMeta((x.shape[0], c["out_features"]), DType.I8 if k is Kind.QUANTIZED_LINEAR else DType.F32)
    if k in (Kind.CONV2D, Kind.QUANTIZED_CONV2D):
        wshape = (c["out_channels"], c["in_channels"], *c["kernel_size"])
        shape = _conv_shape(args[0], wshape, c["stride"], c["padding"])
        return TensorMeta(shape, DType.I8 if k is Kind.QUANTIZED_CONV2D else DType.F32)
    if k is Kind.BATCHNORM2D:
        x = _need(args[0], "BatchNorm2d")
        if len(x.shape) != 4 or x.shape[1] != c["num_features"]:
            raise ShapeConflict(f"BatchNorm2d({c['num_features']}) got {list(x.shape)}")
        return x
    if k in (Kind.RELU, Kind.GELU, Kind.OBSERVER):
        return _need(args[0], k.value)
    raise UnknownTransfer(k.value)


def _composite_graph(mod: Module) -> GraphModule:
    if isinstance(mod, GraphModule):
        return mod
    from ..tracer import symbolic_trace

    return symbolic_trace(mod)


def _input_meta(s) -> TensorMeta:
    if isinstance(s, TensorMeta):
        return s
    return TensorMeta(tuple(int(d) for d in s))


def propagate_meta(gm: GraphModule, input_shapes, *, on_visit: Callable[[Node], None] | None = None
                   ) -> dict[Node, TensorMeta | None]:
    """One forward sweep assigning every node its tensor metadata (``None`` for non-tensors)."""
    metas = [_input_meta(s) for s in input_shapes]
    phs = gm.graph.placeholders
    env: dict[Node, TensorMeta | None] = {}

    def load(a):
        if isinstance(a, Node):
            return env[a]
        if isinstance(a, tuple):
            return tuple(load(x) for x in a)
        if isinstance(a, dict):
            return {k: load(v) for k, v in a.items()}
        return a

    for n in gm.graph.nodes:
        if on_visit is not None:
            on_visit(n)
        try:
            if n.op == "placeholder":
                i = phs.index(n)
                if i >= len(metas):
                    raise ShapeConflict(f"no input shape for placeholder {n.name!r}")
                out = metas[i]
            elif n.op == "get_attr":
                v = resolve_path(gm, n.target)
                if not isinstance(v, Tensor):
                    raise UnknownTransfer(f"get_attr {n.target} is not a tensor")
                out = TensorMeta(tuple(v.shape), v.dtype)
            elif n.op == "call_function":
                fn = FUNCTION_TRANSFERS.get(n.target)
                if fn is None:
                    raise UnknownTransfer(n.target)
                out = fn(*load(n.args), **load(n.kwargs))
            elif n.op == "call_method":
                fn = METHOD_TRANSFERS.get(n.target)
                if fn is None:
                    raise UnknownTransfer(n.target)
                out = fn(*load(n.args), **load(n.kwargs))
            elif n.op == "call_module":
                mod = resolve_path(gm, n.target)
                if mod.kind in (Kind.SEQUENTIAL, Kind.USER, Kind.GRAPH_MODULE):
                    sub = _composite_graph(mod)
                    inner = propagate_meta(sub, list(load(n.args)))
                    out = inner[sub.graph.output_node]
                else:
                    out = _module_transfer(mod, load(n.args), load(n.kwargs))
            else:
                out = load(n.args[0])
        except (ShapeConflict, UnknownTransfer) as e:
            if e.node is None:
                e.node = n.name
            raise
        env[n] = out
        n.meta["shape"] = out.shape if isinstance(out, TensorMeta) else None
        n.meta["dtype"] = out.dtype if isinstance(out, TensorMeta) else None
    return env


def propagate_shapes(gm: GraphModule, input_shapes, *, on_visit=None) -> dict[str, Shape | None]:
    env = propagate_meta(gm, input_shapes, on_visit=on_visit)
    return {n.name: (m.shape if m is not None else None) for n, m in env.items()}


def _linear_flops(n: int, m: int, k: int) -> int:
    return 2 * n * m * k


def _node_flops(gm: GraphModule, n: Node, env) -> int:
    out = env[n]
    numel = out.numel if isinstance(out, TensorMeta) else 0
    if n.op in ("placeholder", "get_attr", "output"):
        return 0
    args = [env[a] if isinstance(a, Node) else a for a in n.args]
    if n.op in ("call_function", "call_method"):
        t = n.target
        if t in ("add", "mul", "neg", "relu", "gelu", "quantize_affine", "dequantize_affine"):
            return numel
        if t in ("linear", "quantized_linear"):
            x, w = args[0], args[1]
            return _linear_flops(x.shape[0], w.shape[0], x.shape[1])
        if t == "matmul":
            return _linear_flops(args[0].shape[0], args[1].shape[1], args[0].shape[1])
        if t in ("conv2d", "quantized_conv2d"):
            w = args[1].shape
            return 2 * numel * w[1] * w[2] * w[3]
        if t == "batch_norm2d":
            return 2 * numel
        return 0
    mod = resolve_path(gm, n.target)
    k, c = mod.kind, mod.config
    if k in (Kind.LINEAR, Kind.QUANTIZED_LINEAR):
        return _linear_flops(out.shape[0], c["out_features"], c["in_features"])
    if k in (Kind.CONV2D, Kind.QUANTIZED_CONV2D):
        kh, kw = c["kernel_size"]
        return 2 * numel * c["in_channels"] * kh * kw
    if k is Kind.BATCHNORM2D:
        return 2 * numel
    if k in (Kind.RELU, Kind.GELU):
        return numel
    if k is Kind.OBSERVER:
        return 0
    sub = _composite_graph(mod)
    _, total = estimate_flops(sub, [a for a in args])
    return total


def estimate_flops(gm: GraphModule, input_shapes, *, on_visit=None) -> tuple[dict[str, int], int]:
    env = propagate_meta(gm, input_shapes, on_visit=on_visit)
    per = {n.name: _node_flops(gm, n, env) for n in gm.graph.nodes}
    for n in gm.graph.nodes:
        n.meta["flops"] = per[n.name]
    return per, sum(per.values())


@dataclass(frozen=True)
class MemoryEstimate:
    bytes_read: dict[str, int]
    bytes_written: dict[str, int]
    peak_live_bytes: int


def estimate_memory(gm: GraphModule, input_shapes, *, on_visit=None) -> MemoryEstimate:
    env = propagate_meta(gm, input_shapes, on_visit=on_visit)
    nodes = gm.graph.nodes

    def size(n: Node) -> int:
        m = env[n]
        return m.nbytes if isinstance(m, TensorMeta) else 0

    read, written = {}, {}
    for n in nodes:
        if n.op in ("placeholder", "output"):
            r = w = 0
        else:
            r = sum(size(ref) for ref in n.all_input_nodes)
            if n.op == "call_module":
                mod = resolve_path(gm, n.target)
                r += sum(m.state_nbytes() for _, m in mod.named_modules())
            w = size(n)
        read[n.name], written[n.name] = r, w
        n.meta["bytes_read"], n.meta["bytes_written"] = r, w

    # replay the interpreter's liveness schedule
    free = liveness(gm.graph)
    by_name = {n.name: n for n in nodes}
    live = peak = 0
    for i, n in enumerate(nodes):
        if n.op != "output":
            live += size(n)
        peak = max(peak, live)
        for name in free[i]:
            live -= size(by_name[name])
    return MemoryEstimate(read, written, peak)


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def emit_dot(gm) -> str:
    graph = gm.graph if isinstance(gm, GraphModule) else gm
    lines = [f'digraph "{_dot_escape(graph.name)}" {{', "  node [shape=box];"]
    for n in graph.nodes:
        label = f"{_dot_escape(n.name)}\\n{n.op} {_dot_escape(n.target)}"
        lines.append(f'  "{_dot_escape(n.name)}" [label="{label}"];')
    for n in graph.nodes:
        for ref in iter_nodes((n.args, n.kwargs)):
            lines.append(f'  "{_dot_escape(ref.name)}" -> "{_dot_escape(n.name)}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def analysis_table(gm: GraphModule, input_shapes) -> str:
    """Aligned ``<node> <shape> <flops> <bytes>`` rows; bytes is read + written."""
    per_flops, total = estimate_flops(gm, input_shapes)
    mem = estimate_memory(gm, input_shapes)
    rows = [("node", "shape", "flops", "bytes")]
    for n in gm.graph.nodes:
        shape = n.meta.get("shape")
        rows.append((
            n.name,
            "-" if shape is None else "[" + ",".join(map(str, shape)) + "]",
            str(per_flops[n.name]),
            str(mem.bytes_read[n.name] + mem.bytes_written[n.name]),
        ))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    out = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    out.append(f"total flops: {total}")
    out.append(f"peak live bytes: {mem.peak_live_bytes}")
    return "\n".join(out)
