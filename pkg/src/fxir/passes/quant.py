"""Post-training int8 quantization.

``prepare`` instruments a copy of the model with observers and ``calibrate``
feeds data through it; ``convert`` then swaps linear and conv modules for int8
versions. Activations get per-tensor affine params from the observed range,
weights get symmetric per-tensor params. The int8 kernels are simulated: they
compute in float between a dequantize and a requantize.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UncalibratedObserver
from ..graph import Node
from ..modules import Kind, Observer, QuantizedConv2d, QuantizedLinear, resolve_path, set_at_path
from ..runtime import GraphModule, interpret
from ..tensor import DType, QuantParams, Tensor, quantize_affine, round_half_away


@dataclass(frozen=True)
class QuantConfig:
    activation_range: tuple[int, int] = (-128, 127)
    weight_qmax: int = 127
    quantizable: frozenset = field(default_factory=lambda: frozenset({Kind.LINEAR, Kind.CONV2D}))
    scale_floor: float = 1e-8

    def __post_init__(self):
        if not self.scale_floor > 0:
            raise ValueError("scale_floor must be positive")


def activation_qparams(running_min: float, running_max: float, cfg: QuantConfig = QuantConfig()) -> QuantParams:
    qmin, qmax = cfg.activation_range
    scale = max(cfg.scale_floor, running_max - running_min) / (qmax - qmin)
    zp = float(round_half_away(np.float64(qmin - running_min / scale)))
    return QuantParams(scale, int(min(max(zp, qmin), qmax)))


def weight_qparams(w: Tensor, cfg: QuantConfig = QuantConfig()) -> QuantParams:
    amax = float(np.max(np.abs(w.data))) if w.numel else 0.0
    return QuantParams(max(cfg.scale_floor, amax) / cfg.weight_qmax, 0)


def _fresh(gm: GraphModule, prefix: str) -> str:
    i = 0
    while f"{prefix}_{i}" in gm.children:
        i += 1
    return f"{prefix}_{i}"


def _module_kind(gm: GraphModule, n: Node):
    if n.op != "call_module":
        return None
    return resolve_path(gm, n.target).kind


def observer_nodes(gm: GraphModule) -> list[Node]:
    return [n for n in gm.graph.nodes if _module_kind(gm, n) is Kind.OBSERVER]


def prepare(gm: GraphModule, cfg: QuantConfig = QuantConfig()) -> GraphModule:
    """Copy of ``gm`` with one observer on every input/output value of a quantizable module."""
    if observer_nodes(gm):
        return gm
    new = gm.copy_tree()
    g = new.graph
    values: dict[Node, None] = {}
    for n in g.nodes:
        if _module_kind(new, n) in cfg.quantizable:
            if n.args and isinstance(n.args[0], Node):
                values.setdefault(n.args[0])
            values.setdefault(n)
    for v in [n for n in g.nodes if n in values]:
        path = _fresh(new, "observer")
        set_at_path(new, path, Observer(v.name))
        if v.op == "placeholder":
            anchor = next(n for n in g.nodes if n.op != "placeholder")
            scope = g.inserting_before(anchor)
        else:
            scope = g.inserting_after(v)
        with scope:
            obs = g.call_module(path, (v,))
        v.replace_all_uses_with(obs, skip={obs})
    new.recompile()
    return new


def calibrate(gm: GraphModule, batches) -> list:
    """Run every batch through the instrumented graph; returns the outputs."""
    batches = list(batches)
    if not batches:
        raise ValueError("calibration needs at least one batch")
    outs = []
    for b in batches:
        outs.append(interpret(gm, b if isinstance(b, (list, tuple)) else [b]))
    return outs


def observer_table(gm: GraphModule) -> list[tuple[str, Observer]]:
    return [(resolve_path(gm, n.target).config["value"], resolve_path(gm, n.target)) for n in observer_nodes(gm)]


def dump_observer_table(gm: GraphModule) -> str:
    lines = [
        f"{name} min={obs.running_min!r} max={obs.running_max!r} n={obs.samples_seen}"
        for name, obs in observer_table(gm)
    ]
    return "\n".join(lines)


def convert(prepared: GraphModule, cfg: QuantConfig = QuantConfig()) -> GraphModule:
    gm = prepared.copy_tree()
    g = gm.graph
    obs_qp: dict[Node, QuantParams] = {}
    for n in observer_nodes(gm):
        obs = resolve_path(gm, n.target)
        if obs.samples_seen < 1 or not math.isfinite(obs.running_min) or not math.isfinite(obs.running_max):
            raise UncalibratedObserver(f"observer on value {obs.config['value']!r} has seen no data")
        obs_qp[n] = activation_qparams(obs.running_min, obs.running_max, cfg)

    quantize_of: dict[Node, Node] = {}
    for n in [m for m in g.nodes if _module_kind(gm, m) in cfg.quantizable]:
        src = n.args[0] if n.args else None
        outs = [u for u in n.users if u in obs_qp]
        if src not in obs_qp or len(outs) != 1 or len(n.args) != 1 or n.kwargs:
            continue
        in_qp, out_qp = obs_qp[src], obs_qp[outs[0]]
        mod = resolve_path(gm, n.target)
        w = mod.params["weight"]
        wq = quantize_affine(w, weight_qparams(w, cfg))
        bias = mod.params.get("bias")
        if mod.kind is Kind.LINEAR:
            qmod = QuantizedLinear(wq, bias, out_qp)
        else:
            qmod = QuantizedConv2d(wq, bias, out_qp, mod.config["stride"], mod.config["padding"])
        path = _fresh(gm, "quantized")
        set_at_path(gm, path, qmod)
        with g.inserting_before(n):
            if src not in quantize_of:
                quantize_of[src] = g.call_function("quantize_affine", (src, in_qp.scale, in_qp.zero_point))
            qn = g.call_module(path, (quantize_of[src],))
            dq = g.call_function("dequantize_affine", (qn,))
        n.replace_all_uses_with(dq)
        g.erase_node(n)

    for n in obs_qp:
        n.replace_all_uses_with(n.args[0])
        g.erase_node(n)

    # dequantize -> quantize with identical params between two quantized ops is the identity
    for q in list(quantize_of.values()):
        d = q.args[0]
        if not (d.op == "call_function" and d.target == "dequantize_affine"):
            continue
        producer = d.args[0]
        pk = _module_kind(gm, producer)
        if pk not in (Kind.QUANTIZED_LINEAR, Kind.QUANTIZED_CONV2D):
            continue
        pc = resolve_path(gm, producer.target).config
        if (pc["scale"], pc["zero_point"]) != (q.args[1], q.args[2]):
            continue
        q.replace_all_uses_with(producer)
        g.erase_node(q)
        if not d.users:
            g.erase_node(d)
    gm.recompile()
    return gm


_I8_FUNCTIONS = {"quantize_affine", "quantized_linear", "quantized_conv2d"}
_I8_CONSUMERS = {"dequantize_affine", "quantized_linear", "quantized_conv2d"}


def _produces_i8(gm: GraphModule, n: Node) -> bool:
    if n.op == "call_function":
        return n.target in _I8_FUNCTIONS
    if n.op == "call_module":
        return resolve_path(gm, n.target).kind in (Kind.QUANTIZED_LINEAR, Kind.QUANTIZED_CONV2D)
    if n.op == "get_attr":
        v = resolve_path(gm, n.target)
        return isinstance(v, Tensor) and v.dtype is DType.I8
    return False


def check_quant_dataflow(gm: GraphModule) -> list[str]:
    """Violations where an i8 value reaches something other than a quantized consumer."""
    out = []
    for n in gm.graph.nodes:
        if not _produces_i8(gm, n):
            continue
        for u in n.users:
            if u.op == "output":
                continue
            if u.op == "call_function" and u.target in _I8_CONSUMERS:
                continue
            if u.op == "call_module" and resolve_path(gm, u.target).kind in (
                Kind.QUANTIZED_LINEAR, Kind.QUANTIZED_CONV2D
            ):
                continue
            out.append(f"i8-into-float: {n.name} -> {u.name}")
    return out


def sqnr_db(reference: Tensor, approx: Tensor) -> float:
    ref = reference.data.astype(np.float64)
    err = ref - approx.data.astype(np.float64)
    noise = float(np.sum(err * err))
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(ref * ref)) / noise)


def quantize_model(gm: GraphModule, batches, cfg: QuantConfig = QuantConfig()) -> tuple[GraphModule, GraphModule]:
    """All three phases; returns (calibrated prepared model, converted model)."""
    prepared = prepare(gm, cfg)
    calibrate(prepared, batches)
    return prepared, convert(prepared, cfg)


__all__ = [
    "QuantConfig", "activation_qparams", "calibrate", "check_quant_dataflow", "convert",
    "dump_observer_table", "observer_table", "prepare", "quantize_model", "sqnr_db", "weight_qparams",
]
