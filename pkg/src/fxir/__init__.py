"""Symbolic tracing into a six-opcode graph IR, with passes over the captured graphs."""
from . import functional
from .errors import FxirError, TraceError
from .graph import Graph, Node, lint
from .modules import (
    BatchNorm2d,
    Conv2d,
    GELU,
    Kind,
    Linear,
    Module,
    ReLU,
    Sequential,
    forward_eval,
    resolve_path,
    set_at_path,
)
from .runtime import GraphModule, interpret, parse_graph, serialize_graph
from .tensor import DType, QuantParams, Tensor
from .tracer import Tracer, TracerConfig, symbolic_trace

__all__ = [
    "BatchNorm2d", "Conv2d", "DType", "FxirError", "GELU", "Graph", "GraphModule", "Kind", "Linear",
    "Module", "Node", "QuantParams", "ReLU", "Sequential", "Tensor", "TraceError", "Tracer",
    "TracerConfig", "forward_eval", "functional", "interpret", "lint", "parse_graph",
    "resolve_path", "serialize_graph", "set_at_path", "symbolic_trace",
]
