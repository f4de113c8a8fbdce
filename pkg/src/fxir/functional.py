"""Op-building API and the name registries that graph targets resolve against.

Each public function records a ``call_function`` node when any argument is a
proxy, and otherwise runs the kernel directly.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable

from . import tensor as T
from .proxy import find_tracer
from .tensor import QuantParams


@dataclass(frozen=True)
class OpEntry:
    fn: Callable
    pure: bool = True


FUNCTIONS: dict[str, OpEntry] = {}
METHODS: dict[str, OpEntry] = {}


def register_function(name: str, fn: Callable, pure: bool = True) -> None:
    FUNCTIONS[name] = OpEntry(fn, pure)


def register_method(name: str, fn: Callable, pure: bool = True) -> None:
    METHODS[name] = OpEntry(fn, pure)


def is_pure(op: str, target: str) -> bool:
    """Unknown targets are impure; call_module is always treated as stateful."""
    if op == "get_attr":
        return True
    if op == "call_function":
        entry = FUNCTIONS.get(target)
    elif op == "call_method":
        entry = METHODS.get(target)
    else:
        return False
    return entry is not None and entry.pure


def _quantize(x, scale, zero_point):
    return T.quantize_affine(x, QuantParams(scale, zero_point))


def _quantized_linear(x, w, b, scale, zero_point):
    return T.quantized_linear(x, w, b, QuantParams(scale, zero_point))


def _quantized_conv2d(x, w, b, scale, zero_point, stride=(1, 1), padding=(0, 0)):
    return T.quantized_conv2d(x, w, b, QuantParams(scale, zero_point), stride, padding)


for _name, _fn in {
    "add": T.add,
    "mul": T.mul,
    "neg": T.neg,
    "matmul": T.matmul,
    "relu": T.relu,
    "gelu": T.gelu,
    "cat": T.cat,
    "reshape": T.reshape,
    "linear": T.linear,
    "conv2d": T.conv2d,
    "batch_norm2d": T.batch_norm2d,
    "quantize_affine": _quantize,
    "dequantize_affine": T.dequantize_affine,
    "quantized_linear": _quantized_linear,
    "quantized_conv2d": _quantized_conv2d,
    "getitem": operator.getitem,
    "gt": operator.gt,
    "lt": operator.lt,
    "ge": operator.ge,
    "le": operator.le,
}.items():
    register_function(_name, _fn)

register_method("neg", T.neg)
register_method("relu", T.relu)
register_method("gelu", T.gelu)
register_method("reshape", T.reshape)
register_method("shape", lambda t: tuple(t.shape))
register_method("ndim", lambda t: len(t.shape))


def _dispatch(name: str, *args, **kwargs):
    tracer = find_tracer((args, kwargs))
    if tracer is not None:
        return tracer.create_proxy("call_function", name, args, kwargs)
    return FUNCTIONS[name].fn(*args, **kwargs)


def add(a, b):
    return _dispatch("add", a, b)


def mul(a, b):
    return _dispatch("mul", a, b)


def neg(a):
    return _dispatch("neg", a)


def matmul(a, b):
    return _dispatch("matmul", a, b)


def relu(x):
    return _dispatch("relu", x)


def gelu(x):
    return _dispatch("gelu", x)


def cat(tensors, dim=0):
    return _dispatch("cat", tensors, dim=dim)


def reshape(x, *dims):
    return _dispatch("reshape", x, *dims)


def linear(x, weight, bias=None):
    return _dispatch("linear", x, weight, bias)


def conv2d(x, weight, bias=None, stride=(1, 1), padding=(0, 0)):
    return _dispatch("conv2d", x, weight, bias, stride, padding)


def batch_norm2d(x, gamma, beta, running_mean, running_var, eps=1e-5):
    return _dispatch("batch_norm2d", x, gamma, beta, running_mean, running_var, eps)


def quantize_affine(x, scale, zero_point):
    return _dispatch("quantize_affine", x, scale, zero_point)


def dequantize_affine(x):
    return _dispatch("dequantize_affine", x)


def quantized_linear(x, weight, bias, scale, zero_point):
    return _dispatch("quantized_linear", x, weight, bias, scale, zero_point)


def quantized_conv2d(x, weight, bias, scale, zero_point, stride=(1, 1), padding=(0, 0)):
    return _dispatch("quantized_conv2d", x, weight, bias, scale, zero_point, stride, padding)
