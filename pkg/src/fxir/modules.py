"""Hierarchical parameterized modules.

Builtin leaves express ``forward`` through :mod:`fxir.functional`, so they run
concretely on tensors and can also be traced through when a tracer decides not
to keep them opaque.
"""
from __future__ import annotations

import copy
import enum
import re

import numpy as np

from . import functional as F
from .errors import PathNotFound, UnsupportedKind
from .proxy import current_tracer, find_tracer, set_current_tracer
from .rng import SplitMix64
from .tensor import DType, QuantParams, Tensor

_SEGMENT = re.compile(r"([A-Za-z_][A-Za-z0-9_]*|[0-9]+)\Z")


class Kind(enum.Enum):
    LINEAR = "Linear"
    CONV2D = "Conv2d"
    BATCHNORM2D = "BatchNorm2d"
    RELU = "ReLU"
    GELU = "GELU"
    SEQUENTIAL = "Sequential"
    USER = "User"
    GRAPH_MODULE = "GraphModule"
    OBSERVER = "Observer"
    QUANTIZED_LINEAR = "QuantizedLinear"
    QUANTIZED_CONV2D = "QuantizedConv2d"


BUILTIN_LEAVES = frozenset(
    {Kind.LINEAR, Kind.CONV2D, Kind.BATCHNORM2D, Kind.RELU, Kind.GELU,
     Kind.OBSERVER, Kind.QUANTIZED_LINEAR, Kind.QUANTIZED_CONV2D}
)


def _check_segment(name: str):
    if not isinstance(name, str) or not _SEGMENT.match(name):
        raise ValueError(f"invalid attribute name {name!r}")


class Module:
    kind = Kind.USER

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "config", {})

    # ---- attribute plumbing ----------------------------------------------
    def __setattr__(self, name, value):
        d = self.__dict__
        if isinstance(value, Module):
            _check_segment(name)
            d["_params"].pop(name, None)
            d["_buffers"].pop(name, None)
            d["_children"][name] = value
        elif isinstance(value, Tensor):
            _check_segment(name)
            d["_children"].pop(name, None)
            if name in d["_buffers"]:
                d["_buffers"][name] = value
            else:
                d["_params"][name] = value
        else:
            object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: Tensor):
        _check_segment(name)
        self._params.pop(name, None)
        self._buffers[name] = value

    def __getattr__(self, name):
        d = self.__dict__
        if name in d.get("_children", {}):
            return d["_children"][name]
        for store in ("_params", "_buffers"):
            if name in d.get(store, {}):
                tracer = current_tracer()
                if tracer is not None:
                    proxy = tracer.attr_proxy(self, name)
                    if proxy is not None:
                        return proxy
                return d[store][name]
        raise AttributeError(f"{type(self).__name__} has no attribute {name!r}")

    def get_param(self, name: str):
        """Parameter or buffer by name, or ``None`` when absent."""
        if name in self._params or name in self._buffers:
            return getattr(self, name)
        return None

    # ---- tree -------------------------------------------------------------
    @property
    def params(self) -> dict[str, Tensor]:
        return self._params

    @property
    def buffers(self) -> dict[str, Tensor]:
        return self._buffers

    @property
    def children(self) -> dict[str, "Module"]:
        return self._children

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, child in self._children.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def state_nbytes(self) -> int:
        return sum(t.nbytes for t in self._params.values()) + sum(t.nbytes for t in self._buffers.values())

    def copy_tree(self) -> "Module":
        """Structural copy; tensors are immutable and shared."""
        new = copy.copy(self)
        object.__setattr__(new, "_params", dict(self._params))
        object.__setattr__(new, "_buffers", dict(self._buffers))
        object.__setattr__(new, "_children", {k: c.copy_tree() for k, c in self._children.items()})
        object.__setattr__(new, "config", dict(self.config))
        return new

    # ---- execution --------------------------------------------------------
    def __call__(self, *args, **kwargs):
        tracer = current_tracer()
        if tracer is not None and find_tracer((args, kwargs)) is tracer:
            return tracer.call_module(self, args, kwargs)
        return forward_eval(self, list(args), kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} does not define forward")

    def extra_repr(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.config.items())

    def __repr__(self):
        head = f"{type(self).__name__}({self.extra_repr()})"
        if not self._children:
            return head
        lines = [head[:-1] + "("]
        for name, c in self._children.items():
            sub = repr(c).replace("\n", "\n  ")
            lines.append(f"  ({name}): {sub}")
        lines.append(")")
        return "\n".join(lines)


def forward_eval(m: Module, inputs, kwargs=None):
    """Run a builtin or graph module on concrete tensors."""
    if m.kind is Kind.USER:
        raise UnsupportedKind(
            f"{type(m).__name__} is a user module; trace it and interpret the graph instead"
        )
    saved = set_current_tracer(None)
    try:
        return m.forward(*inputs, **(kwargs or {}))
    finally:
        set_current_tracer(saved)


def _segments(path: str) -> list[str]:
    if not path:
        raise PathNotFound("", path)
    return path.split(".")


def resolve_path(root: Module, path: str):
    cur = root
    for seg in _segments(path):
        if not isinstance(cur, Module):
            raise PathNotFound(seg, path)
        if seg in cur._children:
            cur = cur._children[seg]
        elif seg in cur._params:
            cur = cur._params[seg]
        elif seg in cur._buffers:
            cur = cur._buffers[seg]
        else:
            raise PathNotFound(seg, path)
    return cur


def set_at_path(root: Module, path: str, value) -> None:
    *parents, last = _segments(path)
    parent = resolve_path(root, ".".join(parents)) if parents else root
    if not isinstance(parent, Module):
        raise PathNotFound(parents[-1], path)
    setattr(parent, last, value)


def _uniform(rng: SplitMix64, shape, low=-0.1, high=0.1) -> Tensor:
    return Tensor(rng.uniform(low, high, shape))


def _default_rng(rng):
    return rng if rng is not None else SplitMix64(0)


# ---- builtin leaves ---------------------------------------------------------

class Linear(Module):
    kind = Kind.LINEAR

    def __init__(self, in_features: int, out_features: int, bias: bool = True, rng: SplitMix64 | None = None):
        super().__init__()
        rng = _default_rng(rng)
        self.config = {"in_features": in_features, "out_features": out_features}
        self.weight = _uniform(rng, (out_features, in_features))
        if bias:
            self.bias = _uniform(rng, (out_features,))

    def forward(self, x):
        return F.linear(x, self.weight, self.get_param("bias"))


class Conv2d(Module):
    kind = Kind.CONV2D

    def __init__(self, in_channels: int, out_channels: int, kernel_size, stride=1, padding=0,
                 bias: bool = True, rng: SplitMix64 | None = None):
        super().__init__()
        rng = _default_rng(rng)
        kh, kw = (kernel_size, kernel_size) if isinstance(kernel_size, int) else tuple(kernel_size)
        st = (stride, stride) if isinstance(stride, int) else tuple(stride)
        pd = (padding, padding) if isinstance(padding, int) else tuple(padding)
        self.config = {"in_channels": in_channels, "out_channels": out_channels,
                       "kernel_size": (kh, kw), "stride": st, "padding": pd}
        self.weight = _uniform(rng, (out_channels, in_channels, kh, kw))
        if bias:
            self.bias = _uniform(rng, (out_channels,))

    def forward(self, x):
        c = self.config
        return F.conv2d(x, self.weight, self.get_param("bias"), c["stride"], c["padding"])


class BatchNorm2d(Module):
    kind = Kind.BATCHNORM2D

    def __init__(self, num_features: int, eps: float = 1e-5, rng: SplitMix64 | None = None):
        super().__init__()
        rng = _default_rng(rng)
        self.config = {"num_features": num_features, "eps": eps}
        self.weight = Tensor(1.0 + rng.uniform(-0.1, 0.1, (num_features,)))
        self.bias = _uniform(rng, (num_features,))
        self.register_buffer("running_mean", _uniform(rng, (num_features,), -0.5, 0.5))
        self.register_buffer("running_var", _uniform(rng, (num_features,), 0.5, 1.5))

    def forward(self, x):
        return F.batch_norm2d(x, self.weight, self.bias, self.running_mean, self.running_var,
                              self.config["eps"])


class ReLU(Module):
    kind = Kind.RELU

    def forward(self, x):
        return F.relu(x)


class GELU(Module):
    kind = Kind.GELU

    def forward(self, x):
        return F.gelu(x)


class Sequential(Module):
    kind = Kind.SEQUENTIAL

    def __init__(self, *mods: Module):
        super().__init__()
        for i, m in enumerate(mods):
            setattr(self, str(i), m)

    def forward(self, x):
        for child in self._children.values():
            x = child(x)
        return x


# ---- quantization support ---------------------------------------------------

class Observer(Module):
    """Pass-through module recording the running min/max of the value it sees."""

    kind = Kind.OBSERVER

    def __init__(self, value: str = ""):
        super().__init__()
        self.config = {"value": value}
        self.running_min = float("inf")
        self.running_max = float("-inf")
        self.samples_seen = 0

    def forward(self, x):
        data = x.data
        if data.size:
            self.running_min = min(self.running_min, float(np.min(data)))
            self.running_max = max(self.running_max, float(np.max(data)))
        self.samples_seen += 1
        return x


class QuantizedLinear(Module):
    kind = Kind.QUANTIZED_LINEAR

    def __init__(self, weight: Tensor, bias: Tensor | None, out_qparams: QuantParams):
        super().__init__()
        assert weight.dtype is DType.I8
        self.config = {"in_features": weight.shape[1], "out_features": weight.shape[0],
                       "scale": out_qparams.scale, "zero_point": out_qparams.zero_point}
        self.weight = weight
        if bias is not None:
            self.bias = bias

    def forward(self, x):
        c = self.config
        return F.quantized_linear(x, self.weight, self.get_param("bias"), c["scale"], c["zero_point"])


class QuantizedConv2d(Module):
    kind = Kind.QUANTIZED_CONV2D

    def __init__(self, weight: Tensor, bias: Tensor | None, out_qparams: QuantParams, stride, padding):
        super().__init__()
        assert weight.dtype is DType.I8
        self.config = {"in_channels": weight.shape[1], "out_channels": weight.shape[0],
                       "kernel_size": tuple(weight.shape[2:]), "stride": tuple(stride),
                       "padding": tuple(padding), "scale": out_qparams.scale,
                       "zero_point": out_qparams.zero_point}
        self.weight = weight
        if bias is not None:
            self.bias = bias

    def forward(self, x):
        c = self.config
        return F.quantized_conv2d(x, self.weight, self.get_param("bias"), c["scale"], c["zero_point"],
                                  c["stride"], c["padding"])
