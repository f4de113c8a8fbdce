"""Deterministic dense-tensor kernels.

Everything here is a pure function over immutable :class:`Tensor` values.
Accumulations run in a fixed order so results are bitwise reproducible and can
be compared against scalar loop implementations.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf

from .errors import DtypeMismatch, EmptyOutput, InvalidQuantParams, ShapeMismatch

MAX_RANK = 4


class DType(enum.Enum):
    F32 = "f32"
    I8 = "i8"
    I32 = "i32"

    @property
    def itemsize(self) -> int:
        return {DType.F32: 4, DType.I8: 1, DType.I32: 4}[self]

    @property
    def numpy(self):
        return {DType.F32: np.float32, DType.I8: np.int8, DType.I32: np.int32}[self]


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int

    def __post_init__(self):
        if not (self.scale > 0) or not math.isfinite(self.scale):
            raise InvalidQuantParams(f"scale must be positive and finite, got {self.scale}")
        if not -128 <= self.zero_point <= 127:
            raise InvalidQuantParams(f"zero_point {self.zero_point} outside [-128, 127]")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "zero_point", int(self.zero_point))


class Shape(tuple):
    """A shape tuple that can also be called, so ``t.shape()`` reads the same eagerly and under tracing."""

    __slots__ = ()

    def __call__(self) -> "Shape":
        return self


class Tensor:
    """Immutable row-major array with a dtype and optional quantization params."""

    __slots__ = ("data", "dtype", "qparams")

    def __init__(self, data, dtype: DType = DType.F32, qparams: QuantParams | None = None):
        arr = np.array(data, dtype=dtype.numpy)
        if arr.ndim > MAX_RANK:
            raise ShapeMismatch(f"rank {arr.ndim} exceeds {MAX_RANK}")
        if (dtype is DType.I8) != (qparams is not None):
            raise InvalidQuantParams("qparams are required exactly for i8 tensors")
        arr.flags.writeable = False
        self.data = arr
        self.dtype = dtype
        self.qparams = qparams

    @property
    def shape(self) -> Shape:
        return Shape(self.data.shape)

    def ndim(self) -> int:
        return self.data.ndim

    @property
    def numel(self) -> int:
        return int(self.data.size)

    @property
    def nbytes(self) -> int:
        return self.numel * self.dtype.itemsize

    def tolist(self):
        return self.data.tolist()

    def bitwise_equal(self, other: "Tensor") -> bool:
        return (
            self.dtype is other.dtype
            and self.shape == other.shape
            and self.qparams == other.qparams
            and self.data.tobytes() == other.data.tobytes()
        )

    # eager counterparts of the traced operator and method vocabulary
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def neg(self):
        return neg(self)

    def relu(self):
        return relu(self)

    def gelu(self):
        return gelu(self)

    def reshape(self, *dims):
        return reshape(self, *dims)

    def __repr__(self):
        q = f", qparams={self.qparams}" if self.qparams else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype.value}{q})"


def tensor(values, dtype: DType = DType.F32) -> Tensor:
    return Tensor(values, dtype)


def _f32(t, what: str = "input") -> np.ndarray:
    if not isinstance(t, Tensor):
        raise DtypeMismatch(f"{what} is not a tensor: {type(t).__name__}")
    if t.dtype is not DType.F32:
        raise DtypeMismatch(f"{what} must be f32, got {t.dtype.value}")
    return t.data


def _wrap(arr: np.ndarray) -> Tensor:
    return Tensor(arr, DType.F32)


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


def _binary(a, b, op: str, fn):
    a_t, b_t = isinstance(a, Tensor), isinstance(b, Tensor)
    if not a_t and not b_t:
        return fn(a, b)
    if a_t and b_t:
        _same_shape(a, b, op)
        return _wrap(fn(_f32(a), _f32(b)))
    # tensor with an immediate scalar
    if a_t:
        return _wrap(fn(_f32(a), np.float32(b)))
    return _wrap(fn(np.float32(a), _f32(b)))


def add(a, b):
    return _binary(a, b, "add", lambda x, y: x + y)


def mul(a, b):
    return _binary(a, b, "mul", lambda x, y: x * y)


def neg(a):
    if not isinstance(a, Tensor):
        return -a
    return _wrap(-_f32(a))


def relu(a: Tensor) -> Tensor:
    x = _f32(a)
    return _wrap(np.where(x > 0, x, np.float32(0)))


def gelu(a: Tensor) -> Tensor:
    # exact erf form, evaluated in f64 and rounded once
    x = _f32(a).astype(np.float64)
    return _wrap((0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))).astype(np.float32))


def cat(tensors: Sequence[Tensor], dim: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatch("cat of an empty sequence")
    arrs = [_f32(t) for t in tensors]
    rank = arrs[0].ndim
    if not -rank <= dim < rank:
        raise ShapeMismatch(f"cat dim {dim} out of range for rank {rank}")
    dim %= rank
    for a in arrs[1:]:
        if a.ndim != rank or any(a.shape[i] != arrs[0].shape[i] for i in range(rank) if i != dim):
            raise ShapeMismatch(f"cat: incompatible shapes {[list(x.shape) for x in arrs]}")
    return _wrap(np.concatenate(arrs, axis=dim))


def reshape(a: Tensor, *dims) -> Tensor:
    if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
        dims = tuple(dims[0])
    try:
        out = a.data.reshape(tuple(int(d) for d in dims))
    except ValueError as e:
        raise ShapeMismatch(f"reshape {list(a.shape)} -> {list(dims)}: {e}") from None
    return Tensor(out, a.dtype, a.qparams)


def _accumulate_linear(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    n, k = x.shape
    m = w.shape[0]
    acc = np.zeros((n, m), dtype=np.float32)
    for kk in range(k):  # k ascending
        acc = acc + x[:, kk, None] * w[None, :, kk]
    return acc


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    xa, wa = _f32(x, "x"), _f32(w, "weight")
    if xa.ndim != 2 or wa.ndim != 2 or xa.shape[1] != wa.shape[1]:
        raise ShapeMismatch(f"linear: x {list(xa.shape)} incompatible with weight {list(wa.shape)}")
    acc = _accumulate_linear(xa, wa)
    if b is not None:
        ba = _f32(b, "bias")
        if ba.shape != (wa.shape[0],):
            raise ShapeMismatch(f"linear: bias {list(ba.shape)} vs {wa.shape[0]} outputs")
        acc = acc + ba[None, :]
    return _wrap(acc)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    aa, ba = _f32(a), _f32(b)
    if aa.ndim != 2 or ba.ndim != 2 or aa.shape[1] != ba.shape[0]:
        raise ShapeMismatch(f"matmul: {list(aa.shape)} @ {list(ba.shape)}")
    return _wrap(_accumulate_linear(aa, np.ascontiguousarray(ba.T)))


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=(1, 1), padding=(0, 0)) -> Tensor:
    xa, wa = _f32(x, "x"), _f32(w, "weight")
    if xa.ndim != 4 or wa.ndim != 4 or xa.shape[1] != wa.shape[1]:
        raise ShapeMismatch(f"conv2d: x {list(xa.shape)} incompatible with weight {list(wa.shape)}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ShapeMismatch(f"conv2d: bad stride {(sh, sw)} or padding {(ph, pw)}")
    n, cin, h, wd = xa.shape
    cout, _, kh, kw = wa.shape
    hout, wout = conv_output_size(h, kh, sh, ph), conv_output_size(wd, kw, sw, pw)
    if hout < 1 or wout < 1:
        raise EmptyOutput(f"conv2d output would be {hout}x{wout}")
    xp = np.pad(xa, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    acc = np.zeros((n, cout, hout, wout), dtype=np.float32)
    for c in range(cin):
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, c, i : i + sh * (hout - 1) + 1 : sh, j : j + sw * (wout - 1) + 1 : sw]
                acc = acc + patch[:, None, :, :] * wa[None, :, c, i, j, None, None]
    if b is not None:
        ba = _f32(b, "bias")
        if ba.shape != (cout,):
            raise ShapeMismatch(f"conv2d: bias {list(ba.shape)} vs {cout} channels")
        acc = acc + ba[None, :, None, None]
    return _wrap(acc)


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor,
                 running_var: Tensor, eps: float = 1e-5) -> Tensor:
    xa = _f32(x, "x")
    if xa.ndim != 4:
        raise ShapeMismatch(f"batch_norm2d expects rank 4, got {list(xa.shape)}")
    c = xa.shape[1]
    chans = []
    for name, t in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)):
        arr = _f32(t, name)
        if arr.shape != (c,):
            raise ShapeMismatch(f"batch_norm2d: {name} {list(arr.shape)} vs {c} channels")
        chans.append(arr[None, :, None, None])
    g, bt, mean, var = chans
    denom = np.sqrt(var + np.float32(eps))
    return _wrap((xa - mean) / denom * g + bt)


def round_half_away(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    f = np.floor(a)
    return np.copysign(f + (a - f >= 0.5), v)


def quantize_affine(x: Tensor, qp: QuantParams) -> Tensor:
    xa = _f32(x).astype(np.float64)
    q = np.clip(round_half_away(xa / qp.scale) + qp.zero_point, -128, 127)
    return Tensor(q.astype(np.int8), DType.I8, qp)


def dequantize_affine(x: Tensor) -> Tensor:
    if not isinstance(x, Tensor) or x.dtype is not DType.I8:
        raise DtypeMismatch("dequantize_affine expects an i8 tensor")
    qp = x.qparams
    return _wrap(((x.data.astype(np.float64) - qp.zero_point) * qp.scale).astype(np.float32))


def quantized_linear(xq: Tensor, wq: Tensor, b: Tensor | None, out_qp: QuantParams) -> Tensor:
    return quantize_affine(linear(dequantize_affine(xq), dequantize_affine(wq), b), out_qp)


def quantized_conv2d(xq: Tensor, wq: Tensor, b: Tensor | None, out_qp: QuantParams,
                     stride=(1, 1), padding=(0, 0)) -> Tensor:
    y = conv2d(dequantize_affine(xq), dequantize_affine(wq), b, stride, padding)
    return quantize_affine(y, out_qp)
