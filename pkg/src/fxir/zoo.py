"""Small deterministic models shared by the CLI and the tests.

Every constructor draws its parameters from ``SplitMix64(seed)`` in
construction order. Each entry also carries a hand-written reference that
computes the same function from kernels and leaf ``forward_eval`` calls,
without going through tracing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from . import functional as F
from . import tensor as T
from .modules import BatchNorm2d, Conv2d, Linear, Module, ReLU, GELU, Sequential, forward_eval
from .passes.transform import replace_activation
from .rng import SplitMix64
from .tensor import Tensor
from .tracer import symbolic_trace


def my_func(x):
    return F.relu(x).neg()


class SampleModule(Module):
    """Wraps an ``act`` submodule after adding pi."""

    def forward(self, x):
        return self.act(x + math.pi)


class ConvBNNet(Module):
    def __init__(self, rng: SplitMix64):
        super().__init__()
        self.conv1 = Conv2d(3, 4, 3, stride=2, padding=1, rng=rng)
        self.bn1 = BatchNorm2d(4, rng=rng)
        self.conv2 = Conv2d(4, 4, 3, stride=1, padding=1, rng=rng)
        self.bn2 = BatchNorm2d(4, rng=rng)
        self.gate = Tensor(1.0 + rng.uniform(-0.1, 0.1, (1, 4, 4, 4)))

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        z = self.bn2(self.conv2(y))
        return ((y + z) * self.gate).relu()


class AutoEncoder(Module):
    def __init__(self, rng: SplitMix64):
        super().__init__()
        self.enc1 = Linear(16, 8, rng=rng)
        self.act1 = ReLU()
        self.enc2 = Linear(8, 4, rng=rng)
        self.act2 = GELU()
        self.dec1 = Linear(4, 8, rng=rng)
        self.act3 = ReLU()
        self.dec2 = Linear(8, 16, rng=rng)

    def forward(self, x):
        h = self.act1(self.enc1(x))
        h = self.act2(self.enc2(h))
        h = self.act3(self.dec1(h))
        return self.dec2(h)


def loop_shapes(x, itr):
    # x is [1, N]; the trip count is an input, so the result shape is unknowable
    for _ in range(itr):
        x = F.cat((x, x), dim=0)
    return x


def build_demo_fig1(seed: int = 0):
    return my_func


def build_gelu_sample(seed: int = 0) -> SampleModule:
    traced = symbolic_trace(my_func)
    replace_activation(traced, "relu", "gelu")
    sm = SampleModule()
    sm.act = traced
    return sm


def build_mlp3(seed: int = 0) -> Sequential:
    rng = SplitMix64(seed)
    return Sequential(Linear(8, 16, rng=rng), ReLU(), Linear(16, 16, rng=rng), ReLU(), Linear(16, 4, rng=rng))


def build_convbn_net(seed: int = 0) -> ConvBNNet:
    return ConvBNNet(SplitMix64(seed))


def build_autoenc(seed: int = 0) -> AutoEncoder:
    return AutoEncoder(SplitMix64(seed))


def _ref_demo(model, x):
    return T.neg(T.relu(x))


def _ref_gelu_sample(model, x):
    return T.neg(T.gelu(T.add(x, math.pi)))


def _ref_mlp3(model, x):
    return forward_eval(model, [x])


def _ref_convbn(m, x):
    y = T.relu(forward_eval(m.bn1, [forward_eval(m.conv1, [x])]))
    z = forward_eval(m.bn2, [forward_eval(m.conv2, [y])])
    return T.relu(T.mul(T.add(y, z), m.params["gate"]))


def _ref_autoenc(m, x):
    for name in ("enc1", "act1", "enc2", "act2", "dec1", "act3", "dec2"):
        x = forward_eval(m.children[name], [x])
    return x


@dataclass(frozen=True)
class ZooEntry:
    name: str
    build: Callable[[int], object]
    input_shape: tuple[int, ...]
    reference: Callable | None
    traceable: bool = True


ZOO: dict[str, ZooEntry] = {
    "demo_fig1": ZooEntry("demo_fig1", build_demo_fig1, (4,), _ref_demo),
    "mlp3": ZooEntry("mlp3", build_mlp3, (2, 8), _ref_mlp3),
    "convbn_net": ZooEntry("convbn_net", build_convbn_net, (1, 3, 8, 8), _ref_convbn),
    "autoenc": ZooEntry("autoenc", build_autoenc, (4, 16), _ref_autoenc),
}

# demonstrations that are not part of the model zoo proper
DEMOS: dict[str, ZooEntry] = {
    "gelu_sample": ZooEntry("gelu_sample", build_gelu_sample, (4,), _ref_gelu_sample),
    "loop_shapes": ZooEntry("loop_shapes", lambda seed=0: loop_shapes, (1, 4), None, traceable=False),
}


def lookup(name: str) -> ZooEntry:
    if name in ZOO:
        return ZOO[name]
    if name in DEMOS:
        return DEMOS[name]
    raise KeyError(f"unknown model {name!r}; choose from {', '.join([*ZOO, *DEMOS])}")


def random_input(shape, seed: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    # offset keeps input streams disjoint from parameter streams of the same seed
    return Tensor(SplitMix64(seed + 0x5EED_0000).uniform(low, high, shape))
