import numpy as np
import pytest

from fxir import tensor as T
from fxir.errors import PathNotFound, UnsupportedKind
from fxir.modules import (
    BatchNorm2d,
    Conv2d,
    Kind,
    Linear,
    Module,
    ReLU,
    Sequential,
    forward_eval,
    resolve_path,
    set_at_path,
)
from fxir.rng import SplitMix64
from fxir.tensor import Tensor
from fxir.zoo import ZOO, AutoEncoder


def test_construction_is_deterministic():
    for entry in ZOO.values():
        a, b = entry.build(3), entry.build(3)
        if isinstance(a, Module):
            for (pa, ma), (pb, mb) in zip(a.named_modules(), b.named_modules()):
                assert pa == pb
                for k in ma.params:
                    assert ma.params[k].bitwise_equal(mb.params[k])


def test_different_seeds_differ():
    a, b = ZOO["mlp3"].build(0), ZOO["mlp3"].build(1)
    assert not a.children["0"].params["weight"].bitwise_equal(b.children["0"].params["weight"])


def test_param_ranges():
    lin = Linear(4, 3, rng=SplitMix64(0))
    assert np.abs(lin.params["weight"].data).max() <= 0.1
    bn = BatchNorm2d(8, rng=SplitMix64(0))
    assert (bn.buffers["running_var"].data >= 0.5).all()
    assert np.abs(bn.params["weight"].data - 1).max() <= 0.1


def test_resolve_and_set_path():
    m = AutoEncoder(SplitMix64(0))
    assert resolve_path(m, "enc1").kind is Kind.LINEAR
    assert resolve_path(m, "enc1.weight").shape == (8, 16)
    with pytest.raises(PathNotFound) as e:
        resolve_path(m, "enc1.nope")
    assert e.value.segment == "nope"
    set_at_path(m, "extra", ReLU())
    assert "extra" in m.children
    with pytest.raises(PathNotFound):
        set_at_path(m, "missing.child", ReLU())


def test_named_modules_and_state_bytes():
    s = Sequential(Linear(2, 3, rng=SplitMix64(0)), ReLU())
    assert [p for p, _ in s.named_modules()] == ["", "0", "1"]
    assert s.state_nbytes() == 0  # own tensors only
    assert sum(m.state_nbytes() for _, m in s.named_modules()) == (6 + 3) * 4


def test_forward_eval_leaves():
    rng = SplitMix64(0)
    conv = Conv2d(2, 3, 3, stride=1, padding=1, rng=rng)
    x = Tensor(rng.uniform(-1, 1, (1, 2, 4, 4)))
    want = T.conv2d(x, conv.params["weight"], conv.params["bias"], (1, 1), (1, 1))
    assert forward_eval(conv, [x]).bitwise_equal(want)


def test_forward_eval_rejects_user_modules():
    with pytest.raises(UnsupportedKind):
        forward_eval(AutoEncoder(SplitMix64(0)), [Tensor(np.zeros((1, 16), np.float32))])


def test_copy_tree_is_deep():
    m = AutoEncoder(SplitMix64(0))
    c = m.copy_tree()
    c.enc1 = ReLU()
    assert m.children["enc1"].kind is Kind.LINEAR
