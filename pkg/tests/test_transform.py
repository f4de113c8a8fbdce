import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxir.graph import Graph, lint
from fxir.modules import Module
from fxir.passes.transform import (
    eliminate_common_subexpressions,
    eliminate_dead_code,
    find_conv_bn,
    fold_conv_bn_weights,
    fuse_conv_bn,
    replace_activation,
)
from fxir.runtime import GraphModule, interpret
from fxir import tensor as T
from fxir.tracer import symbolic_trace
from fxir.zoo import ZOO, build_convbn_net, my_func, random_input


def test_replace_activation():
    gm = symbolic_trace(my_func)
    report = replace_activation(gm, "relu", "gelu")
    assert report.rewrites == 1
    assert [n.target for n in gm.graph.nodes] == ["x", "gelu", "neg", "output"]
    x = random_input((4,), 0)
    assert interpret(gm, [x]).bitwise_equal(T.neg(T.gelu(x)))


def test_fold_weights_match_bn_of_conv():
    net = build_convbn_net(3)
    conv, bn = net.children["conv1"], net.children["bn1"]
    w, b = fold_conv_bn_weights(conv, bn)
    x = random_input((1, 3, 8, 8), 0)
    want = T.batch_norm2d(
        T.conv2d(x, conv.params["weight"], conv.params["bias"], (2, 2), (1, 1)),
        bn.params["weight"], bn.params["bias"], bn.buffers["running_mean"], bn.buffers["running_var"],
    )
    got = T.conv2d(x, w, b, (2, 2), (1, 1))
    assert np.abs(got.data - want.data).max() <= 1e-5


def test_fuse_convbn_net():
    gm = symbolic_trace(build_convbn_net(0))
    ref = gm.copy_tree()
    report = fuse_conv_bn(gm)
    assert report.rewrites == 2
    assert report.nodes_after == report.nodes_before - 2
    assert not find_conv_bn(gm)
    assert lint(gm.graph) == []
    # original state untouched; fused conv is new
    assert "fused_0" in gm.children and "fused_0" not in ref.children
    for s in range(10):
        x = random_input((1, 3, 8, 8), s)
        assert np.abs(interpret(gm, [x]).data - interpret(ref, [x]).data).max() <= 1e-4
    assert fuse_conv_bn(gm).rewrites == 0


def test_fuse_skips_shared_conv_output():
    gm = symbolic_trace(build_convbn_net(0))
    g = gm.graph
    conv = g.node("conv1")
    with g.inserting_after(g.node("relu")):
        extra = g.call_function("add", (g.node("relu"), conv))
    report = fuse_conv_bn(gm)
    assert report.rewrites == 1
    assert any("skipped conv1" in n for n in report.notes)
    assert extra in conv.users


def doubled_graph(k: int):
    """``k`` copies of relu(x) + 1 summed together, plus an unused neg."""
    g = Graph("dup")
    x = g.placeholder("x")
    terms = [g.call_function("add", (g.call_function("relu", (x,)), 1.0)) for _ in range(k)]
    acc = terms[0]
    for t in terms[1:]:
        acc = g.call_function("add", (acc, t))
    g.call_method("neg", (x,))
    g.output(acc)
    return GraphModule(Module(), g)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_cse_removes_duplicates(k):
    gm = doubled_graph(k)
    x = random_input((6,), 1)
    before, n0 = interpret(gm, [x]), len(gm.graph)
    report = eliminate_common_subexpressions(gm)
    # 2 duplicate nodes per extra copy of relu(x)+1
    assert n0 - len(gm.graph) == 2 * (k - 1) == report.rewrites
    assert interpret(gm, [x]).bitwise_equal(before)


def test_cse_keeps_distinct_immediates():
    g = Graph()
    x = g.placeholder("x")
    a = g.call_function("add", (x, 0.0))
    b = g.call_function("add", (x, -0.0))
    c = g.call_function("add", (x, 0))
    g.output(g.call_function("cat", ((a, b, c),)))
    assert eliminate_common_subexpressions(g).rewrites == 0


def test_cse_ignores_modules():
    g = Graph()
    x = g.placeholder("x")
    a = g.call_module("m", (x,))
    b = g.call_module("m", (x,))
    g.output(g.call_function("add", (a, b)))
    assert eliminate_common_subexpressions(g).rewrites == 0


def test_dce_removes_dead_chains_only():
    gm = doubled_graph(1)
    g = gm.graph
    with g.inserting_before(g.output_node):
        dead = g.call_function("relu", (g.node("neg"),))
        g.call_function("gelu", (dead,))
        g.call_module("side", (g.node("x"),))  # impure; must stay
    report = eliminate_dead_code(gm.graph)
    assert report.rewrites == 3
    assert [n.target for n in g.nodes if n.op == "call_module"] == ["side"]
    assert lint(g) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 1000))
def test_cse_dce_preserve_output_and_never_grow(k, seed):
    gm = doubled_graph(k)
    x = random_input((5,), seed)
    ref = interpret(gm, [x])
    for p in (eliminate_common_subexpressions, eliminate_dead_code):
        n0 = len(gm.graph)
        p(gm)
        assert len(gm.graph) <= n0
        assert interpret(gm, [x]).bitwise_equal(ref)


def test_passes_on_zoo_preserve_output():
    for name, entry in ZOO.items():
        gm = symbolic_trace(entry.build(0))
        x = random_input(entry.input_shape, 0)
        ref = interpret(gm, [x])
        for p in (eliminate_common_subexpressions, eliminate_dead_code):
            n0 = len(gm.graph)
            p(gm)
            assert len(gm.graph) <= n0
            assert interpret(gm, [x]).bitwise_equal(ref), name
