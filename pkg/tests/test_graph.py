"""Graph construction, mutation and lint."""
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxir.errors import (
    BadArgument,
    BadPlacement,
    BadTarget,
    CannotEraseOutput,
    DuplicateOutput,
    FxirError,
    HasUsers,
    UseBeforeDef,
)
from fxir.graph import Graph, Node, iter_nodes, lint


def chain():
    g = Graph("chain")
    x = g.placeholder("x")
    a = g.call_function("relu", (x,))
    b = g.call_method("neg", (a,))
    g.output(b)
    return g, x, a, b


def rescan_users(g):
    users = {n: set() for n in g.nodes}
    for n in g.nodes:
        for ref in iter_nodes((n.args, n.kwargs)):
            users[ref].add(n)
    return users


def test_basic_chain_lints_clean():
    g, x, a, b = chain()
    assert lint(g) == []
    assert [n.op for n in g.nodes] == ["placeholder", "call_function", "call_method", "output"]
    assert set(x.users) == {a}
    assert g.output_node.name == "output"


def test_default_insertion_is_before_output():
    g, x, a, b = chain()
    c = g.call_function("gelu", (b,))
    assert g.nodes[-2] is c


def test_inserting_after_keeps_creation_order():
    g, x, a, b = chain()
    with g.inserting_after(a):
        c = g.call_function("gelu", (a,))
        d = g.call_function("relu", (c,))
    assert g.nodes[2:4] == [c, d]


def test_unique_names():
    g, x, a, b = chain()
    r2 = g.call_function("relu", (x,))
    r3 = g.call_function("relu", (x,))
    assert (r2.name, r3.name) == ("relu_1", "relu_2")


@pytest.mark.parametrize("target,want", [("0", "_0"), ("return", "return_"), ("class", "class_"), ("a.b", "a_b")])
def test_name_sanitising(target, want):
    g = Graph()
    x = g.placeholder("x")
    n = g.call_module(target, (x,)) if "." in target or target[0].isdigit() else g.call_function(target, (x,))
    assert n.name == want


def test_errors():
    g, x, a, b = chain()
    with pytest.raises(DuplicateOutput):
        g.output(x)
    with pytest.raises(BadTarget):
        g.create_node("jump", "x")
    with pytest.raises(BadArgument):
        g.create_node("get_attr", "w", (x,))
    with pytest.raises(BadArgument):
        g.call_method("neg", ())
    with pytest.raises(BadPlacement):
        g.placeholder("y")
    with pytest.raises(HasUsers):
        g.erase_node(a)
    with pytest.raises(CannotEraseOutput):
        g.erase_node(g.output_node)
    other = Graph()
    y = other.placeholder("y")
    with pytest.raises(UseBeforeDef):
        g.call_function("relu", (y,))
    with g.inserting_before(a):
        with pytest.raises(UseBeforeDef):
            g.call_function("relu", (b,))
    assert lint(g) == []


def test_replace_and_erase():
    g, x, a, b = chain()
    with g.inserting_after(a):
        c = g.call_function("gelu", (x,))
    assert a.replace_all_uses_with(c) == 1
    g.erase_node(a)
    assert lint(g) == []
    assert b.args == (c,)
    assert a not in x.users


def test_replace_rejects_later_node():
    g, x, a, b = chain()
    with pytest.raises(UseBeforeDef):
        x.replace_all_uses_with(b)


def test_immediates_are_normalised():
    g = Graph()
    x = g.placeholder("x")
    n = g.call_function("reshape", (x, [2, [3, 4]]))
    assert n.args[1] == (2, (3, 4))
    with pytest.raises(BadArgument):
        g.call_function("cat", (x, {"not an ident": 1}))
    with pytest.raises(BadArgument):
        g.call_function("cat", (x, object()))


def test_nesting_limit():
    g = Graph()
    x = g.placeholder("x")
    deep = 1
    for _ in range(9):
        deep = (deep,)
    with pytest.raises(BadArgument):
        g.call_function("cat", (x, deep))


def test_lint_detects_tampering():
    g, x, a, b = chain()
    a.users.clear()
    assert "users-mismatch" in lint(g)


def test_copy_is_independent():
    g, x, a, b = chain()
    h = g.copy()
    assert [n.name for n in h.nodes] == [n.name for n in g.nodes]
    h.call_function("relu", (h.node("neg"),))
    assert len(g) == 4 and lint(h) == []


# ------------------------------------------------------------ randomized mutation

def random_step(g: Graph, rng: random.Random):
    """One randomly chosen create / replace / erase / set_args; may raise FxirError."""
    nodes = g.nodes
    kind = rng.random()
    if kind < 0.45:
        anchor = rng.choice(nodes)
        ctx = g.inserting_after(anchor) if rng.random() < 0.5 else g.inserting_before(anchor)
        refs = tuple(rng.choice(nodes) for _ in range(rng.randint(1, 2)))
        op = rng.choice(["call_function", "call_method", "get_attr", "placeholder", "output"])
        with ctx:
            if op == "get_attr":
                g.get_attr("w")
            elif op == "placeholder":
                g.placeholder("p")
            elif op == "output":
                g.output(refs[0])
            else:
                g.create_node(op, rng.choice(["add", "relu", "neg"]), refs + (rng.choice([1, 2.5, None]),))
    elif kind < 0.7:
        old, new = rng.choice(nodes), rng.choice(nodes)
        if old is not new:
            g.replace_all_uses_with(old, new)
    elif kind < 0.9:
        g.erase_node(rng.choice(nodes))
    else:
        n = rng.choice(nodes)
        g.set_args(n, (rng.choice(nodes), 3))


def fresh_graph():
    g = Graph("r")
    x = g.placeholder("x")
    y = g.call_function("relu", (x,))
    g.output(y)
    return g


def check_hygiene(g):
    assert lint(g) == []
    expected = rescan_users(g)
    for n in g.nodes:
        assert set(n.users) == expected[n]


def test_ten_thousand_random_mutation_sequences():
    rng = random.Random(1234)
    for _ in range(10_000):
        g = fresh_graph()
        for _ in range(rng.randint(1, 8)):
            try:
                random_step(g, rng)
            except FxirError:
                pass  # rejected mutations must leave the graph intact
            check_hygiene(g)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_random_mutation_property(seed, steps):
    rng = random.Random(seed)
    g = fresh_graph()
    for _ in range(steps):
        try:
            random_step(g, rng)
        except FxirError:
            pass
    check_hygiene(g)
    assert isinstance(g.output_node, Node)
