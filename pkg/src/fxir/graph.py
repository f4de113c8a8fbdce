"""Six-opcode DAG IR: a graph is an ordered list of nodes with immediate-value args."""
from __future__ import annotations

import keyword
import re
from contextlib import contextmanager
from typing import Any, Callable, Iterator

from .errors import (
    BadArgument,
    BadPlacement,
    BadTarget,
    CannotEraseOutput,
    DuplicateOutput,
    HasUsers,
    NodeNotInGraph,
    UseBeforeDef,
)

OPCODES = ("placeholder", "call_function", "call_method", "call_module", "get_attr", "output")
MAX_NESTING = 8
# names that would make the linear form ambiguous
RESERVED_NAMES = {"graph", "return", "true", "false", "none", "output"}

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_PATH = re.compile(r"[A-Za-z0-9_]+(\.[A-Za-z0-9_]+)*\Z")


class Node:
    __slots__ = ("graph", "name", "op", "target", "args", "kwargs", "users", "meta")

    def __init__(self, graph: "Graph", name: str, op: str, target: str, args: tuple, kwargs: dict):
        self.graph = graph
        self.name = name
        self.op = op
        self.target = target
        self.args = args
        self.kwargs = kwargs
        self.users: dict[Node, None] = {}
        self.meta: dict[str, Any] = {}

    @property
    def all_input_nodes(self) -> list["Node"]:
        seen: dict[Node, None] = {}
        for n in iter_nodes((self.args, self.kwargs)):
            seen.setdefault(n)
        return list(seen)

    def replace_all_uses_with(self, new: "Node", skip: set["Node"] | None = None) -> int:
        return self.graph.replace_all_uses_with(self, new, skip)

    def __repr__(self):
        return f"%{self.name}"


def iter_nodes(arg) -> Iterator[Node]:
    """All node references inside an argument, depth first, in positional order."""
    if isinstance(arg, Node):
        yield arg
    elif isinstance(arg, (tuple, list)):
        for a in arg:
            yield from iter_nodes(a)
    elif isinstance(arg, dict):
        for a in arg.values():
            yield from iter_nodes(a)


def map_arg(arg, fn: Callable[[Node], Any]):
    if isinstance(arg, Node):
        return fn(arg)
    if isinstance(arg, (tuple, list)):
        return tuple(map_arg(a, fn) for a in arg)
    if isinstance(arg, dict):
        return {k: map_arg(v, fn) for k, v in arg.items()}
    return arg


def normalize_arg(arg, depth: int = 0):
    """Validate an argument and canonicalize sequences to tuples."""
    if depth > MAX_NESTING:
        raise BadArgument(f"argument nesting deeper than {MAX_NESTING}")
    if arg is None or isinstance(arg, (bool, int, float, str, Node)):
        return arg
    if isinstance(arg, (tuple, list)):
        return tuple(normalize_arg(a, depth + 1) for a in arg)
    if isinstance(arg, dict):
        out = {}
        for k, v in arg.items():
            if not isinstance(k, str) or not _IDENT.match(k):
                raise BadArgument(f"mapping key {k!r} is not an identifier")
            out[k] = normalize_arg(v, depth + 1)
        return out
    # numpy scalars and the like
    if hasattr(arg, "item") and callable(arg.item):
        try:
            v = arg.item()
        except (TypeError, ValueError):
            v = arg
        if isinstance(v, (bool, int, float)):
            return v
    raise BadArgument(f"{type(arg).__name__} cannot be an immediate argument")


def _base_name(target: str) -> str:
    base = re.sub(r"[^A-Za-z0-9_]", "_", target) or "node"
    if base[0].isdigit():
        base = "_" + base
    if keyword.iskeyword(base) or base in RESERVED_NAMES:
        base = base + "_"
    return base


def _check_arity(op: str, args: tuple, kwargs: dict) -> None:
    if op == "get_attr" and (args or kwargs):
        raise BadArgument("get_attr takes no arguments")
    if op == "placeholder":
        if kwargs or len(args) > 1 or any(True for _ in iter_nodes(args)):
            raise BadArgument("placeholder takes at most one immediate default")
    if op == "output" and (len(args) != 1 or kwargs):
        raise BadArgument("output takes exactly one argument")
    if op == "call_method" and not args:
        raise BadArgument("call_method needs args[0] as self")


class Graph:
    def __init__(self, name: str = "forward"):
        self.name = name
        self._nodes: list[Node] = []
        self._names: set[str] = set()
        # (mode, anchor): mode in {"after", "before"}; anchor None means the default point
        self._insert: tuple[str, Node | None] = ("before", None)

    # ---- inspection -------------------------------------------------------
    @property
    def nodes(self) -> list[Node]:
        return list(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def __iter__(self):
        return iter(list(self._nodes))

    @property
    def placeholders(self) -> list[Node]:
        return [n for n in self._nodes if n.op == "placeholder"]

    @property
    def output_node(self) -> Node | None:
        for n in reversed(self._nodes):
            if n.op == "output":
                return n
        return None

    def node(self, name: str) -> Node:
        for n in self._nodes:
            if n.name == name:
                return n
        raise NodeNotInGraph(name)

    def index(self, n: Node) -> int:
        if n.graph is not self:
            raise NodeNotInGraph(f"{n.name} belongs to another graph")
        try:
            return self._nodes.index(n)
        except ValueError:
            raise NodeNotInGraph(n.name) from None

    def __contains__(self, n: Node) -> bool:
        return any(m is n for m in self._nodes)

    # ---- insertion point --------------------------------------------------
    @contextmanager
    def inserting_after(self, n: Node):
        self.index(n)
        saved, self._insert = self._insert, ("after", n)
        try:
            yield
        finally:
            self._insert = saved

    @contextmanager
    def inserting_before(self, n: Node):
        self.index(n)
        saved, self._insert = self._insert, ("before", n)
        try:
            yield
        finally:
            self._insert = saved

    def _insertion_index(self) -> int:
        mode, anchor = self._insert
        if anchor is None:
            out = self.output_node
            return self.index(out) if out is not None else len(self._nodes)
        i = self.index(anchor)
        return i + 1 if mode == "after" else i

    # ---- creation ---------------------------------------------------------
    def _unique_name(self, base: str) -> str:
        if base not in self._names:
            return base
        i = 1
        while f"{base}_{i}" in self._names:
            i += 1
        return f"{base}_{i}"

    def create_node(self, op: str, target: str, args=(), kwargs=None, name: str | None = None) -> Node:
        if op not in OPCODES:
            raise BadTarget(f"unknown opcode {op!r}")
        if not isinstance(target, str) or not target:
            raise BadTarget(f"{op} target must be non-empty text, got {target!r}")
        if op in ("call_module", "get_attr") and not _PATH.match(target):
            raise BadTarget(f"{op} target {target!r} is not a dotted module path")
        if op in ("call_function", "call_method", "placeholder") and not _IDENT.match(target):
            raise BadTarget(f"{op} target {target!r} is not an identifier")
        args = normalize_arg(tuple(args))
        kwargs = normalize_arg(dict(kwargs or {}))
        _check_arity(op, args, kwargs)
        if op == "output" and self.output_node is not None:
            raise DuplicateOutput("graph already has an output node")

        idx = self._insertion_index()
        n_ph = len(self.placeholders)
        if op == "placeholder":
            if idx > n_ph:
                raise BadPlacement("placeholders must precede all other nodes")
        elif idx < n_ph:
            raise BadPlacement(f"cannot place {op} among placeholders")
        if op == "output" and idx != len(self._nodes):
            raise BadPlacement("output must be the last node")
        out = self.output_node
        if op != "output" and out is not None and idx > self.index(out):
            raise BadPlacement("cannot place a node after output")

        before = self._nodes[:idx]
        for ref in iter_nodes((args, kwargs)):
            if ref.graph is not self or not any(ref is b for b in before):
                raise UseBeforeDef(f"{ref.name} is not defined before the insertion point")

        if op == "output":
            node_name = "output"
        elif op == "placeholder":
            node_name = self._unique_name(_base_name(name or target))
            target = node_name
        else:
            node_name = self._unique_name(_base_name(name or target))
        node = Node(self, node_name, op, target, args, kwargs)
        self._nodes.insert(idx, node)
        self._names.add(node_name)
        for ref in iter_nodes((args, kwargs)):
            ref.users.setdefault(node)
        mode, anchor = self._insert
        if mode == "after" and anchor is not None:
            self._insert = ("after", node)
        return node

    def placeholder(self, name: str, default=None, has_default: bool = False) -> Node:
        args = (default,) if has_default else ()
        return self.create_node("placeholder", name, args)

    def call_function(self, target: str, args=(), kwargs=None, name=None) -> Node:
        return self.create_node("call_function", target, args, kwargs, name)

    def call_method(self, target: str, args=(), kwargs=None, name=None) -> Node:
        return self.create_node("call_method", target, args, kwargs, name)

    def call_module(self, target: str, args=(), kwargs=None, name=None) -> Node:
        return self.create_node("call_module", target, args, kwargs, name)

    def get_attr(self, target: str, name=None) -> Node:
        return self.create_node("get_attr", target, (), None, name)

    def output(self, value) -> Node:
        return self.create_node("output", "output", (value,))

    # ---- mutation ---------------------------------------------------------
    def replace_all_uses_with(self, old: Node, new: Node, skip: set[Node] | None = None) -> int:
        """Rewrite every reference to ``old`` into ``new``; returns the number of rewritten uses."""
        self.index(old)
        new_idx = self.index(new)
        skip = skip or set()
        users = [u for u in old.users if u not in skip]
        for u in users:
            if self.index(u) <= new_idx:
                raise UseBeforeDef(f"{new.name} is not defined before user {u.name}")
        count = 0
        for u in users:
            hits = 0

            def swap(n: Node) -> Node:
                nonlocal hits
                if n is old:
                    hits += 1
                    return new
                return n

            u.args = map_arg(u.args, swap)
            u.kwargs = map_arg(u.kwargs, swap)
            count += hits
            old.users.pop(u, None)
            new.users.setdefault(u)
        return count

    def erase_node(self, n: Node) -> None:
        self.index(n)
        if n.op == "output":
            raise CannotEraseOutput("the output node cannot be erased")
        if n.users:
            raise HasUsers(n.name, [u.name for u in n.users])
        self._nodes.remove(n)
        self._names.discard(n.name)
        for ref in iter_nodes((n.args, n.kwargs)):
            ref.users.pop(n, None)

    def set_args(self, n: Node, args=None, kwargs=None) -> None:
        """Replace a node's args/kwargs keeping users sets exact."""
        new_args = n.args if args is None else normalize_arg(tuple(args))
        new_kwargs = n.kwargs if kwargs is None else normalize_arg(dict(kwargs))
        _check_arity(n.op, new_args, new_kwargs)
        idx = self.index(n)
        for ref in iter_nodes((new_args, new_kwargs)):
            if ref.graph is not self or self.index(ref) >= idx:
                raise UseBeforeDef(f"{ref.name} is not defined before {n.name}")
        for ref in iter_nodes((n.args, n.kwargs)):
            ref.users.pop(n, None)
        n.args, n.kwargs = new_args, new_kwargs
        for ref in iter_nodes((new_args, new_kwargs)):
            ref.users.setdefault(n)

    # ---- whole-graph ------------------------------------------------------
    def copy(self) -> "Graph":
        return graph_copy(self)

    def lint(self) -> list[str]:
        return lint(self)


def graph_copy(g: Graph) -> Graph:
    new = Graph(g.name)
    mapping: dict[Node, Node] = {}
    for n in g._nodes:
        m = Node(new, n.name, n.op, n.target, (), {})
        m.args = map_arg(n.args, lambda r: mapping[r])
        m.kwargs = map_arg(n.kwargs, lambda r: mapping[r])
        m.meta = dict(n.meta)
        for ref in iter_nodes((m.args, m.kwargs)):
            ref.users.setdefault(m)
        new._nodes.append(m)
        new._names.add(m.name)
        mapping[n] = m
    return new


def _depth(arg, d: int = 0) -> int:
    if isinstance(arg, (tuple, list)):
        return max([_depth(a, d + 1) for a in arg], default=d + 1)
    if isinstance(arg, dict):
        return max([_depth(a, d + 1) for a in arg.values()], default=d + 1)
    return d


def _bad_keys(arg) -> bool:
    if isinstance(arg, (tuple, list)):
        return any(_bad_keys(a) for a in arg)
    if isinstance(arg, dict):
        return any(not (isinstance(k, str) and _IDENT.match(k)) or _bad_keys(v) for k, v in arg.items())
    return False


def lint(g: Graph) -> list[str]:
    """Structural violations of ``g``; an empty list means the graph is well formed."""
    out: list[str] = []
    nodes = g._nodes
    pos = {n: i for i, n in enumerate(nodes)}
    names = [n.name for n in nodes]
    if len(set(names)) != len(names):
        out.append("duplicate-name")
    outputs = [n for n in nodes if n.op == "output"]
    if not outputs:
        out.append("no-output")
    elif len(outputs) > 1:
        out.append("multiple-outputs")
    elif nodes[-1] is not outputs[0]:
        out.append("output-not-last")
    seen_op = False
    for n in nodes:
        if n.op == "placeholder":
            if seen_op:
                out.append("placeholder-after-op")
        else:
            seen_op = True
    for i, n in enumerate(nodes):
        if n.op not in OPCODES:
            out.append("bad-opcode")
            continue
        if n.graph is not g:
            out.append("foreign-node")
        for ref in iter_nodes((n.args, n.kwargs)):
            if ref not in pos:
                out.append("dangling-ref")
            elif pos[ref] >= i:
                out.append("use-before-def")
        if _depth((n.args, n.kwargs)) > MAX_NESTING + 1:
            out.append("nesting-too-deep")
        if _bad_keys(n.kwargs) or _bad_keys(n.args):
            out.append("bad-mapping-key")
        if n.op == "get_attr" and (n.args or n.kwargs):
            out.append("get_attr-args-nonempty")
        if n.op == "placeholder" and (n.kwargs or len(n.args) > 1 or any(True for _ in iter_nodes(n.args))):
            out.append("placeholder-args")
        if n.op == "output" and (len(n.args) != 1 or n.kwargs):
            out.append("output-arity")
        if n.op == "call_method" and not n.args:
            out.append("call_method-no-self")
    # users must match a full re-scan
    expected: dict[Node, set[Node]] = {n: set() for n in nodes}
    for n in nodes:
        for ref in iter_nodes((n.args, n.kwargs)):
            if ref in expected:
                expected[ref].add(n)
    for n in nodes:
        if set(n.users) != expected[n]:
            out.append("users-mismatch")
            break
    return out
