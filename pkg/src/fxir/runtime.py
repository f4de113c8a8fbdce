"""GraphModule and its interpreter, plus the linear-form text format.

Linear form::

    graph <name> (<p1>, <p2>=<default>, ...) {
      <name> = <opcode> <target> (<arg>, ...) {<k>=<arg>, ...}
      return <arg>
    }

``<arg>`` is ``%node``, an integer, a real, ``true``/``false``, a JSON string,
``none``, ``[<arg>, ...]`` or ``{<k>=<arg>, ...}``. Comment lines start with
``#``; ``# key: value`` lines before the header are kept as metadata.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    ArityMismatch,
    FxirError,
    GraphError,
    LintFailed,
    ParseError,
    PathNotFound,
    UnresolvedState,
)
from .functional import FUNCTIONS, METHODS
from .graph import OPCODES, Graph, Node, iter_nodes, lint
from .modules import Kind, Module, forward_eval, resolve_path


class GraphModule(Module):
    """A captured graph together with the module state it references."""

    kind = Kind.GRAPH_MODULE

    def __init__(self, root: Module, graph: Graph, name: str | None = None):
        super().__init__()
        if root is not None:
            src = root.copy_tree()
            object.__setattr__(self, "_params", src._params)
            object.__setattr__(self, "_buffers", src._buffers)
            object.__setattr__(self, "_children", src._children)
        self.graph = graph
        if name:
            graph.name = name
        self.code = ""
        missing = [p for p in required_state(graph) if not _resolves(self, p)]
        if missing:
            raise UnresolvedState(f"graph needs {', '.join(missing)} which the root lacks")
        self.recompile()

    @property
    def name(self) -> str:
        return self.graph.name

    def recompile(self) -> str:
        violations = lint(self.graph)
        if violations:
            raise LintFailed(violations)
        self.code = to_linear_form(self.graph)
        return self.code

    def forward(self, *inputs):
        return interpret(self, list(inputs))

    def copy_tree(self) -> "GraphModule":
        new = super().copy_tree()
        new.graph = self.graph.copy()
        return new

    def extra_repr(self):
        return self.graph.name


def _resolves(root: Module, path: str) -> bool:
    try:
        resolve_path(root, path)
    except PathNotFound:
        return False
    return True


def required_state(graph: Graph) -> list[str]:
    seen: dict[str, None] = {}
    for n in graph.nodes:
        if n.op in ("call_module", "get_attr"):
            seen.setdefault(n.target)
    return list(seen)


def recompile(gm: GraphModule) -> str:
    return gm.recompile()


# ---- interpreter --------------------------------------------------------------

def liveness(graph: Graph) -> list[list[str]]:
    """For each node position, the names whose last use is that node.

    Values without users die right after they are produced; the value
    returned by ``output`` is never freed.
    """
    nodes = graph.nodes
    last: dict[str, int] = {}
    for i, n in enumerate(nodes):
        last[n.name] = i
        for ref in iter_nodes((n.args, n.kwargs)):
            last[ref.name] = i
    free: list[list[str]] = [[] for _ in nodes]
    for name, i in last.items():
        if nodes[i].op != "output":
            free[i].append(name)
    return free


def _run_module(mod: Module, args, kwargs):
    if mod.kind is Kind.USER:
        # user modules only execute as captured graphs
        from .tracer import symbolic_trace

        return interpret(symbolic_trace(mod), list(args), kwargs)
    return forward_eval(mod, list(args), kwargs)


def interpret(gm: GraphModule, inputs, kwargs=None, *, observe: Callable[[Node, object], None] | None = None,
              stats: dict | None = None):
    """Evaluate ``gm.graph`` on concrete inputs.

    ``observe(node, value)`` is called after each node; ``stats`` (if given)
    receives ``peak_live`` (count of simultaneously live values).
    """
    graph = gm.graph
    inputs = list(inputs)
    kwargs = dict(kwargs or {})
    phs = graph.placeholders
    if len(inputs) > len(phs):
        raise ArityMismatch(f"{graph.name} takes {len(phs)} inputs, got {len(inputs)}")
    free = liveness(graph)
    env: dict[str, object] = {}

    def load(a):
        if isinstance(a, Node):
            return env[a.name]
        if isinstance(a, tuple):
            return tuple(load(x) for x in a)
        if isinstance(a, dict):
            return {k: load(v) for k, v in a.items()}
        return a

    peak = 0
    result = None
    for i, n in enumerate(graph.nodes):
        try:
            if n.op == "placeholder":
                idx = phs.index(n)
                if idx < len(inputs):
                    val = inputs[idx]
                elif n.target in kwargs:
                    val = kwargs[n.target]
                elif n.args:
                    val = n.args[0]
                else:
                    raise ArityMismatch(f"missing input {n.target!r} with no default")
            elif n.op == "get_attr":
                val = resolve_path(gm, n.target)
            elif n.op == "call_function":
                val = FUNCTIONS[n.target].fn(*load(n.args), **load(n.kwargs))
            elif n.op == "call_method":
                self_val, *rest = load(n.args)
                val = METHODS[n.target].fn(self_val, *rest, **load(n.kwargs))
            elif n.op == "call_module":
                val = _run_module(resolve_path(gm, n.target), load(n.args), load(n.kwargs))
            else:
                result = load(n.args[0])
                val = result
        except FxirError as e:
            if e.node is None:
                e.node = n.name
            raise
        except (KeyError, TypeError, ValueError, IndexError) as e:
            err = FxirError(f"{n.op} {n.target} failed: {type(e).__name__}: {e}")
            err.node = n.name
            raise err from e
        env[n.name] = val
        if observe is not None:
            observe(n, val)
        peak = max(peak, len(env))
        for name in free[i]:
            env.pop(name, None)
    if stats is not None:
        stats["peak_live"] = peak
    return result


# ---- linear form ----------------------------------------------------------------

def format_arg(a) -> str:
    if isinstance(a, Node):
        return f"%{a.name}"
    if a is None:
        return "none"
    if isinstance(a, bool):
        return "true" if a else "false"
    if isinstance(a, int):
        return str(a)
    if isinstance(a, float):
        if not math.isfinite(a):
            raise GraphError(f"non-finite immediate {a!r} cannot be serialized")
        return repr(a)
    if isinstance(a, str):
        return json.dumps(a, ensure_ascii=False)
    if isinstance(a, (tuple, list)):
        return "[" + ", ".join(format_arg(x) for x in a) + "]"
    if isinstance(a, dict):
        return "{" + ", ".join(f"{k}={format_arg(v)}" for k, v in a.items()) + "}"
    raise GraphError(f"cannot serialize {type(a).__name__}")


def _graph_name(name: str) -> str:
    name = re.sub(r"[^A-Za-z0-9_]", "_", name or "forward")
    return name if not name[0].isdigit() else "_" + name


def to_linear_form(graph: Graph) -> str:
    params = []
    for p in graph.placeholders:
        params.append(f"{p.name}={format_arg(p.args[0])}" if p.args else p.name)
    lines = [f"graph {_graph_name(graph.name)} ({', '.join(params)}) {{"]
    for n in graph.nodes:
        if n.op == "placeholder":
            continue
        if n.op == "output":
            lines.append(f"  return {format_arg(n.args[0])}")
            continue
        line = f"  {n.name} = {n.op} {n.target} ({', '.join(format_arg(a) for a in n.args)})"
        if n.kwargs:
            line += " {" + ", ".join(f"{k}={format_arg(v)}" for k, v in n.kwargs.items()) + "}"
        lines.append(line)
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_graph(gm, model: str | None = None, meta: dict[str, str] | None = None) -> str:
    graph = gm.graph if isinstance(gm, GraphModule) else gm
    violations = lint(graph)
    if violations:
        raise LintFailed(violations)
    head = []
    if model is not None:
        head.append(f"# model: {model}")
    for k, v in (meta or {}).items():
        head.append(f"# {k}: {v}")
    return "".join(h + "\n" for h in head) + to_linear_form(graph)


@dataclass
class ParsedGraph:
    """A parsed graph plus the state paths it needs before it can run."""

    graph: Graph
    model: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def required_state(self) -> list[str]:
        return required_state(self.graph)

    def attach(self, root: Module) -> GraphModule:
        return GraphModule(root, self.graph)


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TARGET = re.compile(r"[A-Za-z0-9_]+(?:\.[A-Za-z0-9_]+)*")
_NUMBER = re.compile(r"-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_OPS = set(OPCODES) - {"placeholder", "output"}


class _Line:
    def __init__(self, text: str, lineno: int, defined: dict[str, Node]):
        self.text = text
        self.lineno = lineno
        self.pos = 0
        self.defined = defined

    def error(self, msg: str, pos: int | None = None):
        return ParseError(self.lineno, (self.pos if pos is None else pos) + 1, msg)

    def ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        self.ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def match(self, rx: re.Pattern, what: str) -> str:
        self.ws()
        m = rx.match(self.text, self.pos)
        if not m:
            raise self.error(f"expected {what}")
        self.pos = m.end()
        return m.group(0)

    def at_end(self) -> bool:
        return self.peek() == ""

    def arg(self):
        c = self.peek()
        start = self.pos
        if c == "%":
            self.pos += 1
            name = self.match(_IDENT, "node name")
            if name not in self.defined:
                raise self.error(f"reference to undefined node %{name}", start)
            return self.defined[name]
        if c == '"':
            try:
                s, end = json.decoder.scanstring(self.text, self.pos + 1)
            except json.JSONDecodeError as e:
                raise self.error(f"bad string literal: {e.msg}") from None
            self.pos = end
            return s
        if c == "[":
            self.pos += 1
            items = self.seq("]", self.arg)
            return tuple(items)
        if c == "{":
            self.pos += 1
            return dict(self.seq("}", self.pair))
        m = _IDENT.match(self.text, self.pos)
        if m:
            word = m.group(0)
            consts = {"true": True, "false": False, "none": None}
            if word not in consts:
                raise self.error(f"unexpected word {word!r}")
            self.pos = m.end()
            return consts[word]
        tok = self.match(_NUMBER, "argument")
        if any(ch in tok for ch in ".eE"):
            return float(tok)
        return int(tok)

    def pair(self):
        key = self.match(_IDENT, "keyword name")
        self.expect("=")
        return key, self.arg()

    def seq(self, close: str, item):
        out = []
        if self.peek() == close:
            self.pos += 1
            return out
        while True:
            out.append(item())
            c = self.peek()
            if c == ",":
                self.pos += 1
                continue
            if c == close:
                self.pos += 1
                return out
            raise self.error(f"expected ',' or {close!r}")


def parse_graph(text: str) -> ParsedGraph:
    lines = text.split("\n")
    meta: dict[str, str] = {}
    defined: dict[str, Node] = {}
    graph: Graph | None = None
    closed = False
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if graph is None:
                body = stripped[1:].strip()
                if ":" in body:
                    k, v = body.split(":", 1)
                    meta[k.strip()] = v.strip()
            continue
        if closed:
            raise ParseError(lineno, 1, "content after closing brace")
        ln = _Line(raw, lineno, defined)
        if graph is None:
            if ln.match(_IDENT, "'graph'") != "graph":
                raise ln.error("expected 'graph' header", 0)
            graph = Graph(ln.match(_IDENT, "graph name"))
            ln.expect("(")

            def param():
                start = ln.pos
                name = ln.match(_IDENT, "parameter name")
                if name in defined:
                    raise ln.error(f"duplicate node name {name!r}", start)
                has_default = ln.peek() == "="
                default = None
                if has_default:
                    ln.pos += 1
                    default = ln.arg()
                node = _create(ln, start, lambda: graph.placeholder(name, default, has_default))
                _check_name(ln, start, node, name)
                defined[name] = node

            ln.seq(")", param)
            ln.expect("{")
            if not ln.at_end():
                raise ln.error("trailing text after header")
            continue
        if stripped == "}":
            if graph.output_node is None:
                raise ParseError(lineno, 1, "graph has no return")
            closed = True
            continue
        start = ln.pos
        word = ln.match(_IDENT, "node name or 'return'")
        if word == "return" and ln.peek() != "=":
            value = ln.arg()
            _create(ln, start, lambda: graph.output(value))
        else:
            if word in defined or word == "output":
                raise ln.error(f"duplicate node name {word!r}", start)
            ln.expect("=")
            op_pos = ln.pos
            op = ln.match(_IDENT, "opcode")
            if op not in _OPS:
                raise ln.error(f"unknown opcode {op!r}", op_pos)
            target = ln.match(_TARGET, "target")
            ln.expect("(")
            args = ln.seq(")", ln.arg)
            kwargs = {}
            if ln.peek() == "{":
                ln.pos += 1
                kwargs = dict(ln.seq("}", ln.pair))
            node = _create(ln, start, lambda: graph.create_node(op, target, args, kwargs, name=word))
            _check_name(ln, start, node, word)
            defined[word] = node
        if not ln.at_end():
            raise ln.error("trailing text")
    if graph is None:
        raise ParseError(len(lines), 1, "missing graph header")
    if not closed:
        raise ParseError(len(lines), 1, "missing closing brace")
    violations = lint(graph)
    if violations:
        raise LintFailed(violations)
    return ParsedGraph(graph, meta.pop("model", None), meta)


def _create(ln: _Line, pos: int, make):
    try:
        return make()
    except GraphError as e:
        raise ln.error(str(e), pos) from None


def _check_name(ln: _Line, pos: int, node: Node, want: str):
    if node.name != want:
        raise ln.error(f"node name {want!r} is reserved or duplicated", pos)


def format_node_listing(graph: Graph) -> str:
    """One line per node in the ``name = op target=... args=(...)`` style."""

    def py(a):
        if isinstance(a, Node):
            return a.name
        if isinstance(a, tuple):
            inner = ", ".join(py(x) for x in a)
            return f"({inner},)" if len(a) == 1 else f"({inner})"
        if isinstance(a, dict):
            return "{" + ", ".join(f"{k!r}: {py(v)}" for k, v in a.items()) + "}"
        return repr(a)

    lines = []
    for n in graph.nodes:
        line = f"{n.name} = {n.op} target={n.target} args={py(n.args)}"
        if n.kwargs:
            line += f" kwargs={py(n.kwargs)}"
        lines.append(line)
    return "\n".join(lines)
