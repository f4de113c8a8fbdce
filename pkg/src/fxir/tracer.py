"""Symbolic tracing: run a program on proxies and record what it does."""
from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import Any, Callable

from .errors import TraceError
from .graph import Graph, Node, map_arg
from .modules import BUILTIN_LEAVES, Module, resolve_path
from .proxy import Proxy, current_tracer, set_current_tracer
from .runtime import GraphModule
from .tensor import Tensor


def default_leaf_predicate(module: Module, path: str) -> bool:
    return module.kind in BUILTIN_LEAVES


@dataclass
class TracerConfig:
    """``leaf_predicate(module, path)`` keeps a module opaque.

    ``proxy_hook(tracer, node)`` runs after every node creation; returning a
    value other than ``None`` vetoes the node and that value is used in its
    place (it must be a valid immediate argument).
    """

    leaf_predicate: Callable[[Module, str], bool] = default_leaf_predicate
    proxy_hook: Callable[["Tracer", Node], Any] | None = None


def leaf_paths_predicate(paths) -> Callable[[Module, str], bool]:
    """Default leaves plus every module whose path is in ``paths``."""
    paths = frozenset(paths)
    return lambda m, p: p in paths or default_leaf_predicate(m, p)


class Tracer:
    def __init__(self, config: TracerConfig | None = None):
        self.config = config or TracerConfig()
        self.graph: Graph | None = None
        self.root: Module | None = None
        self._paths: dict[int, str] = {}

    # ---- hooks a subclass may override ------------------------------------
    def is_leaf_module(self, module: Module, path: str) -> bool:
        return self.config.leaf_predicate(module, path)

    def create_proxy(self, op: str, target: str, args=(), kwargs=None, name: str | None = None):
        def unwrap(a):
            if isinstance(a, Proxy):
                if a.tracer is not self:
                    raise TraceError(TraceError.UNSUPPORTED, a.node.name, "proxy from another trace session")
                return a.node
            if isinstance(a, (tuple, list)):
                return tuple(unwrap(x) for x in a)
            if isinstance(a, dict):
                return {k: unwrap(v) for k, v in a.items()}
            if isinstance(a, Tensor):
                raise TraceError(
                    TraceError.UNSUPPORTED, None,
                    f"tensor constant passed to {target!r}; register it as a parameter instead",
                )
            if isinstance(a, Module):
                raise TraceError(TraceError.UNSUPPORTED, None, f"module passed as an argument to {target!r}")
            return a

        node = self.graph.create_node(op, target, unwrap(tuple(args)), unwrap(dict(kwargs or {})), name)
        hook = self.config.proxy_hook
        if hook is not None:
            replacement = hook(self, node)
            if replacement is not None:
                self.graph.erase_node(node)
                return replacement
        return Proxy(node, self)

    # ---- module / attribute interception ---------------------------------
    def path_of(self, module: Module) -> str | None:
        return self._paths.get(id(module))

    def attr_proxy(self, module: Module, name: str):
        path = self.path_of(module)
        if path is None:
            return None
        return self.create_proxy("get_attr", f"{path}.{name}" if path else name)

    def call_module(self, module: Module, args, kwargs):
        path = self.path_of(module)
        if path is None:
            raise TraceError(
                TraceError.UNSUPPORTED, None,
                f"{type(module).__name__} is not part of the traced module hierarchy",
            )
        if path and self.is_leaf_module(module, path):
            return self.create_proxy("call_module", path, args, kwargs)
        if isinstance(module, GraphModule):
            return self._inline(module, path, args, kwargs)
        return module.forward(*args, **kwargs)

    def _inline(self, gm: GraphModule, prefix: str, args, kwargs):
        """Replay ``gm``'s graph node by node on proxies."""
        env: dict[Node, Any] = {}
        phs = gm.graph.placeholders
        if len(args) > len(phs):
            raise TraceError(TraceError.UNSUPPORTED, None, f"{gm.name} takes {len(phs)} inputs, got {len(args)}")

        def load(a):
            return map_arg(a, lambda n: env[n])

        def full(target):
            return f"{prefix}.{target}" if prefix else target

        for i, n in enumerate(phs):
            if i < len(args):
                env[n] = args[i]
            elif n.target in kwargs:
                env[n] = kwargs[n.target]
            elif n.args:
                env[n] = n.args[0]
            else:
                raise TraceError(TraceError.UNSUPPORTED, n.name, f"missing input {n.target!r}")
        result = None
        for n in gm.graph.nodes:
            if n.op == "placeholder":
                continue
            if n.op == "output":
                result = load(n.args[0])
            elif n.op == "get_attr":
                env[n] = self.create_proxy("get_attr", full(n.target), name=n.name)
            elif n.op == "call_module":
                sub = resolve_path(gm, n.target)
                env[n] = self._call_module_named(sub, load(n.args), load(n.kwargs), n.name)
            else:
                env[n] = self.create_proxy(n.op, n.target, load(n.args), load(n.kwargs), name=n.name)
        return result

    def _call_module_named(self, module, args, kwargs, name):
        path = self.path_of(module) if isinstance(module, Module) else None
        if path is not None and path and self.is_leaf_module(module, path):
            return self.create_proxy("call_module", path, args, kwargs, name=name)
        return self.call_module(module, args, kwargs)

    # ---- entry point ------------------------------------------------------
    def trace(self, root, name: str | None = None) -> GraphModule:
        if current_tracer() is not None:
            raise TraceError(TraceError.UNSUPPORTED, None, "a trace session is already active on this thread")
        if isinstance(root, Module):
            module = root
            fn = None
        elif callable(root):
            module, fn = Module(), root
        else:
            raise TypeError(f"cannot trace {type(root).__name__}")
        gname = name or (getattr(fn, "__name__", None) if fn else None)
        if gname is None:
            gname = root.name if isinstance(root, GraphModule) else type(root).__name__
        self.graph = Graph(gname)
        self.root = module
        self._paths = {id(m): p for p, m in module.named_modules()}

        saved = set_current_tracer(self)
        try:
            if isinstance(module, GraphModule) and fn is None:
                args = [self.create_proxy("placeholder", p.target, p.args) for p in module.graph.placeholders]
                out = self._inline(module, "", args, {})
            else:
                call = fn if fn is not None else module.forward
                args = []
                for p in inspect.signature(call).parameters.values():
                    if p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
                        raise TraceError(TraceError.UNSUPPORTED, None, "variadic forward signatures are not traceable")
                    default = () if p.default is inspect.Parameter.empty else (p.default,)
                    args.append(self.create_proxy("placeholder", p.name, default))
                if fn is None and module.kind in BUILTIN_LEAVES:
                    out = module.forward(*args)
                else:
                    out = call(*args)
            self.create_proxy("output", "output", (out,))
        finally:
            set_current_tracer(saved)
        return GraphModule(module, self.graph)


def symbolic_trace(root, config: TracerConfig | None = None, name: str | None = None) -> GraphModule:
    return Tracer(config).trace(root, name)
