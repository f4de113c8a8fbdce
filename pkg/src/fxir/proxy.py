"""Proxy values and the per-thread active trace session."""
from __future__ import annotations

import difflib
import threading

from .errors import TraceError

_state = threading.local()


def current_tracer():
    return getattr(_state, "tracer", None)


def set_current_tracer(tracer):
    prev = current_tracer()
    _state.tracer = tracer
    return prev


def find_tracer(arg):
    """Tracer of the first proxy found inside ``arg`` (recursing through containers)."""
    if isinstance(arg, Proxy):
        return arg.tracer
    if isinstance(arg, (tuple, list)):
        for a in arg:
            t = find_tracer(a)
            if t is not None:
                return t
    elif isinstance(arg, dict):
        for a in arg.values():
            t = find_tracer(a)
            if t is not None:
                return t
    return None


def _unsupported(what: str):
    def method(self, *args, **kwargs):
        raise TraceError(
            TraceError.UNSUPPORTED,
            self.node.name,
            f"operator {what} on proxy {self.node.name!r} is not traceable "
            f"(supported: +, *, unary -, @, comparisons, indexing)",
        )

    return method


class Proxy:
    """Abstract stand-in for a runtime value; every operation on it becomes a node."""

    __slots__ = ("node", "tracer")

    def __init__(self, node, tracer):
        self.node = node
        self.tracer = tracer

    def __repr__(self):
        return f"Proxy({self.node.name})"

    def _fn(self, target, *args, **kwargs):
        return self.tracer.create_proxy("call_function", target, args, kwargs)

    # recorded operators
    def __add__(self, other):
        return self._fn("add", self, other)

    def __radd__(self, other):
        return self._fn("add", other, self)

    def __mul__(self, other):
        return self._fn("mul", self, other)

    def __rmul__(self, other):
        return self._fn("mul", other, self)

    def __neg__(self):
        return self._fn("neg", self)

    def __matmul__(self, other):
        return self._fn("matmul", self, other)

    def __rmatmul__(self, other):
        return self._fn("matmul", other, self)

    def __getitem__(self, index):
        return self._fn("getitem", self, index)

    def __gt__(self, other):
        return self._fn("gt", self, other)

    def __lt__(self, other):
        return self._fn("lt", self, other)

    def __ge__(self, other):
        return self._fn("ge", self, other)

    def __le__(self, other):
        return self._fn("le", self, other)

    __sub__ = _unsupported("-")
    __rsub__ = _unsupported("-")
    __truediv__ = _unsupported("/")
    __rtruediv__ = _unsupported("/")
    __floordiv__ = _unsupported("//")
    __mod__ = _unsupported("%")
    __pow__ = _unsupported("**")
    __abs__ = _unsupported("abs")
    __invert__ = _unsupported("~")

    # values the trace cannot know
    def __bool__(self):
        raise TraceError(
            TraceError.CONTROL_FLOW,
            self.node.name,
            f"value {self.node.name!r} used as a branch or loop condition; "
            "data-dependent control flow cannot be captured",
        )

    def __index__(self):
        raise TraceError(
            TraceError.CONTROL_FLOW,
            self.node.name,
            f"value {self.node.name!r} used as a loop bound or index; "
            "data-dependent control flow cannot be captured",
        )

    def __iter__(self):
        raise TraceError(
            TraceError.CONTROL_FLOW,
            self.node.name,
            f"iteration over {self.node.name!r} depends on runtime data",
        )

    def _coerce(self, kind: str):
        raise TraceError(
            TraceError.COERCION,
            self.node.name,
            f"cannot cast {self.node.name!r} to a concrete {kind} during tracing",
        )

    def __int__(self):
        self._coerce("int")

    def __float__(self):
        self._coerce("float")

    def __len__(self):
        self._coerce("length")

    def __getattr__(self, name):
        if name.startswith("__"):
            raise AttributeError(name)
        from .functional import METHODS

        if name in METHODS:
            def method(*args, **kwargs):
                return self.tracer.create_proxy("call_method", name, (self, *args), kwargs)

            return method
        close = difflib.get_close_matches(name, list(METHODS), n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise TraceError(
            TraceError.UNSUPPORTED,
            self.node.name,
            f"method {name!r} is not traceable (allowed: {', '.join(sorted(METHODS))}){hint}",
        )
