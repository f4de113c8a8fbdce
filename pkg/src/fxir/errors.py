"""Exception hierarchy shared by every layer of the package."""


class FxirError(Exception):
    """Base class. ``node`` is filled in by the interpreter when a kernel fails."""

    node: str | None = None

    def __str__(self):
        msg = super().__str__()
        if self.node is not None:
            return f"{msg} (at node {self.node!r})"
        return msg


# tensor engine
class ShapeMismatch(FxirError):
    pass


class DtypeMismatch(FxirError):
    pass


class EmptyOutput(FxirError):
    pass


class InvalidQuantParams(FxirError):
    pass


# module system
class PathNotFound(FxirError):
    def __init__(self, segment: str, path: str = ""):
        super().__init__(f"no attribute {segment!r} while resolving {path!r}")
        self.segment = segment
        self.path = path


class UnsupportedKind(FxirError):
    pass


# graph IR
class GraphError(FxirError):
    pass


class UseBeforeDef(GraphError):
    pass


class DuplicateOutput(GraphError):
    pass


class BadTarget(GraphError):
    pass


class BadArgument(GraphError):
    pass


class BadPlacement(GraphError):
    pass


class NodeNotInGraph(GraphError):
    pass


class HasUsers(GraphError):
    def __init__(self, node: str, users: list[str]):
        super().__init__(f"node {node!r} still has users: {', '.join(users)}")
        self.users = users


class CannotEraseOutput(GraphError):
    pass


# tracer
class TraceError(FxirError):
    CONTROL_FLOW = "ControlFlowOnProxy"
    COERCION = "ConcreteCoercion"
    UNSUPPORTED = "UnsupportedOperation"

    def __init__(self, reason: str, node_name: str | None, message: str):
        super().__init__(f"{reason}: {message}")
        self.reason = reason
        self.node_name = node_name


# runtime
class ArityMismatch(FxirError):
    pass


class LintFailed(FxirError):
    def __init__(self, violations: list[str]):
        super().__init__("graph failed lint: " + ", ".join(violations))
        self.violations = violations


class ParseError(FxirError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnresolvedState(FxirError):
    pass


# analyses / quantization
class UnknownTransfer(FxirError):
    pass


class ShapeConflict(FxirError):
    pass


class UncalibratedObserver(FxirError):
    pass
