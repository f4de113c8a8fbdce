"""Command-line front end: ``fxir <command> <model-or-graph-file> [options]``.

Graph files are linear-form text with a ``# model: <zoo name>`` header. The
extra ``# seed:``, ``# passes:`` and ``# calib-batches:`` headers let the CLI
rebuild the module state a transformed graph refers to.

Exit codes: 0 ok, 1 usage, 2 trace error, 3 parse/lint/state error.
"""
from __future__ import annotations

import argparse
import difflib
import os
import sys

import numpy as np

from .errors import FxirError, LintFailed, ParseError, TraceError, UnresolvedState
from .passes import analysis, quant
from .passes.transform import PassReport, eliminate_common_subexpressions, eliminate_dead_code, fuse_conv_bn
from .runtime import GraphModule, format_node_listing, interpret, parse_graph, serialize_graph
from .tracer import TracerConfig, leaf_paths_predicate, symbolic_trace
from .zoo import lookup, random_input

COMMANDS = ("trace", "run", "codegen", "dot", "shapes", "flops", "fuse", "quantize", "cse", "dce", "roundtrip")
N_CHECK_INPUTS = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fxir", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("model", help="zoo model name or path to a linear-form graph file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-shape", default=None, help="comma-separated dims, e.g. 1,3,8,8")
    p.add_argument("--out", default=None, help="write the resulting graph (or DOT) here")
    p.add_argument("--calib-batches", type=int, default=8)
    p.add_argument("--leaf", action="append", default=[], metavar="PATH",
                   help="keep the module at PATH opaque during tracing (repeatable)")
    return p


class Session:
    """The model being worked on plus what is needed to rebuild its state."""

    def __init__(self, args):
        self.args = args
        self.passes: list[str] = []
        self.seed = args.seed
        self.calib_batches = args.calib_batches
        self.shape = None
        if os.path.isfile(args.model):
            self._load_file(args.model)
        else:
            self.model_name = args.model
            self.entry = self._entry(args.model)
            self.shape = self._input_shape()
            self.gm = self._trace()

    @staticmethod
    def _entry(name):
        try:
            return lookup(name)
        except KeyError as e:
            raise UsageError(e.args[0]) from None

    def _trace(self) -> GraphModule:
        cfg = TracerConfig(leaf_predicate=leaf_paths_predicate(self.args.leaf))
        return symbolic_trace(self.entry.build(self.seed), cfg, name=self.model_name)

    def _load_file(self, path: str):
        with open(path, encoding="utf-8") as fh:
            parsed = parse_graph(fh.read())
        if parsed.model is None:
            raise ParseError(1, 1, "graph file lacks a '# model: <name>' header")
        self.model_name = parsed.model
        self.entry = self._entry(parsed.model)
        self.shape = self._input_shape()
        self.seed = int(parsed.meta.get("seed", self.seed))
        self.calib_batches = int(parsed.meta.get("calib-batches", self.calib_batches))
        self.passes = [p.strip() for p in parsed.meta.get("passes", "").split(",") if p.strip()]
        base = self._trace()
        for name in self.passes:
            base = self.apply(name, base)[0]
        self.gm = parsed.attach(base)

    def _input_shape(self):
        if self.args.input_shape:
            try:
                return tuple(int(d) for d in self.args.input_shape.split(","))
            except ValueError:
                raise UsageError(f"bad --input-shape {self.args.input_shape!r}") from None
        return self.entry.input_shape

    def inputs(self, seed: int):
        return [random_input(self.shape, seed)]

    def apply(self, name: str, gm: GraphModule):
        """Run one named pass on a copy of ``gm``; returns (new gm, report)."""
        gm = gm.copy_tree()
        if name == "fuse":
            return gm, fuse_conv_bn(gm)
        if name == "cse":
            return gm, eliminate_common_subexpressions(gm)
        if name == "dce":
            return gm, eliminate_dead_code(gm)
        if name == "quantize":
            before = len(gm.graph)
            batches = [self.calib_input(i) for i in range(self.calib_batches)]
            prepared, converted = quant.quantize_model(gm, batches)
            report = PassReport("quantize", before, len(converted.graph))
            report.rewrites = sum(
                1 for n in converted.graph.nodes if n.op == "call_module" and n.target.startswith("quantized_")
            )
            report.notes.append(f"observers: {len(quant.observer_nodes(prepared))}")
            self.prepared = prepared
            return converted, report
        raise UsageError(f"unknown pass {name!r}")

    def calib_input(self, i: int):
        return random_input(self.shape, self.seed * 1000 + i)

    def save(self, gm: GraphModule, passes: list[str]):
        meta = {"seed": str(self.seed)}
        if passes:
            meta["passes"] = ",".join(passes)
        if "quantize" in passes:
            meta["calib-batches"] = str(self.calib_batches)
        return serialize_graph(gm, model=self.model_name, meta=meta)


def _fmt_shape(shape) -> str:
    return "-" if shape is None else "[" + ",".join(map(str, shape)) + "]"


def _max_abs_diff(a, b) -> float:
    return float(np.max(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)))) if a.numel else 0.0


def _emit(out, text: str):
    out.write(text if text.endswith("\n") else text + "\n")


def run_command(args, out) -> int:
    s = Session(args)
    gm = s.gm
    cmd = args.command
    if cmd == "trace":
        _emit(out, format_node_listing(gm.graph))
        _emit(out, "")
        _emit(out, gm.code)
    elif cmd == "codegen":
        _emit(out, gm.code)
    elif cmd == "run":
        result = interpret(gm, s.inputs(s.seed))
        _emit(out, f"output shape: {_fmt_shape(result.shape)}")
        _emit(out, "values: " + " ".join(f"{v:.9g}" for v in result.data.reshape(-1).tolist()))
    elif cmd == "dot":
        text = analysis.emit_dot(gm)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
            _emit(out, f"wrote {args.out}")
        else:
            _emit(out, text)
    elif cmd == "shapes":
        shapes = analysis.propagate_shapes(gm, [s.shape])
        width = max(len(k) for k in shapes)
        for name, shape in shapes.items():
            _emit(out, f"{name.ljust(width)}  {_fmt_shape(shape)}")
    elif cmd == "flops":
        _emit(out, analysis.analysis_table(gm, [s.shape]))
    elif cmd in ("fuse", "cse", "dce", "quantize"):
        new, report = s.apply(cmd, gm)
        _emit(out, str(report))
        diffs = []
        sq = []
        for i in range(N_CHECK_INPUTS):
            x = s.inputs(s.seed * 1000 + 500 + i)
            ref, got = interpret(gm, x), interpret(new, x)
            diffs.append(_max_abs_diff(ref, got))
            if cmd == "quantize":
                sq.append(quant.sqnr_db(ref, got))
        if cmd == "quantize":
            _emit(out, f"max-abs-error: {max(diffs):.6g}")
            _emit(out, f"sqnr-db: {min(sq):.3f}")
            _emit(out, "observers:")
            _emit(out, quant.dump_observer_table(s.prepared))
        else:
            _emit(out, f"max-abs-diff: {max(diffs):.6g}")
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(s.save(new, [*s.passes, cmd]))
            _emit(out, f"wrote {args.out}")
    elif cmd == "roundtrip":
        first = s.save(gm, s.passes)
        reparsed = parse_graph(first)
        second = serialize_graph(reparsed.graph, model=reparsed.model, meta=reparsed.meta)
        if first == second:
            _emit(out, "identical")
        else:
            _emit(out, "".join(difflib.unified_diff(first.splitlines(True), second.splitlines(True))))
            return 3
    return 0


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return run_command(args, out)
    except UsageError as e:
        err.write(f"fxir: usage error: {e}\n")
        return 1
    except TraceError as e:
        err.write(f"fxir: trace error: {e}\n")
        return 2
    except (ParseError, LintFailed, UnresolvedState) as e:
        err.write(f"fxir: {type(e).__name__}: {e}\n")
        return 3
    except FxirError as e:
        err.write(f"fxir: {type(e).__name__}: {e}\n")
        return 1
    except OSError as e:
        err.write(f"fxir: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
