"""Trace a function, swap its activation, and re-trace it inside a module.

    python scripts/rewrite_demo.py
"""
from fxir.passes.transform import replace_activation
from fxir.runtime import format_node_listing
from fxir.tracer import symbolic_trace
from fxir.zoo import SampleModule, my_func


def main():
    traced = symbolic_trace(my_func)
    print(format_node_listing(traced.graph))
    print()
    print(traced.code)

    replace_activation(traced, "relu", "gelu")
    sm = SampleModule()
    sm.act = traced
    print(symbolic_trace(sm).code)


if __name__ == "__main__":
    main()
