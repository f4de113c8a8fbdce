"""Shape, FLOP and memory table for every zoo model.

    python scripts/analyze_zoo.py
"""
from fxir.passes import analysis
from fxir.tracer import symbolic_trace
from fxir.zoo import ZOO


def main():
    for name, entry in ZOO.items():
        gm = symbolic_trace(entry.build(0), name=name)
        print(f"== {name} input {list(entry.input_shape)}")
        print(analysis.analysis_table(gm, [entry.input_shape]))
        print()


if __name__ == "__main__":
    main()
