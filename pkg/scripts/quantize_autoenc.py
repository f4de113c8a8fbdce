"""SQNR of the int8 autoencoder as a function of calibration batch count.

    python scripts/quantize_autoenc.py --max-batches 16
"""
import argparse

from fxir.passes import quant
from fxir.runtime import interpret
from fxir.tracer import symbolic_trace
from fxir.zoo import ZOO, random_input


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-batches", type=int, default=16)
    ap.add_argument("--eval", type=int, default=50)
    args = ap.parse_args()
    gm = symbolic_trace(ZOO["autoenc"].build(args.seed))
    evals = [random_input((4, 16), 50_000 + i) for i in range(args.eval)]
    refs = [interpret(gm, [x]) for x in evals]
    print("batches  min_sqnr_db  mean_sqnr_db")
    n = 1
    while n <= args.max_batches:
        calib = [random_input((4, 16), i) for i in range(n)]
        _, qgm = quant.quantize_model(gm, calib)
        sq = [quant.sqnr_db(r, interpret(qgm, [x])) for r, x in zip(refs, evals)]
        print(f"{n:<8} {min(sq):<12.2f} {sum(sq) / len(sq):.2f}")
        n *= 2
    print()
    print(qgm.code)


if __name__ == "__main__":
    main()
