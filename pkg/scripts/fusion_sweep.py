"""Fold batch norms into convolutions for several seeds and report the error.

    python scripts/fusion_sweep.py --seeds 5 --inputs 50
"""
import argparse

import numpy as np

from fxir.passes.transform import fuse_conv_bn
from fxir.runtime import interpret
from fxir.tracer import symbolic_trace
from fxir.zoo import build_convbn_net, random_input


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--inputs", type=int, default=50)
    args = ap.parse_args()
    print("seed  rewrites  nodes      max_abs_diff")
    for seed in range(args.seeds):
        gm = symbolic_trace(build_convbn_net(seed))
        fused = gm.copy_tree()
        report = fuse_conv_bn(fused)
        worst = max(
            float(np.abs(interpret(gm, [x]).data - interpret(fused, [x]).data).max())
            for x in (random_input((1, 3, 8, 8), 10_000 * seed + i) for i in range(args.inputs))
        )
        print(f"{seed:<5} {report.rewrites:<9} {report.nodes_before:>2} -> {report.nodes_after:<4} {worst:.3e}")


if __name__ == "__main__":
    main()
