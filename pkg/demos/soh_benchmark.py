"""Train the SoH estimator with raw-voltage and 4-channel inputs.

Generates 3 presets x 4 cells, holds out one whole cell per preset for test
and one for validation, and trains one global estimator per input variant.
Expect several minutes on one CPU core.

    python3 demos/soh_benchmark.py [--epochs N] [--split by-cell|chronological]
"""

import argparse

from agingprint.benchmark import format_soh, soh_benchmark
from agingprint.soh import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--split", default="by-cell", choices=("by-cell", "chronological"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = TrainConfig(epochs=args.epochs, split=args.split, seed=args.seed)
    arms = soh_benchmark(cells=4, cycles_per_cell=30, seed=args.seed, train_cfg=cfg)
    print(format_soh(arms))
    for ch, arm in sorted(arms.items()):
        print(f"{ch}-channel training took {arm.seconds:.0f} s")


if __name__ == "__main__":
    main()
