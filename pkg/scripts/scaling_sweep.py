"""Inception-ResNet-v2 over residual scales {1.0, 0.3, 0.1} and two widths."""
import argparse

from incepkit.cli import SWEEP_COLUMNS, scaling_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/scaling_sweep")
    parser.add_argument("--steps", type=int, default=100)
    args = parser.parse_args()
    for row in scaling_sweep(args.out, steps=args.steps):
        print(",".join(str(row[c]) for c in SWEEP_COLUMNS))


if __name__ == "__main__":
    main()
