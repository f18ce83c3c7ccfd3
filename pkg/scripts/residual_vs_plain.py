"""Plain vs residualized Inception-v4 at desk scale; writes paired curves."""
import argparse
import json

from incepkit.cli import residual_vs_plain


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/residual_vs_plain")
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--threshold", type=float, default=0.2)
    parser.add_argument("--width", type=float, default=0.25)
    args = parser.parse_args()
    summary = residual_vs_plain(args.out, steps=args.steps, threshold=args.threshold, width=args.width)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
