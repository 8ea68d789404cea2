"""Writes data/synthetic_tiny.libsvm: 40 labeled samples in 4 dimensions."""

import argparse
import random


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data/synthetic_tiny.libsvm")
    parser.add_argument("--seed", type=int, default=20)
    parser.add_argument("--samples", type=int, default=40)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    w = [1.5, -2.0, 0.5, 1.0]
    lines = []
    for _ in range(args.samples):
        u = [round(rng.uniform(-1.0, 1.0), 4) for _ in w]
        score = sum(a * b for a, b in zip(w, u)) + rng.gauss(0.0, 0.5)
        label = "+1" if score > 0 else "-1"
        feats = " ".join(f"{k + 1}:{v}" for k, v in enumerate(u) if v != 0.0)
        lines.append(f"{label} {feats}".rstrip())
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
