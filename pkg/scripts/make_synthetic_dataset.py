#!/usr/bin/env python3
"""Generate a synthetic blob dataset for pipeline demos and smoke runs."""

import argparse
from pathlib import Path

from tganet.synthetic import make_synthetic_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="dataset root to create")
    parser.add_argument("--n", type=int, default=60, help="number of image/mask pairs")
    parser.add_argument("--size", type=int, default=256, help="image side length in pixels")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    root = make_synthetic_dataset(Path(args.out), args.n, image_size=args.size, seed=args.seed)
    print(root)


if __name__ == "__main__":
    main()
