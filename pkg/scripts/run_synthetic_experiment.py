#!/usr/bin/env python3
"""End-to-end desk-scale experiment on synthetic data.

Builds a small blob dataset, prepares split + thresholds, trains the
network, evaluates the test split, runs the ablation variants, and merges
everything into a comparison report. All outputs land under --workdir.
"""

import argparse
from pathlib import Path

from tganet.cli import main as tganet
from tganet.model import VARIANT_ORDER
from tganet.synthetic import make_synthetic_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--n", type=int, default=40, help="number of synthetic samples")
    parser.add_argument("--size", type=int, default=64, help="image side length (divisible by 16)")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ablate", action="store_true", help="also train every architecture variant")
    args = parser.parse_args()

    workdir = Path(args.workdir)
    data_root = workdir / "data"
    exp_dir = workdir / "experiment"
    make_synthetic_dataset(data_root, args.n, image_size=args.size, seed=args.seed)

    overrides = [
        "--set", f"net.input_size={args.size}",
        "--set", "net.fem_width=16",
        "--set", "net.embedding_k=32",
        "--set", f"train.max_epochs={args.epochs}",
        "--set", "train.lr=0.001",
        "--set", "train.batch_size=8",
    ]
    def run(argv):
        code = tganet(argv)
        if code != 0:
            raise SystemExit(code)

    run(["prepare", "--data", str(data_root), "--name", "synthetic",
         "--out", str(exp_dir), "--seed", str(args.seed), *overrides])
    experiment = str(exp_dir / "experiment.json")
    run(["train", "--experiment", experiment])
    run(["eval", "--experiment", experiment,
         "--checkpoint", str(exp_dir / "checkpoint.pt"), "--split", "test"])

    run_dirs = [str(exp_dir)]
    if args.ablate:
        ablation_dir = workdir / "ablation"
        run(["ablate", "--experiment", experiment, "--out", str(ablation_dir)])
        run_dirs = [str(ablation_dir / f"variant-{v}") for v in VARIANT_ORDER]

    run(["report", "--runs", *run_dirs, "--out", str(workdir / "report")])
    print(f"done; see {workdir / 'report'}")


if __name__ == "__main__":
    main()
