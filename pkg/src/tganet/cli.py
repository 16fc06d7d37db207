"""Batch command-line front end.

Subcommands: prepare, train, eval, cross-eval, ablate, infer, report.
Every run writes its experiment manifest next to its outputs so any result
can be regenerated from the files alone.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import TGANetError, UnknownCommand
from .experiment import (
    ExperimentManifest,
    manifest_with_overrides,
    prepare,
    run_ablation,
    run_eval,
    run_infer,
    run_report,
    run_train,
)
from .model import VARIANT_ORDER

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "TGANET_DATA_ROOT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tganet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="index a dataset, create the split and experiment manifests")
    p.add_argument("--data", default=os.environ.get(DATA_ROOT_ENV), help=f"dataset root (default ${DATA_ROOT_ENV})")
    p.add_argument("--name", required=True, help="dataset name recorded in manifests")
    p.add_argument("--out", required=True, help="output directory for the manifests")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=float, nargs=3, default=(0.8, 0.1, 0.1), metavar=("TRAIN", "VALID", "TEST"))
    p.add_argument("--set", dest="set_pairs", action="append", metavar="KEY=VALUE",
                   help="override manifest fields, e.g. --set net.input_size=128")

    p = sub.add_parser("train", help="train a model from an experiment manifest")
    p.add_argument("--experiment", required=True, help="path to experiment.json")
    p.add_argument("--out", default=None, help="output directory (default: manifest's output_dir)")
    p.add_argument("--set", dest="set_pairs", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--experiment", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--out", default=None)

    p = sub.add_parser("cross-eval", help="evaluate a checkpoint trained on dataset A against dataset B")
    p.add_argument("--source-experiment", required=True, help="manifest of the training dataset (thresholds)")
    p.add_argument("--target-experiment", required=True, help="manifest of the evaluation dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="train and evaluate the architecture variants")
    p.add_argument("--experiment", required=True)
    p.add_argument("--variant", action="append", choices=VARIANT_ORDER,
                   help="variant to run (repeatable; default: all)")
    p.add_argument("--out", default=None)
    p.add_argument("--set", dest="set_pairs", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("infer", help="segment a single image with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", default=None, help="output directory (default: beside the image)")

    p = sub.add_parser("report", help="merge runs into a comparison table and plots")
    p.add_argument("--runs", nargs="+", required=True, help="run directories to merge")
    p.add_argument("--out", required=True)

    return parser


def _load_manifest(path, set_pairs=None) -> ExperimentManifest:
    manifest = ExperimentManifest.load(path)
    return manifest_with_overrides(manifest, set_pairs)


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "prepare":
        if not args.data:
            raise TGANetError(f"no dataset root: pass --data or set ${DATA_ROOT_ENV}")
        prepare(args.data, args.name, args.out, seed=args.seed, ratios=tuple(args.ratios),
                set_pairs=args.set_pairs)
        return 0
    if args.command == "train":
        manifest = _load_manifest(args.experiment, args.set_pairs)
        checkpoint, history, out_dir = run_train(manifest, out_dir=args.out)
        logger.info("best epoch %d (%s %.6f); checkpoint at %s",
                    history.best_epoch, manifest.train.monitor, history.best_monitor, checkpoint)
        print(out_dir)
        return 0
    if args.command == "eval":
        manifest = _load_manifest(args.experiment)
        result, out_dir = run_eval(manifest, args.checkpoint, split_name=args.split, out_dir=args.out)
        print(out_dir)
        logger.info("aggregate: %s", result.aggregate.as_dict())
        return 0
    if args.command == "cross-eval":
        source = _load_manifest(args.source_experiment)
        target = _load_manifest(args.target_experiment)
        result, out_dir = run_eval(source, args.checkpoint, split_name=args.split,
                                   out_dir=args.out, data_manifest=target)
        print(out_dir)
        logger.info("cross-dataset aggregate: %s", result.aggregate.as_dict())
        return 0
    if args.command == "ablate":
        manifest = _load_manifest(args.experiment, args.set_pairs)
        out_dir, _ = run_ablation(manifest, variants=args.variant, out_dir=args.out)
        print(out_dir)
        return 0
    if args.command == "infer":
        mask_file, attr_file = run_infer(args.checkpoint, args.image, out_dir=args.out)
        print(mask_file)
        if attr_file is not None:
            print(attr_file)
        return 0
    if args.command == "report":
        out_dir = run_report(args.runs, args.out)
        print(out_dir)
        return 0
    raise UnknownCommand(f"unknown command {args.command!r}")  # pragma: no cover


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return dispatch(args)
    except (TGANetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
