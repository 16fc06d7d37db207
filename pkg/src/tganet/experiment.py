"""Experiment orchestration: reproducible prepare/train/eval/report runs.

An experiment manifest fully determines a run: dataset location, network
and training configuration, the split manifest (with fitted size
thresholds), and the embedding source. Every command copies the manifest it
ran from into its output directory so results stay regenerable.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path

import cv2
import numpy as np
import torch

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .attributes import (
    ATTRIBUTE_WORDS,
    AttributeEmbeddings,
    SizeThresholds,
    fit_size_thresholds,
    load_attribute_embeddings,
)
from .data import (
    DatasetIndex,
    SplitManifest,
    index_dataset,
    load_image,
    load_mask,
    official_split,
    preprocess_pair,
    read_official_lists,
    split_dataset,
)
from .errors import InvalidConfig
from .metrics import STRATA, format_stratified_table
from .model import (
    NetworkConfig,
    VARIANT_ORDER,
    ablation_config,
    load_checkpoint,
    model_from_checkpoint,
)
from .training import (
    SampleStore,
    TrainConfig,
    evaluate_model,
    train,
    write_metrics_csv,
)

logger = logging.getLogger(__name__)

EXPERIMENT_FORMAT_VERSION = 1
DEFAULT_EMBEDDINGS = "seed:42"

COMPARISON_COLUMNS = ("method", "miou", "mdsc", "recall", "precision", "f2")


@dataclasses.dataclass
class ExperimentManifest:
    dataset_root: str
    dataset_name: str
    net: NetworkConfig
    train: TrainConfig
    split_manifest: str
    embeddings_source: str = DEFAULT_EMBEDDINGS
    output_dir: str = "."
    path: Path | None = None  # where the manifest lives; not serialized

    def base_dir(self) -> Path:
        return self.path.parent if self.path is not None else Path(".")

    def split_path(self) -> Path:
        p = Path(self.split_manifest)
        return p if p.is_absolute() else self.base_dir() / p

    def resolved_output_dir(self) -> Path:
        p = Path(self.output_dir)
        return p if p.is_absolute() else self.base_dir() / p

    def to_dict(self) -> dict:
        return {
            "format_version": EXPERIMENT_FORMAT_VERSION,
            "dataset_root": self.dataset_root,
            "dataset_name": self.dataset_name,
            "net": self.net.to_dict(),
            "train": self.train.to_dict(),
            "split_manifest": self.split_manifest,
            "embeddings_source": self.embeddings_source,
            "output_dir": self.output_dir,
        }

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        self.path = path

    @classmethod
    def from_dict(cls, payload: dict, path: Path | None = None) -> "ExperimentManifest":
        version = payload.get("format_version")
        if version != EXPERIMENT_FORMAT_VERSION:
            raise InvalidConfig(f"experiment manifest format {version!r} unsupported")
        return cls(
            dataset_root=payload["dataset_root"],
            dataset_name=payload["dataset_name"],
            net=NetworkConfig.from_dict(payload["net"]),
            train=TrainConfig.from_dict(payload["train"]),
            split_manifest=payload["split_manifest"],
            embeddings_source=payload.get("embeddings_source", DEFAULT_EMBEDDINGS),
            output_dir=payload.get("output_dir", "."),
            path=path,
        )

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path=path)


def parse_set_overrides(pairs) -> dict:
    """`--set a.b=value` pairs into a nested dict; values parse as JSON first."""
    nested: dict = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise InvalidConfig(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cursor = nested
        parts = key.strip().split(".")
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
            if not isinstance(cursor, dict):
                raise InvalidConfig(f"--set key {key!r} collides with a scalar")
        cursor[parts[-1]] = value
    return nested


def apply_overrides(payload: dict, overrides: dict) -> dict:
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(payload.get(key), dict):
            apply_overrides(payload[key], value)
        else:
            payload[key] = value
    return payload


def manifest_with_overrides(manifest: ExperimentManifest, set_pairs) -> ExperimentManifest:
    if not set_pairs:
        return manifest
    payload = apply_overrides(manifest.to_dict(), parse_set_overrides(set_pairs))
    return ExperimentManifest.from_dict(payload, path=manifest.path)


def resolve_embeddings(source: str, k: int) -> AttributeEmbeddings:
    """`seed:<int>` draws a deterministic table; anything else is a vector file."""
    if source.startswith("seed:"):
        return load_attribute_embeddings(int(source.split(":", 1)[1]), k)
    return load_attribute_embeddings(source, k)


# ----- prepare --------------------------------------------------------------


def _fit_thresholds_on_train(index: DatasetIndex, train_ids, input_size: int) -> SizeThresholds:
    masks = []
    entries = {e.sample_id: e for e in index.entries}
    for sample_id in train_ids:
        mask = load_mask(entries[sample_id].mask_path)
        _, mask = preprocess_pair(np.zeros((*mask.shape, 3), dtype=np.uint8), mask, size=input_size)
        masks.append(mask)
    return fit_size_thresholds(masks)


def prepare(
    data_root,
    dataset_name: str,
    out_dir,
    seed: int = 0,
    ratios=(0.8, 0.1, 0.1),
    set_pairs=None,
) -> ExperimentManifest:
    """Index the dataset, split it, fit size thresholds, write the manifests.

    When `train.txt`/`test.txt` file lists exist beside the dataset they take
    precedence over the seeded ratio split (validation comes off the tail of
    the official train list).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = index_dataset(data_root, source_name=dataset_name)

    official = read_official_lists(data_root)
    if official is not None:
        logger.info("using official file lists for %s", dataset_name)
        split = official_split(index, official[0], official[1], seed=seed)
    else:
        split = split_dataset(index, ratios, seed)

    manifest = ExperimentManifest(
        dataset_root=str(Path(data_root).resolve()),
        dataset_name=dataset_name,
        net=NetworkConfig(),
        train=TrainConfig(seed=seed),
        split_manifest="split.json",
        embeddings_source=DEFAULT_EMBEDDINGS,
        output_dir=".",
        path=out_dir / "experiment.json",
    )
    manifest = manifest_with_overrides(manifest, set_pairs)

    split.size_thresholds = _fit_thresholds_on_train(index, split.train, manifest.net.input_size)
    split.save(out_dir / "split.json")
    manifest.save(out_dir / "experiment.json")
    logger.info(
        "prepared %s: %d train / %d valid / %d test, thresholds (%.6f, %.6f)",
        dataset_name, len(split.train), len(split.valid), len(split.test),
        split.size_thresholds.t_small_max, split.size_thresholds.t_medium_max,
    )
    return manifest


# ----- train / eval ---------------------------------------------------------


def _load_experiment_inputs(manifest: ExperimentManifest):
    index = index_dataset(manifest.dataset_root, source_name=manifest.dataset_name)
    split = SplitManifest.load(manifest.split_path())
    if split.size_thresholds is None:
        raise InvalidConfig(f"split manifest {manifest.split_path()} carries no size thresholds")
    embeddings = resolve_embeddings(manifest.embeddings_source, manifest.net.embedding_k)
    return index, split, embeddings


def run_train(manifest: ExperimentManifest, out_dir=None, run_name: str = "run", variant: str | None = None):
    """Train per the manifest; returns (checkpoint_path, history, out_dir)."""
    index, split, embeddings = _load_experiment_inputs(manifest)
    out_dir = Path(out_dir) if out_dir is not None else manifest.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    net_config = manifest.net if variant is None else ablation_config(manifest.net, variant)
    store = SampleStore(index, net_config.input_size, split.size_thresholds)
    extra = {"dataset_root": manifest.dataset_root}
    if variant is not None:
        extra["variant"] = variant
    checkpoint, history = train(
        net_config,
        manifest.train,
        store,
        split.train,
        split.valid,
        embeddings,
        out_dir,
        run_name=run_name,
        extra_manifest=extra,
    )
    _copy_manifest(manifest, out_dir, net_override=net_config)
    return checkpoint, history, out_dir


def _copy_manifest(manifest: ExperimentManifest, out_dir: Path, net_override: NetworkConfig | None = None):
    payload = manifest.to_dict()
    if net_override is not None:
        payload["net"] = net_override.to_dict()
    (Path(out_dir) / "experiment.json").write_text(json.dumps(payload, indent=2) + "\n")


def run_eval(
    manifest: ExperimentManifest,
    checkpoint_path,
    split_name: str = "test",
    out_dir=None,
    thresholds: SizeThresholds | None = None,
    data_manifest: ExperimentManifest | None = None,
):
    """Evaluate a checkpoint on one split and write the metric artifacts.

    `data_manifest` switches the evaluation dataset (cross-dataset mode);
    size thresholds still come from the training-side `manifest` unless
    explicitly overridden.
    """
    data_side = data_manifest if data_manifest is not None else manifest
    index = index_dataset(data_side.dataset_root, source_name=data_side.dataset_name)
    split = SplitManifest.load(data_side.split_path())
    if thresholds is None:
        train_split = SplitManifest.load(manifest.split_path())
        thresholds = train_split.size_thresholds
    if thresholds is None:
        raise InvalidConfig("no size thresholds available for stratification")

    out_dir = Path(out_dir) if out_dir is not None else Path(checkpoint_path).parent / f"eval-{split_name}"
    out_dir.mkdir(parents=True, exist_ok=True)
    result = evaluate_model(
        checkpoint_path,
        index,
        split.split_ids(split_name),
        thresholds,
        batch_size=manifest.train.batch_size,
        threshold=manifest.train.threshold,
    )
    write_metrics_csv(out_dir / "metrics.csv", result)
    with open(out_dir / "stratified.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STRATA)
        writer.writeheader()
        writer.writerow(result.stratified.csv_row())
    (out_dir / "stratified.txt").write_text(format_stratified_table(result.stratified))
    summary = {
        "split": split_name,
        "dataset_name": data_side.dataset_name,
        "n_samples": len(result.per_sample),
        "aggregate": result.aggregate.as_dict(),
        "mean_loss": result.mean_loss,
        "size_thresholds": [thresholds.t_small_max, thresholds.t_medium_max],
        "checkpoint": str(checkpoint_path),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _copy_manifest(manifest, out_dir)
    return result, out_dir


# ----- ablation and reporting ----------------------------------------------


def run_ablation(manifest: ExperimentManifest, variants=None, out_dir=None):
    """Train and evaluate each architecture variant; write the comparison CSV."""
    variants = list(variants) if variants else list(VARIANT_ORDER)
    unknown = [v for v in variants if v not in VARIANT_ORDER]
    if unknown:
        raise InvalidConfig(f"unknown ablation variants: {unknown}")
    out_dir = Path(out_dir) if out_dir is not None else manifest.resolved_output_dir() / "ablation"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = {}
    run_dirs = []
    for variant in variants:
        variant_dir = out_dir / f"variant-{variant}"
        checkpoint, _, _ = run_train(manifest, out_dir=variant_dir, run_name=variant, variant=variant)
        result, _ = run_eval(manifest, checkpoint, split_name="test", out_dir=variant_dir / "eval-test")
        rows[variant] = result.aggregate.as_dict()
        run_dirs.append(variant_dir)
    ordered = [v for v in VARIANT_ORDER if v in rows]
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS)
        writer.writeheader()
        for variant in ordered:
            row = {"method": variant}
            row.update({k: f"{v:.10f}" for k, v in rows[variant].items()})
            writer.writerow(row)
    _copy_manifest(manifest, out_dir)
    return out_dir, run_dirs


def _run_label(run_dir: Path) -> str:
    run_json = run_dir / "run.json"
    if run_json.is_file():
        payload = json.loads(run_json.read_text())
        return payload.get("variant") or payload.get("run_name") or run_dir.name
    return run_dir.name


def _run_summary(run_dir: Path) -> dict | None:
    candidates = sorted(run_dir.glob("eval-*/summary.json"))
    if not candidates:
        return None
    return json.loads(candidates[0].read_text())


def _read_history(run_dir: Path):
    path = run_dir / "history.csv"
    if not path.is_file():
        return None
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    return {
        "epoch": [int(r["epoch"]) for r in rows],
        "train_total": [float(r["train_total"]) for r in rows],
        "val_total": [float(r["val_total"]) for r in rows],
    }


def run_report(run_dirs, out_dir):
    """Merge runs into a comparison CSV plus loss-curve and metric-bar plots."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labeled = [(_run_label(Path(d)), Path(d)) for d in run_dirs]

    def order_key(item):
        label = item[0]
        return (VARIANT_ORDER.index(label), "") if label in VARIANT_ORDER else (len(VARIANT_ORDER), label)

    labeled.sort(key=order_key)

    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS)
        writer.writeheader()
        bar_labels, bar_mdsc, bar_miou = [], [], []
        for label, run_dir in labeled:
            summary = _run_summary(run_dir)
            if summary is None:
                logger.warning("no evaluation summary under %s; skipping row", run_dir)
                continue
            agg = summary["aggregate"]
            row = {"method": label}
            row.update({k: f"{agg[k]:.10f}" for k in COMPARISON_COLUMNS[1:]})
            writer.writerow(row)
            bar_labels.append(label)
            bar_mdsc.append(agg["mdsc"])
            bar_miou.append(agg["miou"])

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, run_dir in labeled:
        history = _read_history(run_dir)
        if history is None:
            continue
        ax.plot(history["epoch"], history["train_total"], label=f"{label} train")
        ax.plot(history["epoch"], history["val_total"], linestyle="--", label=f"{label} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("total loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "loss_curves.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(bar_labels))
    ax.bar(x - 0.2, bar_miou, width=0.4, label="miou")
    ax.bar(x + 0.2, bar_mdsc, width=0.4, label="mdsc")
    ax.set_xticks(x)
    ax.set_xticklabels(bar_labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "metrics_bar.png", dpi=120)
    plt.close(fig)
    return out_dir


# ----- single-image inference ------------------------------------------------


def run_infer(checkpoint_path, image_path, out_dir=None):
    """Segment one image; write `<stem>_mask.png` (foreground 255) and, when
    the checkpoint has classifier heads, `<stem>_attr.json` with the five
    attribute probabilities."""
    image_path = Path(image_path)
    out_dir = Path(out_dir) if out_dir is not None else image_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = load_checkpoint(checkpoint_path)
    model = model_from_checkpoint(payload)
    model.eval()

    raw = load_image(image_path)
    original_hw = raw.shape[:2]
    image, _ = preprocess_pair(raw, np.zeros(raw.shape[:2], dtype=np.uint8), size=model.config.input_size)
    tensor = torch.from_numpy(image).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        output = model(tensor)
    prob = output.mask_prob[0, 0].numpy()
    prob = cv2.resize(prob, (original_hw[1], original_hw[0]), interpolation=cv2.INTER_LINEAR)
    mask8 = ((prob > 0.5) * 255).astype(np.uint8)
    mask_file = out_dir / f"{image_path.stem}_mask.png"
    cv2.imwrite(str(mask_file), mask8)

    attr_file = None
    if output.logits is not None:
        probs = output.logits.probabilities()[0].tolist()
        attr_file = out_dir / f"{image_path.stem}_attr.json"
        attr_file.write_text(json.dumps(dict(zip(ATTRIBUTE_WORDS, probs)), indent=2) + "\n")
    return mask_file, attr_file
