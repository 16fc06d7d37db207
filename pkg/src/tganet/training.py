"""Optimization loop: Adam updates on the joint loss, plateau-driven learning
rate reduction, early stopping, checkpointing, and evaluation runs."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from pathlib import Path

import numpy as np
import torch

from .attributes import (
    ATTRIBUTE_WORDS,
    AttributeEmbeddings,
    SizeThresholds,
    derive_attribute_label,
)
from .data import DatasetIndex, augment_pair, load_image, load_mask, make_augment_rng, preprocess_pair
from .errors import DivergedLoss, EmptyDataset, InvalidConfig
from .losses import joint_loss
from .metrics import (
    MetricSet,
    StratifiedReport,
    aggregate,
    compute_metric_set,
    confusion_counts,
    stratified_report,
)
from .model import NetworkConfig, TGANet, load_checkpoint, model_from_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

MONITOR_MODES = {"val_total_loss": "min", "val_mdsc": "max"}

IMPROVEMENT_DELTA = 1e-6
LR_FLOOR = 1e-7

STEP_LOG_COLUMNS = ("step", "ce_count", "ce_size", "bce_seg", "dice_seg", "total")
HISTORY_COLUMNS = (
    "epoch",
    "lr",
    "train_ce_count",
    "train_ce_size",
    "train_bce_seg",
    "train_dice_seg",
    "train_total",
    "val_ce_count",
    "val_ce_size",
    "val_bce_seg",
    "val_dice_seg",
    "val_total",
    "val_miou",
    "val_mdsc",
    "val_recall",
    "val_precision",
    "val_f2",
)


@dataclasses.dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 200
    lr_reduce_factor: float = 0.1
    lr_patience: int = 5
    early_stop_patience: int = 20
    monitor: str = "val_total_loss"
    seed: int = 0
    augment: bool = True
    threshold: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        if not (0.0 < self.lr_reduce_factor < 1.0):
            raise InvalidConfig(f"lr_reduce_factor must lie in (0, 1), got {self.lr_reduce_factor}")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise InvalidConfig("patiences must be >= 1")
        if self.monitor not in MONITOR_MODES:
            raise InvalidConfig(f"monitor must be one of {sorted(MONITOR_MODES)}, got {self.monitor!r}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidConfig("batch_size and max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclasses.dataclass
class ScheduleState:
    """Plateau tracker shared by the LR schedule and early stopping."""

    lr: float
    mode: str = "min"
    best: float = math.inf
    bad_epochs_lr: int = 0
    bad_epochs_stop: int = 0

    def __post_init__(self):
        if self.mode not in ("min", "max"):
            raise InvalidConfig(f"mode must be 'min' or 'max', got {self.mode!r}")
        if self.mode == "max" and self.best == math.inf:
            self.best = -math.inf


def update_schedule(monitor_history, state: ScheduleState, config: TrainConfig):
    """React to the newest monitored value.

    No improvement of at least 1e-6 for `lr_patience` epochs multiplies the
    learning rate by the reduce factor (floored at 1e-7); no improvement for
    `early_stop_patience` epochs requests a stop. Returns (new_lr, stop).
    """
    history = list(monitor_history)
    if not history:
        raise InvalidConfig("update_schedule needs at least one recorded epoch")
    value = float(history[-1])
    improvement = (state.best - value) if state.mode == "min" else (value - state.best)
    if improvement >= IMPROVEMENT_DELTA:
        state.best = value
        state.bad_epochs_lr = 0
        state.bad_epochs_stop = 0
        return state.lr, False
    state.bad_epochs_lr += 1
    state.bad_epochs_stop += 1
    stop = state.bad_epochs_stop >= config.early_stop_patience
    if state.bad_epochs_lr >= config.lr_patience:
        state.lr = max(state.lr * config.lr_reduce_factor, LR_FLOOR)
        state.bad_epochs_lr = 0
    return state.lr, stop


@dataclasses.dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: dict
    val_loss: dict
    val_metrics: MetricSet

    def csv_row(self) -> dict:
        row = {"epoch": self.epoch, "lr": f"{self.lr:.12g}"}
        for key, value in self.train_loss.items():
            row[f"train_{key}"] = f"{value:.10f}"
        for key, value in self.val_loss.items():
            row[f"val_{key}"] = f"{value:.10f}"
        for key, value in self.val_metrics.as_dict().items():
            row[f"val_{key}"] = f"{value:.10f}"
        return row


@dataclasses.dataclass
class TrainHistory:
    records: list = dataclasses.field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0
    best_monitor: float = math.nan

    def monitor_series(self, monitor: str) -> list:
        if monitor == "val_total_loss":
            return [r.val_loss["total"] for r in self.records]
        if monitor == "val_mdsc":
            return [r.val_metrics.mdsc for r in self.records]
        raise InvalidConfig(f"unknown monitor {monitor!r}")

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
            writer.writeheader()
            for record in self.records:
                writer.writerow(record.csv_row())


def code_content_hash() -> str:
    """Hash of the package sources, recorded in run manifests for provenance."""
    package_dir = Path(__file__).parent
    digest = hashlib.sha256()
    for path in sorted(package_dir.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


# ----- sample access ------------------------------------------------------


class SampleStore:
    """Loads, preprocesses, and labels samples of one dataset index.

    Attribute labels are derived once from the preprocessed (original,
    unaugmented) mask, so augmentation never perturbs the targets.
    """

    def __init__(self, index: DatasetIndex, input_size: int, thresholds: SizeThresholds):
        self.index = index
        self.input_size = input_size
        self.thresholds = thresholds
        self._entries = {e.sample_id: e for e in index.entries}

    def load(self, sample_id: str):
        """(image [0,1] float32 HWC, binary mask, AttributeLabel) for one sample."""
        entry = self._entries.get(sample_id)
        if entry is None:
            raise EmptyDataset(f"sample {sample_id!r} not in index {self.index.source_name!r}")
        image = load_image(entry.image_path)
        mask = load_mask(entry.mask_path)
        image, mask = preprocess_pair(image, mask, size=self.input_size)
        label = derive_attribute_label(mask, self.thresholds)
        return image, mask, label


def _to_batch(samples):
    """Stack (image, mask, label) triples into torch training tensors."""
    images = torch.from_numpy(np.stack([s[0] for s in samples])).permute(0, 3, 1, 2).contiguous()
    masks = torch.from_numpy(np.stack([s[1] for s in samples])).unsqueeze(1).float()
    count_targets = torch.tensor([int(s[2].count_class) for s in samples], dtype=torch.long)
    size_targets = torch.tensor([int(s[2].size_class) for s in samples], dtype=torch.long)
    return images, masks, count_targets, size_targets


def _batched(ids, batch_size):
    for start in range(0, len(ids), batch_size):
        yield ids[start : start + batch_size]


def evaluate_split(model: TGANet, store: SampleStore, sample_ids, batch_size: int = 16, threshold: float = 0.5):
    """Inference-mode pass over a split: mean losses, per-sample metrics.

    Returns (mean_loss dict, per_sample list of (id, MetricSet, AttributeLabel)).
    """
    ids = list(sample_ids)
    if not ids:
        raise EmptyDataset("evaluation split is empty")
    was_training = model.training
    model.eval()
    loss_sums: dict = {}
    per_sample = []
    n_batches = 0
    with torch.no_grad():
        for batch_ids in _batched(ids, batch_size):
            samples = [store.load(i) for i in batch_ids]
            images, masks, count_t, size_t = _to_batch(samples)
            output = model(images)
            breakdown = joint_loss(output, masks, count_t, size_t).detached()
            for key, value in breakdown.items():
                loss_sums[key] = loss_sums.get(key, 0.0) + value
            n_batches += 1
            probs = output.mask_prob.numpy()
            for j, sample_id in enumerate(batch_ids):
                counts = confusion_counts(probs[j, 0], samples[j][1], threshold=threshold)
                per_sample.append((sample_id, compute_metric_set(counts), samples[j][2]))
    if was_training:
        model.train()
    mean_loss = {key: value / n_batches for key, value in loss_sums.items()}
    return mean_loss, per_sample


# ----- the training loop --------------------------------------------------


def train(
    net_config: NetworkConfig,
    train_config: TrainConfig,
    train_store: SampleStore,
    train_ids,
    valid_ids,
    embeddings: AttributeEmbeddings,
    out_dir,
    run_name: str = "run",
    extra_manifest: dict | None = None,
):
    """Train the network and keep the best-by-monitor checkpoint.

    Writes `checkpoint.pt`, `history.csv`, `train_steps.csv`, and `run.json`
    into `out_dir`; returns (checkpoint_path, TrainHistory).
    """
    train_ids = list(train_ids)
    valid_ids = list(valid_ids)
    if not train_ids:
        raise EmptyDataset("training split is empty")
    if not valid_ids:
        raise EmptyDataset("validation split is empty")
    sample_positions = {sample_id: i for i, sample_id in enumerate(train_ids)}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(train_config.seed)
    model = TGANet(net_config, embeddings=embeddings)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.lr)

    mode = MONITOR_MODES[train_config.monitor]
    schedule = ScheduleState(lr=train_config.lr, mode=mode)
    history = TrainHistory()
    checkpoint_path = out_dir / "checkpoint.pt"
    steps_path = out_dir / "train_steps.csv"
    best_value = math.inf if mode == "min" else -math.inf
    best_epoch = 0
    global_step = 0
    stop_reason = "max_epochs"

    with open(steps_path, "w", newline="") as steps_fh:
        step_writer = csv.DictWriter(steps_fh, fieldnames=STEP_LOG_COLUMNS)
        step_writer.writeheader()

        for epoch in range(1, train_config.max_epochs + 1):
            model.train()
            epoch_rng = np.random.default_rng((train_config.seed, epoch))
            order = [train_ids[i] for i in epoch_rng.permutation(len(train_ids))]
            loss_sums: dict = {}
            n_batches = 0
            for batch_ids in _batched(order, train_config.batch_size):
                samples = []
                for sample_id in batch_ids:
                    image, mask, label = train_store.load(sample_id)
                    if train_config.augment:
                        rng = make_augment_rng(train_config.seed, epoch, sample_positions[sample_id])
                        image, mask = augment_pair(image, mask, rng)
                    samples.append((image, mask, label))
                images, masks, count_t, size_t = _to_batch(samples)
                output = model(images)
                breakdown = joint_loss(output, masks, count_t, size_t)
                total = breakdown.total
                if not torch.isfinite(total):
                    snapshot = out_dir / "diverged_snapshot.pt"
                    save_checkpoint(snapshot, model, optimizer, epoch=epoch, best_metric=None)
                    raise DivergedLoss(
                        f"non-finite loss at epoch {epoch}, step {global_step}; snapshot at {snapshot}"
                    )
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                global_step += 1
                floats = breakdown.detached()
                step_writer.writerow(
                    {
                        "step": global_step,
                        "ce_count": f"{floats['ce_count']:.10f}",
                        "ce_size": f"{floats['ce_size']:.10f}",
                        "bce_seg": f"{floats['bce_seg']:.10f}",
                        "dice_seg": f"{floats['dice_seg']:.10f}",
                        "total": f"{floats['total']:.10f}",
                    }
                )
                for key, value in floats.items():
                    loss_sums[key] = loss_sums.get(key, 0.0) + value
                n_batches += 1

            train_loss = {key: value / n_batches for key, value in loss_sums.items()}
            val_loss, val_per_sample = evaluate_split(
                model, train_store, valid_ids, batch_size=train_config.batch_size,
                threshold=train_config.threshold,
            )
            val_metrics = aggregate([m for _, m, _ in val_per_sample])
            current_lr = schedule.lr
            history.records.append(
                EpochRecord(
                    epoch=epoch,
                    lr=current_lr,
                    train_loss=train_loss,
                    val_loss=val_loss,
                    val_metrics=val_metrics,
                )
            )

            monitor_value = history.monitor_series(train_config.monitor)[-1]
            improved = monitor_value < best_value if mode == "min" else monitor_value > best_value
            if improved:
                best_value = monitor_value
                best_epoch = epoch
                save_checkpoint(checkpoint_path, model, optimizer, epoch=epoch, best_metric=best_value)
            logger.info(
                "epoch %d: train total %.4f, val total %.4f, val mdsc %.4f, lr %.2e",
                epoch, train_loss["total"], val_loss["total"], val_metrics.mdsc, current_lr,
            )

            new_lr, stop = update_schedule(
                history.monitor_series(train_config.monitor), schedule, train_config
            )
            if new_lr != current_lr:
                for group in optimizer.param_groups:
                    group["lr"] = new_lr
                logger.info("epoch %d: reducing lr to %.2e", epoch, new_lr)
            if stop:
                stop_reason = "early_stop"
                break

    history.stop_reason = stop_reason
    history.best_epoch = best_epoch
    history.best_monitor = best_value
    history.save_csv(out_dir / "history.csv")

    manifest = {
        "format_version": 1,
        "run_name": run_name,
        "dataset_name": train_store.index.source_name,
        "seed": train_config.seed,
        "code_hash": code_content_hash(),
        "net": net_config.to_dict(),
        "train": train_config.to_dict(),
        "monitor": train_config.monitor,
        "best_epoch": best_epoch,
        "best_monitor": best_value,
        "epochs_run": len(history.records),
        "stop_reason": stop_reason,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    (out_dir / "run.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return checkpoint_path, history


# ----- standalone evaluation ----------------------------------------------


@dataclasses.dataclass
class EvalResult:
    aggregate: MetricSet
    per_sample: list
    stratified: StratifiedReport
    mean_loss: dict


def evaluate_model(
    checkpoint_path,
    index: DatasetIndex,
    sample_ids,
    thresholds: SizeThresholds,
    batch_size: int = 16,
    threshold: float = 0.5,
) -> EvalResult:
    """Evaluate a checkpoint on a dataset split.

    `thresholds` defines the size buckets and must come from the manifest of
    the dataset the checkpoint was TRAINED on, so cross-dataset evaluations
    stratify consistently.
    """
    ids = list(sample_ids)
    if not ids:
        raise EmptyDataset("evaluation split is empty")
    payload = load_checkpoint(checkpoint_path)
    model = model_from_checkpoint(payload)
    store = SampleStore(index, model.config.input_size, thresholds)
    mean_loss, per_sample = evaluate_split(model, store, ids, batch_size=batch_size, threshold=threshold)
    agg = aggregate([m for _, m, _ in per_sample])
    strat = stratified_report([(m, label) for _, m, label in per_sample])
    return EvalResult(aggregate=agg, per_sample=per_sample, stratified=strat, mean_loss=mean_loss)


def write_metrics_csv(path, result: EvalResult):
    """Per-sample metric rows plus a trailing aggregate row."""
    columns = ("sample_id", "miou", "mdsc", "recall", "precision", "f2", "size_class", "count_class")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for sample_id, metric_set, label in result.per_sample:
            row = {"sample_id": sample_id}
            row.update({k: f"{v:.10f}" for k, v in metric_set.as_dict().items()})
            row["size_class"] = ATTRIBUTE_WORDS[2 + label.size_class]
            row["count_class"] = ATTRIBUTE_WORDS[label.count_class]
            writer.writerow(row)
        agg_row = {"sample_id": "aggregate", "size_class": "", "count_class": ""}
        agg_row.update({k: f"{v:.10f}" for k, v in result.aggregate.as_dict().items()})
        writer.writerow(agg_row)
