"""Segmentation evaluation metrics and attribute-stratified reporting.

All metrics are computed per sample from pixel confusion counts and then
averaged over the evaluation set (the mean-per-sample reading of mIoU and
mDSC). Empty-empty predictions score 1.0 on every metric: correctly
predicting the absence of foreground is rewarded, not ignored.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .attributes import ATTRIBUTE_WORDS, AttributeLabel
from .errors import EmptyList, InvalidConfig, ShapeMismatch

DEFAULT_THRESHOLD = 0.5

STRATA = ("small", "medium", "large", "one", "many")


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InvalidConfig("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclasses.dataclass(frozen=True)
class MetricSet:
    miou: float
    mdsc: float
    recall: float
    precision: float
    f2: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def confusion_counts(pred_prob, gt, threshold: float = DEFAULT_THRESHOLD) -> ConfusionCounts:
    """Binarize the prediction at `threshold` (> means foreground) and count cells."""
    pred = np.asarray(pred_prob)
    truth = np.asarray(gt)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {truth.shape}")
    if not (0.0 < threshold < 1.0):
        raise InvalidConfig(f"threshold must lie in (0, 1), got {threshold}")
    p = pred > threshold
    g = truth != 0
    tp = int(np.sum(p & g))
    fp = int(np.sum(p & ~g))
    fn = int(np.sum(~p & g))
    tn = int(np.sum(~p & ~g))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def compute_metric_set(counts: ConfusionCounts) -> MetricSet:
    """IoU, DSC, recall, precision and F2 from one sample's confusion counts."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    if tp + fp + fn == 0:
        return MetricSet(miou=1.0, mdsc=1.0, recall=1.0, precision=1.0, f2=1.0)
    iou = tp / (tp + fp + fn)
    dsc = 2 * tp / (2 * tp + fp + fn)
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    denom = 4 * precision + recall
    f2 = 5 * precision * recall / denom if denom > 0 else 0.0
    return MetricSet(miou=iou, mdsc=dsc, recall=recall, precision=precision, f2=f2)


def aggregate(per_sample) -> MetricSet:
    """Arithmetic mean of each metric over the given per-sample sets."""
    sets = list(per_sample)
    if not sets:
        raise EmptyList("cannot aggregate zero metric sets")
    n = len(sets)
    return MetricSet(
        miou=sum(s.miou for s in sets) / n,
        mdsc=sum(s.mdsc for s in sets) / n,
        recall=sum(s.recall for s in sets) / n,
        precision=sum(s.precision for s in sets) / n,
        f2=sum(s.f2 for s in sets) / n,
    )


@dataclasses.dataclass(frozen=True)
class StratifiedReport:
    """Mean DSC per attribute bucket; buckets with no members are absent."""

    mdsc: dict
    counts: dict

    def csv_row(self) -> dict:
        """One row keyed by the five bucket names; empty string where absent."""
        return {s: (f"{self.mdsc[s]:.6f}" if s in self.mdsc else "") for s in STRATA}


def stratified_report(per_sample) -> StratifiedReport:
    """Bucket per-sample DSC by the size and count attribute of each sample.

    `per_sample` holds (MetricSet, AttributeLabel) pairs. Every sample lands
    in exactly one size bucket and one count bucket.
    """
    pairs = list(per_sample)
    if not pairs:
        raise EmptyList("cannot stratify zero samples")
    sums = {s: 0.0 for s in STRATA}
    counts = {s: 0 for s in STRATA}
    for metric_set, label in pairs:
        if not isinstance(label, AttributeLabel):
            raise InvalidConfig(f"expected AttributeLabel, got {type(label)!r}")
        size_word = ATTRIBUTE_WORDS[2 + label.size_class]
        count_word = ATTRIBUTE_WORDS[label.count_class]
        for word in (size_word, count_word):
            sums[word] += metric_set.mdsc
            counts[word] += 1
    mdsc = {s: sums[s] / counts[s] for s in STRATA if counts[s] > 0}
    return StratifiedReport(mdsc=mdsc, counts={s: c for s, c in counts.items() if c > 0})


def format_stratified_table(report: StratifiedReport) -> str:
    """Fixed-width text table with one column per bucket."""
    header = ["bucket"] + list(STRATA)
    mdsc_row = ["mdsc"] + [
        f"{report.mdsc[s]:.4f}" if s in report.mdsc else "-" for s in STRATA
    ]
    n_row = ["n"] + [str(report.counts.get(s, 0)) for s in STRATA]
    widths = [max(len(r[i]) for r in (header, mdsc_row, n_row)) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths))
        for row in (header, mdsc_row, n_row)
    ]
    lines.append("note: per-sample metrics averaged within each bucket")
    return "\n".join(lines) + "\n"
