import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_confusion
from tganet.attributes import AttributeLabel, CountClass, SizeClass
from tganet.errors import EmptyList, ShapeMismatch
from tganet.metrics import (
    STRATA,
    ConfusionCounts,
    MetricSet,
    aggregate,
    compute_metric_set,
    confusion_counts,
    format_stratified_table,
    stratified_report,
)

counts_strategy = st.builds(
    ConfusionCounts,
    tp=st.integers(0, 50),
    fp=st.integers(0, 50),
    fn=st.integers(0, 50),
    tn=st.integers(0, 50),
)


class TestConfusionCounts:
    def test_identity_prediction(self, rng):
        gt = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        counts = confusion_counts(gt.astype(np.float64), gt)
        assert counts.fp == 0
        assert counts.fn == 0
        assert counts.tp == int(gt.sum())

    def test_saturated_false_positives(self):
        counts = confusion_counts(np.ones((4, 4)), np.zeros((4, 4)))
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (0, 16, 0, 0)

    def test_matches_double_loop_oracle(self, rng):
        for _ in range(100):
            pred = rng.random((8, 8))
            gt = (rng.random((8, 8)) < 0.5).astype(np.uint8)
            counts = confusion_counts(pred, gt)
            assert (counts.tp, counts.fp, counts.fn, counts.tn) == naive_confusion(pred, gt)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            confusion_counts(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_total_covers_all_pixels(self, rng):
        pred = rng.random((6, 7))
        gt = (rng.random((6, 7)) < 0.3).astype(np.uint8)
        assert confusion_counts(pred, gt).total == 42

    def test_permutation_invariance(self, rng):
        pred = rng.random(64)
        gt = (rng.random(64) < 0.5).astype(np.uint8)
        perm = rng.permutation(64)
        a = compute_metric_set(confusion_counts(pred.reshape(8, 8), gt.reshape(8, 8)))
        b = compute_metric_set(confusion_counts(pred[perm].reshape(8, 8), gt[perm].reshape(8, 8)))
        assert a == b


class TestMetricSet:
    def test_hand_evaluated_formulas(self):
        m = compute_metric_set(ConfusionCounts(tp=2, fp=1, fn=2, tn=10))
        assert m.miou == pytest.approx(0.4)
        assert m.mdsc == pytest.approx(4 / 7)
        assert m.recall == pytest.approx(0.5)
        assert m.precision == pytest.approx(2 / 3)
        assert m.f2 == pytest.approx(10 / 19)

    def test_empty_empty_scores_one(self):
        m = compute_metric_set(ConfusionCounts(tp=0, fp=0, fn=0, tn=16))
        assert m == MetricSet(1.0, 1.0, 1.0, 1.0, 1.0)

    def test_perfect_prediction_scores_one(self):
        m = compute_metric_set(ConfusionCounts(tp=9, fp=0, fn=0, tn=7))
        assert m == MetricSet(1.0, 1.0, 1.0, 1.0, 1.0)

    @given(counts=counts_strategy)
    @settings(max_examples=200, deadline=None)
    def test_ranges_and_iou_vs_dsc(self, counts):
        m = compute_metric_set(counts)
        for value in m.as_dict().values():
            assert 0.0 <= value <= 1.0
        if counts.tp + counts.fp + counts.fn > 0:
            assert m.miou <= m.mdsc + 1e-15

    @given(counts=counts_strategy)
    @settings(max_examples=100, deadline=None)
    def test_f2_weighs_recall(self, counts):
        m = compute_metric_set(counts)
        denom = m.precision + m.recall
        if denom == 0:
            return
        f1 = 2 * m.precision * m.recall / denom
        if m.recall >= m.precision:
            assert m.f2 >= f1 - 1e-12
        else:
            assert m.f2 <= f1 + 1e-12

    @given(fp=st.integers(0, 20), fn=st.integers(0, 20))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_tp(self, fp, fn):
        previous = None
        for tp in range(0, 30, 3):
            m = compute_metric_set(ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=5))
            values = m.as_dict()
            if previous is not None:
                for key in values:
                    assert values[key] >= previous[key] - 1e-12
            previous = values


class TestAggregate:
    def test_single_element_identity(self):
        m = MetricSet(0.3, 0.4, 0.5, 0.6, 0.7)
        assert aggregate([m]) == m

    def test_two_sample_mean(self):
        lo = MetricSet(0.0, 0.0, 0.0, 0.0, 0.0)
        hi = MetricSet(1.0, 1.0, 1.0, 1.0, 1.0)
        assert aggregate([lo, hi]) == MetricSet(0.5, 0.5, 0.5, 0.5, 0.5)

    def test_matches_summation_oracle(self, rng):
        sets = [MetricSet(*rng.random(5)) for _ in range(50)]
        agg = aggregate(sets)
        for field in ("miou", "mdsc", "recall", "precision", "f2"):
            total = 0.0
            for s in sets:
                total += getattr(s, field)
            assert abs(getattr(agg, field) - total / 50) <= 1e-12

    def test_empty_list_raises(self):
        with pytest.raises(EmptyList):
            aggregate([])


def label(count, size) -> AttributeLabel:
    return AttributeLabel(count_class=CountClass(count), size_class=SizeClass(size))


class TestStratifiedReport:
    def test_degenerate_single_bucket_pair(self):
        pairs = [(MetricSet(0.5, 0.8, 0.5, 0.5, 0.5), label(0, 0)) for _ in range(3)]
        report = stratified_report(pairs)
        assert set(report.mdsc) == {"small", "one"}
        assert report.mdsc["small"] == pytest.approx(0.8)
        assert report.mdsc["one"] == pytest.approx(0.8)

    def test_hand_built_fixture(self):
        pairs = [
            (MetricSet(0, 0.9, 0, 0, 0), label(0, 0)),  # one, small
            (MetricSet(0, 0.7, 0, 0, 0), label(1, 0)),  # many, small
            (MetricSet(0, 0.5, 0, 0, 0), label(0, 1)),  # one, medium
            (MetricSet(0, 0.1, 0, 0, 0), label(1, 2)),  # many, large
        ]
        report = stratified_report(pairs)
        assert report.mdsc["small"] == pytest.approx((0.9 + 0.7) / 2)
        assert report.mdsc["medium"] == pytest.approx(0.5)
        assert report.mdsc["large"] == pytest.approx(0.1)
        assert report.mdsc["one"] == pytest.approx((0.9 + 0.5) / 2)
        assert report.mdsc["many"] == pytest.approx((0.7 + 0.1) / 2)
        assert report.counts == {"small": 2, "medium": 1, "large": 1, "one": 2, "many": 2}

    def test_row_layout_has_five_columns(self):
        pairs = [(MetricSet(0, 0.5, 0, 0, 0), label(0, 1))]
        report = stratified_report(pairs)
        row = report.csv_row()
        assert tuple(row) == STRATA
        assert row["small"] == ""  # absent bucket stays absent, not zero
        assert row["medium"] != ""
        table = format_stratified_table(report)
        for bucket in STRATA:
            assert bucket in table

    def test_empty_raises(self):
        with pytest.raises(EmptyList):
            stratified_report([])
