import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcgscreen.classifiers import ClassifierConfig
from pcgscreen.dataset_io import Label
from pcgscreen.evaluation import (
    CSV_HEADER, ConfusionMatrix, balance_subset, ci95_half_width, cross_validate,
    format_table, kfold_cv, mean_metrics, metrics_from_confusion, repeated_cv, reports_to_csv,
    run_generator, stratified_folds,
)
from pcgscreen.pipeline import RecordFeatures, Strategy

N, A = Label.NORMAL, Label.ABNORMAL


class Rec:
    def __init__(self, rid, label):
        self.record_id = rid
        self.label = label


def records(n_abn, n_norm):
    return [Rec(f"a{i}", A) for i in range(n_abn)] + [Rec(f"n{i}", N) for i in range(n_norm)]


def stub(predict):
    return Strategy("stub", lambda config, train: {r.record_id for r in train}, predict)


PERFECT = stub(lambda model, rf: rf.label)
ALWAYS_NORMAL = stub(lambda model, rf: N)


@pytest.mark.parametrize("cm,expected", [
    (ConfusionMatrix(9, 1, 2, 8), (85, 90, 80, 85)),
    (ConfusionMatrix(10, 0, 0, 10), (100, 100, 100, 100)),
    (ConfusionMatrix(0, 10, 0, 10), (50, 0, 100, 50)),
])
def test_metric_examples(cm, expected):
    m = metrics_from_confusion(cm)
    assert (m.acc, m.se, m.sp, m.macc) == expected


@pytest.mark.parametrize("cm,name", [
    (ConfusionMatrix(0, 0, 0, 0), "accuracy"),
    (ConfusionMatrix(0, 0, 1, 1), "sensitivity"),
    (ConfusionMatrix(1, 1, 0, 0), "specificity"),
])
def test_undefined_metric_named(cm, name):
    with pytest.raises(ValueError, match=name):
        metrics_from_confusion(cm)


@settings(max_examples=300)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_macc_identity(tp, fn, fp, tn):
    if tp + fn == 0 or fp + tn == 0:
        return
    m = metrics_from_confusion(ConfusionMatrix(tp, fn, fp, tn))
    assert m.macc == (m.se + m.sp) / 2
    assert 0 <= m.acc <= 100 and 0 <= m.se <= 100 and 0 <= m.sp <= 100


def test_confusion_from_labels():
    cm = ConfusionMatrix.from_labels([A, A, N, N, A], [A, N, A, N, A])
    assert cm == ConfusionMatrix(2, 1, 1, 1)
    assert cm.total == 5
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 0)


def test_mean_metrics_averages_folds_exactly():
    folds = [ConfusionMatrix(1, 0, 0, 2), ConfusionMatrix(0, 1, 1, 1)]
    m = mean_metrics(folds)
    assert m.acc == float((Fraction(100) + Fraction(100, 3)) / 2)
    assert m.se == 50 and m.sp == 75


def test_balance_subset_sizes_and_determinism():
    recs = records(218, 1919)
    a = balance_subset(recs, 5)
    assert len(a) == 436
    assert sum(r.label == A for r in a) == 218
    assert [r.record_id for r in a] == [r.record_id for r in balance_subset(recs, 5)]
    assert [r.record_id for r in a] != [r.record_id for r in balance_subset(recs, 6)]
    small = records(3, 3)
    assert balance_subset(small, 0) == small
    with pytest.raises(ValueError):
        balance_subset(records(4, 3), 0)


def test_fold_sizes_for_436_records():
    labels = [A] * 218 + [N] * 218
    folds = stratified_folds(labels, 10, np.random.default_rng(0))
    sizes = np.bincount(folds, minlength=10)
    assert set(sizes.tolist()) <= {43, 44} and sizes.sum() == 436
    per_class = [np.bincount(folds[np.array(labels) == c], minlength=10) for c in (A, N)]
    for counts in per_class:
        assert counts.max() - counts.min() <= 1


def test_folds_need_k_per_class():
    with pytest.raises(ValueError):
        stratified_folds([A] * 5 + [N] * 20, 10, np.random.default_rng(0))


def test_each_record_tested_exactly_once():
    seen = []

    def predict(model, rf):
        assert rf.record_id not in model  # train and test disjoint
        seen.append(rf.record_id)
        return rf.label

    recs = records(30, 30)
    run = cross_validate(recs, 10, stub(predict), None, 3)
    assert sorted(seen) == sorted(r.record_id for r in recs)
    assert sum(run.fold_sizes) == 60


def test_perfect_and_constant_stubs():
    recs = records(20, 20)
    m = kfold_cv(recs, 10, PERFECT, None, 0)
    assert (m.acc, m.se, m.sp, m.macc) == (100, 100, 100, 100)
    m = kfold_cv(recs, 10, ALWAYS_NORMAL, None, 0)
    assert (m.acc, m.se, m.sp, m.macc) == (50, 0, 100, 50)


def test_ci_half_width():
    assert ci95_half_width([91.0] * 50) == 0
    assert ci95_half_width([90.0]) == 0
    assert ci95_half_width([90.0, 92.0]) == pytest.approx(1.96 * np.std([90, 92], ddof=1) / 2 ** 0.5)


def test_repeated_cv_two_run_mean():
    # each fold holds 10 records; the first nine fitted models misclassify one of them
    fits = []
    errors_left = {}

    def fit(config, train):
        i = len(fits)
        fits.append(i)
        errors_left[i] = 1 if i < 9 else 0  # run 0: 5 folds at 90%, run 1: 4 of 5
        return i

    def predict(model, rf):
        if errors_left[model]:
            errors_left[model] -= 1
            return N if rf.label == A else A
        return rf.label

    report = repeated_cv(records(25, 25), 2, Strategy("scripted", fit, predict), None, 0,
                         folds=5)
    assert [m.acc for m in report.run_metrics] == [90, 92]
    assert report.mean.acc == 91
    assert report.ci95["acc"] == pytest.approx(1.96 * np.std([90, 92], ddof=1) / 2 ** 0.5)
    perfect = repeated_cv(records(10, 10), 3, PERFECT, None, 0, folds=5)
    assert perfect.mean.acc == 100 and perfect.ci95["acc"] == 0


def test_run_generator_is_portable_and_distinct():
    a = run_generator(7, 0).integers(0, 2 ** 31, 5)
    b = run_generator(7, 0).integers(0, 2 ** 31, 5)
    c = run_generator(7, 1).integers(0, 2 ** 31, 5)
    assert a.tolist() == b.tolist() and a.tolist() != c.tolist()


def feature_records(seed, n=24):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = A if i < n // 3 else N
        out.append(RecordFeatures(f"r{i}", rng.standard_normal((9, 52)) + (0.8 if label == A else 0),
                                  label))
    return out


def test_repeated_cv_report_is_deterministic_and_parallel_safe():
    recs = feature_records(1)
    config = ClassifierConfig(kind="svm")
    a = repeated_cv(recs, 3, "ensemble", config, 11, folds=4)
    b = repeated_cv(recs, 3, "ensemble", config, 11, folds=4, workers=3)
    assert a.to_json() == b.to_json()
    assert a.n_records == 16  # 8 abnormal + 8 sampled normal
    doc = json.loads(a.to_json())
    assert doc["runs"] == 3 and doc["per_run"][2]["seed"] == [11, 2]
    assert "PCG64" in doc["rng"]
    assert doc["diagnostics"]["max_kkt_violation"] <= 1e-3
    for run in doc["per_run"]:
        assert run["macc"] == (run["se"] + run["sp"]) / 2


def test_csv_and_table_output():
    recs = feature_records(2)
    reports = [repeated_cv(recs, 2, "single", ClassifierConfig(kind=k), 0, folds=4)
               for k in ("knn", "dt")]
    text = reports_to_csv(reports)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("kNN,") and lines[2].startswith("DT,")
    assert len(lines[1].split(",")) == 8
    table = format_table(reports)
    assert "kNN" in table and "DT" in table


def test_repeated_cv_argument_checks():
    with pytest.raises(ValueError):
        repeated_cv(records(10, 10), 0, PERFECT, None, 0)
