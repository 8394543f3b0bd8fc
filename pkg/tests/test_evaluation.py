import csv
import io

import numpy as np
import pytest

from droiddnn.dnn import TrainConfig, init_model
from droiddnn.evaluation import (
    ABLATION_SUBSETS,
    BaselineParams,
    ablation,
    ablation_csv,
    compare,
    compare_csv,
    cross_validate,
    curves_csv,
    format_table,
    kfold_indices,
    metrics_csv,
)
from droiddnn.dnn import train
from droiddnn.errors import InsufficientData
from droiddnn.features import default_schema, load_schema
from droiddnn.synth import SyntheticConfig, synthesize

SCHEMA = default_schema()
FAST = TrainConfig(epochs=3, seed=1)


@pytest.fixture(scope="module")
def data():
    return synthesize(SyntheticConfig(60, 60, seed=2), SCHEMA)


def test_ablation_rows(data):
    rows = ablation(data, SCHEMA, None, FAST)
    assert [r.subset for r in rows] == list(ABLATION_SUBSETS)
    assert [r.width for r in rows] == [40, 7, 20, 11, 29, 20, 22]
    assert all(r.error is None and 0 <= r.accuracy <= 1 for r in rows)
    text = ablation_csv(rows)
    assert text.splitlines()[0] == "subset,width,accuracy,error"
    assert len(list(csv.reader(io.StringIO(text)))) == 8


def test_ablation_failed_row_is_reported(data):
    schema = load_schema("perm a\nperm b\napi net\n")
    small = data.columns([0, 1, 20])
    rows = ablation(small, schema, lambda w: init_model([w, 3, 2], 0), FAST, ["all", "fs2", "fs1"])
    assert rows[1].accuracy is None and "no columns" in rows[1].error
    assert rows[0].accuracy is not None and rows[2].width == 2


def test_ablation_width_mismatch(data):
    with pytest.raises(ValueError):
        ablation(data.columns(range(5)), SCHEMA, None, FAST)


def test_compare_table(data):
    rows = compare(data, FAST, BaselineParams(n_trees=5, svm_epochs=5))
    assert [r.classifier for r in rows] == ["DNN", "DT", "KNN", "RF", "SVM"]
    text = compare_csv(rows)
    header, *body = list(csv.reader(io.StringIO(text)))
    assert header == ["classifier", "accuracy", "precision", "recall", "f1", "error"]
    assert all(len(r) == 6 and r[5] == "" for r in body)


def test_compare_reports_failures(data):
    rows = compare(data, FAST, BaselineParams(k=4, n_trees=2, svm_epochs=2))
    knn = rows[2]
    assert knn.metrics is None and "k must be odd" in knn.error
    assert rows[0].metrics is not None


def test_kfold_partition():
    labels = np.array([0] * 23 + [1] * 17)
    folds = kfold_indices(labels, 5, 0)
    assert sorted(np.concatenate(folds).tolist()) == list(range(40))
    for f in folds:
        assert 4 <= (labels[f] == 0).sum() <= 5 and 3 <= (labels[f] == 1).sum() <= 4
    with pytest.raises(InsufficientData):
        kfold_indices([0, 0, 1], 2, 0)


def test_cross_validate(data):
    results = cross_validate(data, FAST, 3)
    assert len(results) == 3 and all(0 <= m.accuracy <= 1 for m in results)


def test_report_formats(data):
    _, report = train(init_model([40, 4, 2], 0), data, FAST)
    lines = curves_csv(report.epochs).splitlines()
    assert lines[0] == "epoch,train_loss,valid_loss,train_acc,valid_acc" and len(lines) == 4
    assert metrics_csv(report.metrics).splitlines()[0] == "metric,value"
    table = format_table(("a", "bb"), [("x", 0.5), ("yyy", None)]).splitlines()
    assert table == ["a    bb", "---  ------", "x    0.5000", "yyy  -"]


def test_full_subset_row_equals_plain_training(data):
    from droiddnn.dnn import default_model

    _, report = train(default_model(40, FAST.seed), data, FAST)
    (row,) = ablation(data, SCHEMA, None, FAST, ["all"])
    assert row.metrics == report.metrics
