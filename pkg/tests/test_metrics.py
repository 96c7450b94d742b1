import json
from fractions import Fraction

import numpy as np
import pytest

from nanocnn.errors import InvalidArgumentError
from nanocnn.metrics import (aggregate_metrics, confusion_matrix,
                             failure_report, sample_predictions,
                             save_confusion_csv, save_failures_jsonl,
                             save_metrics_json, save_predictions_jsonl)


def test_confusion_matrix_counts():
    cm = confusion_matrix([0, 0, 1, 2, 1], [0, 1, 1, 2, 0], 3)
    assert cm.tolist() == [[1, 1, 0], [1, 1, 0], [0, 0, 1]]
    assert cm.dtype == np.int64


def test_confusion_matrix_validation():
    with pytest.raises(InvalidArgumentError, match="out of range"):
        confusion_matrix([0, 3], [0, 0], 3)
    with pytest.raises(InvalidArgumentError, match="out of range"):
        confusion_matrix([0, 0], [0, -1], 3)
    with pytest.raises(InvalidArgumentError):
        confusion_matrix([0, 1], [0], 2)


def test_degenerate_single_prediction_oracle():
    """All samples predicted as the majority class.

    Worked by hand: accuracy 108/186, weighted precision (108/186)^2,
    weighted F1 (108/186) * (2 * (108/186) / (1 + 108/186)).
    """
    report = aggregate_metrics(np.array([[108, 0], [78, 0]]))
    p0 = Fraction(108, 186)
    assert report["accuracy"] == float(p0)
    assert abs(report["accuracy"] - 0.5806) < 1e-3
    assert abs(report["weighted"]["precision"] - 0.3371) < 1e-3
    assert abs(report["weighted"]["f1"] - 0.4266) < 1e-3
    assert report["weighted"]["precision"] == float(p0 * p0)
    assert report["weighted"]["recall"] == report["accuracy"]
    assert abs(report["macro"]["f1"] - 0.3673) < 1e-3
    c0, c1 = report["per_class"]
    assert c0["recall"] == 1.0 and c1["recall"] == 0.0
    assert c1["precision"] == 0.0 and c1["f1"] == 0.0
    assert c0["support"] == 108 and c1["support"] == 78


def test_perfect_prediction_is_exactly_one():
    rng = np.random.default_rng(21)
    for _ in range(100):
        c = int(rng.integers(2, 6))
        y = rng.integers(0, c, int(rng.integers(1, 50)))
        report = aggregate_metrics(confusion_matrix(y, y, c))
        assert report["accuracy"] == 1.0
        # classes with no support contribute 0, so macro can dip below 1
        present = {int(v) for v in y}
        if len(present) == c:
            assert report["macro"]["f1"] == 1.0
        assert report["weighted"]["precision"] == 1.0
        assert report["weighted"]["recall"] == 1.0
        assert report["weighted"]["f1"] == 1.0


def test_weighted_recall_equals_accuracy_bitwise_fuzz():
    rng = np.random.default_rng(22)
    for _ in range(1000):
        c = int(rng.integers(2, 7))
        cm = rng.integers(0, 40, (c, c))
        if cm.sum() == 0:
            cm[0, 0] = 1
        report = aggregate_metrics(cm)
        assert report["weighted"]["recall"] == report["accuracy"]


def test_class_relabeling_permutes_per_class_only():
    rng = np.random.default_rng(23)
    cm = rng.integers(0, 30, (4, 4))
    cm[0, 0] += 1
    perm = np.array([2, 0, 3, 1])
    permuted = cm[np.ix_(perm, perm)]
    a = aggregate_metrics(cm)
    b = aggregate_metrics(permuted)
    assert a["accuracy"] == b["accuracy"]
    assert a["weighted"] == b["weighted"]
    assert a["macro"] == b["macro"]
    for i, j in enumerate(perm):
        for key in ("support", "precision", "recall", "f1"):
            assert a["per_class"][j][key] == b["per_class"][i][key]


def test_aggregate_metrics_validation():
    with pytest.raises(InvalidArgumentError):
        aggregate_metrics(np.zeros((2, 3)))
    with pytest.raises(InvalidArgumentError):
        aggregate_metrics(np.zeros((2, 2)))
    with pytest.raises(InvalidArgumentError):
        aggregate_metrics(np.array([[1, 0], [0, -1]]))


def test_confusion_csv_layout(tmp_path):
    path = tmp_path / "confusion.csv"
    save_confusion_csv(path, np.array([[3, 1], [0, 2]]), ["cat", "dog"])
    assert path.read_text() == (
        "true\\pred,cat,dog\n"
        "cat,3,1\n"
        "dog,0,2\n"
    )


def test_metrics_json_roundtrip(tmp_path):
    report = aggregate_metrics(np.array([[2, 1], [1, 3]]), ["a", "b"])
    path = tmp_path / "metrics.json"
    save_metrics_json(path, report)
    assert json.loads(path.read_text()) == report


def sample_fixture():
    samples = [
        {"path": "a.ppm", "class_index": 0},
        {"path": "b.ppm", "class_index": 1},
        {"path": "c.ppm", "class_index": 0},
        {"path": "d.ppm", "class_index": 1},
    ]
    probs = np.array([
        [0.9, 0.1],   # right
        [0.8, 0.2],   # wrong, confidence 0.8
        [0.2, 0.8],   # wrong, confidence 0.8 (tie with b)
        [0.1, 0.9],   # right
    ])
    return samples, probs


def test_sample_predictions_first_k():
    samples, probs = sample_fixture()
    records = sample_predictions(probs, samples, ["neg", "pos"], 2)
    assert [r["path"] for r in records] == ["a.ppm", "b.ppm"]
    assert records[0] == {"path": "a.ppm", "true": 0, "true_class": "neg",
                          "predicted": 0, "predicted_class": "neg",
                          "confidence": 0.9}
    assert sample_predictions(probs, samples, ["neg", "pos"], 100) == \
        sample_predictions(probs, samples, ["neg", "pos"], 4)
    with pytest.raises(InvalidArgumentError):
        sample_predictions(probs, samples, ["neg", "pos"], -1)


def test_failure_report_sorted_and_stable():
    samples, probs = sample_fixture()
    failures = failure_report(probs, samples, ["neg", "pos"])
    assert [r["path"] for r in failures] == ["b.ppm", "c.ppm"]  # stable tie
    assert failures[0]["true_class"] == "pos"
    assert failures[0]["predicted_class"] == "neg"
    assert failures[0]["probabilities"] == [0.8, 0.2]
    assert all(r["predicted"] != r["true"] for r in failures)


def test_jsonl_files(tmp_path):
    samples, probs = sample_fixture()
    pred_path = tmp_path / "predictions.jsonl"
    save_predictions_jsonl(pred_path, sample_predictions(probs, samples,
                                                         ["neg", "pos"], 3))
    lines = pred_path.read_text().strip().split("\n")
    assert len(lines) == 3
    assert json.loads(lines[0])["path"] == "a.ppm"

    fail_path = tmp_path / "failures.jsonl"
    save_failures_jsonl(fail_path, [])
    assert fail_path.read_text().startswith("# no misclassified")
