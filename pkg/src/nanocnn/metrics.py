"""Confusion matrices, weighted metric aggregation, and report files.

Aggregation is support-weighted: each class's metric is weighted by its
share of the evaluated samples. The arithmetic runs on exact rationals
and converts to float only at the end, so the algebraic identity
weighted recall == accuracy holds bit-for-bit, not just approximately.
Zero-denominator metrics are defined as 0.
"""

import json
from fractions import Fraction

import numpy as np

from .errors import InvalidArgumentError


def confusion_matrix(y_true, y_pred, num_classes):
    """C x C counts, rows = true class, columns = predicted class."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise InvalidArgumentError(
            f"label arrays must be 1-d and equal length, got {t.shape} and {p.shape}")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for i, (ti, pi) in enumerate(zip(t.tolist(), p.tolist())):
        if not 0 <= ti < num_classes:
            raise InvalidArgumentError(f"true label {ti} out of range at index {i}")
        if not 0 <= pi < num_classes:
            raise InvalidArgumentError(f"predicted label {pi} out of range at index {i}")
        cm[ti, pi] += 1
    return cm


def aggregate_metrics(cm, class_names=None):
    """MetricReport dict from a confusion matrix.

    Per class: precision TP/(TP+FP), recall TP/support, F1 their harmonic
    mean, all 0 when the denominator is 0. Weighted aggregates use
    support/N weights; macro aggregates average the classes evenly.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise InvalidArgumentError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise InvalidArgumentError("confusion matrix has negative counts")
    c = cm.shape[0]
    total = int(cm.sum())
    if total <= 0:
        raise InvalidArgumentError("confusion matrix is empty")
    if class_names is None:
        class_names = [str(i) for i in range(c)]

    per_class = []
    weighted = {"precision": Fraction(0), "recall": Fraction(0), "f1": Fraction(0)}
    macro = {"precision": Fraction(0), "recall": Fraction(0), "f1": Fraction(0)}
    for i in range(c):
        tp = int(cm[i, i])
        support = int(cm[i, :].sum())
        predicted = int(cm[:, i].sum())
        precision = Fraction(tp, predicted) if predicted else Fraction(0)
        recall = Fraction(tp, support) if support else Fraction(0)
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else Fraction(0))
        weight = Fraction(support, total)
        for key, value in (("precision", precision), ("recall", recall), ("f1", f1)):
            weighted[key] += weight * value
            macro[key] += value / c
        per_class.append({
            "class": class_names[i],
            "support": support,
            "precision": float(precision),
            "recall": float(recall),
            "f1": float(f1),
        })

    accuracy = Fraction(int(np.trace(cm)), total)
    return {
        "accuracy": float(accuracy),
        "weighted": {k: float(v) for k, v in weighted.items()},
        "macro": {k: float(v) for k, v in macro.items()},
        "per_class": per_class,
        "total": total,
    }


def save_confusion_csv(path, cm, class_names):
    """CSV with class names on both axes; first column holds true labels."""
    cm = np.asarray(cm)
    lines = ["true\\pred," + ",".join(class_names)]
    for name, row in zip(class_names, cm):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def save_metrics_json(path, report):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")


def _write_jsonl(path, records, empty_note):
    with open(path, "w", encoding="utf-8") as f:
        if not records:
            f.write(f"# {empty_note}\n")
            return
        for r in records:
            f.write(json.dumps(r) + "\n")


def sample_predictions(probs, samples, class_names, k):
    """First k evaluated samples with their predicted class and confidence."""
    if k < 0:
        raise InvalidArgumentError(f"k must be >= 0, got {k}")
    records = []
    for s, p in list(zip(samples, probs))[:k]:
        pred = int(np.argmax(p))
        records.append({
            "path": s["path"],
            "true": s["class_index"],
            "true_class": class_names[s["class_index"]],
            "predicted": pred,
            "predicted_class": class_names[pred],
            "confidence": float(p[pred]),
        })
    return records


def failure_report(probs, samples, class_names):
    """Every misclassified sample with its full probability vector,
    most confidently wrong first (stable on ties)."""
    failures = []
    for s, p in zip(samples, probs):
        pred = int(np.argmax(p))
        if pred != s["class_index"]:
            failures.append({
                "path": s["path"],
                "true": s["class_index"],
                "true_class": class_names[s["class_index"]],
                "predicted": pred,
                "predicted_class": class_names[pred],
                "confidence": float(p[pred]),
                "probabilities": [float(v) for v in p],
            })
    failures.sort(key=lambda r: -r["confidence"])
    return failures


def save_predictions_jsonl(path, records):
    _write_jsonl(path, records, "no prediction records")


def save_failures_jsonl(path, records):
    _write_jsonl(path, records, "no misclassified samples")
