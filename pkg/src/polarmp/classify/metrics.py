"""Evaluation metrics and prediction-file I/O.

Class order is fixed as PP, HDPE, LDPE in vectors, matrices and files.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import CLASSES

PRED_COLUMNS = ("id", "p_pp", "p_hdpe", "p_ldpe")
RENORM_TOLERANCE = 1e-3

CONFIDENCE_DEFINITION = "mean over samples of the probability assigned to the predicted (argmax) class"


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray  # rows = true class, columns = predicted class
    normalized: np.ndarray
    avg_confidence: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    n: int
    classes: tuple = CLASSES
    metadata: dict = field(default_factory=lambda: {"avg_confidence": CONFIDENCE_DEFINITION})

    def to_json(self):
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "avg_confidence": self.avg_confidence,
            "n": self.n,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "normalized": self.normalized.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            d["accuracy"], d["macro_f1"], np.array(d["confusion"]), np.array(d["normalized"]),
            d["avg_confidence"], np.array(d["precision"]), np.array(d["recall"]), np.array(d["f1"]),
            d["n"], tuple(d["classes"]), d.get("metadata", {}),
        )

    def save(self, json_path, matrix_csv=None):
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(self.to_json(), indent=2))
        if matrix_csv is not None:
            with open(matrix_csv, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["true\\pred", *self.classes])
                for c, row in zip(self.classes, self.normalized):
                    w.writerow([c, *(f"{v:.6f}" for v in row)])


def confusion_matrix(true_idx, pred_idx, k):
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (true_idx, pred_idx), 1)
    return cm


def report_from_confusion(cm, confidences=None, classes=CLASSES):
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(true_tot > 0, tp / true_tot, 0.0)
        denom = 2 * tp + (pred_tot - tp) + (true_tot - tp)
        f1 = np.where(denom > 0, 2 * tp / denom, 0.0)
        normalized = np.where(true_tot[:, None] > 0, cm / true_tot[:, None], 0.0)
    conf = float(np.mean(confidences)) if confidences is not None and len(confidences) else float("nan")
    return EvalReport(
        accuracy=float(tp.sum() / total) if total else 0.0,
        macro_f1=float(f1.mean()),
        confusion=cm,
        normalized=normalized,
        avg_confidence=conf,
        precision=precision,
        recall=recall,
        f1=f1,
        n=total,
        classes=tuple(classes),
    )


def evaluate(predictions, truth, classes=CLASSES):
    """Compare ``id -> prob vector`` against ``id -> label``.

    Prediction is the argmax (ties go to the earlier class).
    """
    if set(predictions) != set(truth):
        extra = sorted(set(predictions) - set(truth))[:3]
        missing = sorted(set(truth) - set(predictions))[:3]
        raise ValueError(f"id mismatch: unexpected {extra}, missing {missing}")
    ids = sorted(truth)
    lookup = {c: i for i, c in enumerate(classes)}
    P = np.array([np.asarray(predictions[i], dtype=np.float64) for i in ids]).reshape(len(ids), -1)
    if P.shape[1] != len(classes):
        raise ValueError(f"probability vectors must have {len(classes)} entries")
    try:
        t = np.array([lookup[truth[i]] for i in ids], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"unknown label {exc.args[0]!r}") from None
    pred = np.argmax(P, axis=1)
    cm = confusion_matrix(t, pred, len(classes))
    return report_from_confusion(cm, P[np.arange(len(ids)), pred], classes)


def fuse_predictions(a, b):
    """Average two ``id -> prob vector`` maps over their common ids."""
    if set(a) != set(b):
        raise ValueError("prediction sets cover different ids")
    return {i: 0.5 * (np.asarray(a[i]) + np.asarray(b[i])) for i in a}


def import_predictions(path):
    """Read ``id,p_pp,p_hdpe,p_ldpe`` rows.

    Rows whose probabilities sum to 1 within 1e-3 are renormalized; any
    other row is rejected with its line number.
    """
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PRED_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(PRED_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            rid = row[0].strip()
            try:
                p = np.array([float(v) for v in row[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed probability") from None
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ValueError(f"{path}:{lineno}: negative or non-finite probability")
            s = p.sum()
            if abs(s - 1.0) > RENORM_TOLERANCE:
                raise ValueError(f"{path}:{lineno}: probabilities sum to {s:.6g}, deviation > {RENORM_TOLERANCE}")
            if rid in out:
                raise ValueError(f"{path}:{lineno}: duplicate id {rid!r}")
            out[rid] = p / s
    return out


def write_predictions(path, predictions):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRED_COLUMNS)
        for rid in sorted(predictions):
            w.writerow([rid, *(repr(float(v)) for v in predictions[rid])])
