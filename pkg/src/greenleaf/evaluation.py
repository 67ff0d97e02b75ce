"""Confusion matrices and accuracy / recall / precision / F-measure with macro averaging."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import ArrayDataset, DatasetIndex, DecodeError, load_and_resize
from .models import ModelGraph, predict

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    class_names: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    precision: list[float]
    recall: list[float]
    f_measure: list[float]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f_measure: float
    empty_classes: list[int] = field(default_factory=list)
    failures: int = 0

    def to_dict(self) -> dict:
        names = self.confusion.class_names or [str(i) for i in range(self.confusion.num_classes)]
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "class_names": names,
            "confusion_matrix": self.confusion.counts.astype(int).tolist(),
            "per_class": {n: {"precision": p, "recall": r, "f_measure": f}
                          for n, p, r, f in zip(names, self.precision, self.recall, self.f_measure)},
            "accuracy": self.accuracy,
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f_measure": self.macro_f_measure},
            "samples": self.confusion.total,
            "decode_failures": self.failures,
            "empty_classes": [names[i] for i in self.empty_classes],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def confusion_matrix(predictions: Sequence[int], labels: Sequence[int], num_classes: int,
                     class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    t = np.asarray(labels, dtype=np.int64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions vs {t.size} labels")
    for what, a in (("prediction", p), ("label", t)):
        bad = (a < 0) | (a >= num_classes)
        if bad.any():
            raise ValueError(f"{what} id {a[bad][0]} outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return ConfusionMatrix(cm, list(class_names or []))


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics_from_confusion(cm: ConfusionMatrix) -> EvalReport:
    """One-vs-rest TP/FP/FN per class; macro figures are unweighted class means; 0/0 -> 0."""
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    precision = [_ratio(a, a + b) for a, b in zip(tp, fp)]
    recall = [_ratio(a, a + b) for a, b in zip(tp, fn)]
    f = [_ratio(2 * p * r, p + r) for p, r in zip(precision, recall)]
    empty = [i for i in range(len(tp)) if tp[i] + fn[i] == 0 or tp[i] + fp[i] == 0]
    k = len(tp)
    return EvalReport(cm, precision, recall, f, float(tp.sum() / total),
                      sum(precision) / k, sum(recall) / k, sum(f) / k, empty)


def argmax_lowest(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. the lowest class id on ties
    return np.argmax(logits, axis=1)


def evaluate(model: ModelGraph, dataset: DatasetIndex | ArrayDataset, resolution: int | None = None,
             json_path: str | Path | None = None, batch_size: int = 32) -> EvalReport:
    """Eval-mode predictions over a dataset. Undecodable files are counted and skipped."""
    resolution = resolution or model.input_resolution
    failures = 0
    if isinstance(dataset, DatasetIndex):
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        names = dataset.class_names
        images, labels = [], []
        for path, cid in dataset.records:
            try:
                images.append(load_and_resize(path, resolution)[0].astype(model.dtype))
                labels.append(cid)
            except DecodeError as e:
                log.warning("%s", e)
                failures += 1
        images = np.stack(images) if images else np.zeros((0, 3, resolution, resolution), model.dtype)
        labels = np.asarray(labels, dtype=np.int64)
    else:
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        names, images, labels = dataset.class_names, dataset.images, dataset.labels
        failures = len(dataset.failures)
    preds = argmax_lowest(predict(model, images, batch_size)) if len(labels) else labels
    cm = confusion_matrix(preds, labels, model.num_classes, names)
    report = metrics_from_confusion(cm) if cm.total else EvalReport(
        cm, [0.0] * cm.num_classes, [0.0] * cm.num_classes, [0.0] * cm.num_classes, 0.0, 0.0, 0.0,
        0.0, list(range(cm.num_classes)))
    report.failures = failures
    if json_path is not None:
        report.write_json(json_path)
    return report
