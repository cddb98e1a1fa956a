"""Late score fusion and the cross-view / cross-subject evaluation harness.

Per-sample class scores from independent streams are combined
elementwise (maximum, average or product) and renormalized onto the
probability simplex.  Evaluation reports accuracy, a confusion matrix,
one-vs-rest ROC curves per class and their trapezoidal AUCs.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class FusionMode(enum.Enum):
    MAXIMUM = "maximum"
    AVERAGE = "average"
    PRODUCT = "product"

    @classmethod
    def parse(cls, name: str) -> "FusionMode":
        aliases = {"max": "maximum", "avg": "average", "mul": "product", "prod": "product"}
        key = aliases.get(name.lower(), name.lower())
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown fusion mode {name!r}") from None


@dataclass(frozen=True)
class SplitProtocol:
    """Declarative train/test partition over sequence metadata.

    ``cross_view`` partitions by view id, ``cross_subject`` by subject
    id; the two sides must be disjoint and non-empty.
    """

    kind: str
    train_views: frozenset[int] = frozenset()
    test_views: frozenset[int] = frozenset()
    train_subjects: frozenset[int] = frozenset()
    test_subjects: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.kind not in ("cross_view", "cross_subject"):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        train, test = self.sides()
        if not train or not test:
            raise ValueError("both protocol sides must be non-empty")
        if train & test:
            raise ValueError(f"train and test sets overlap: {sorted(train & test)}")

    def sides(self) -> tuple[frozenset[int], frozenset[int]]:
        if self.kind == "cross_view":
            return frozenset(self.train_views), frozenset(self.test_views)
        return frozenset(self.train_subjects), frozenset(self.test_subjects)

    def key_of(self, entry: Mapping) -> int:
        return int(entry["view_id" if self.kind == "cross_view" else "subject_id"])

    @classmethod
    def cross_view(cls, train_views: Iterable[int], test_views: Iterable[int]) -> "SplitProtocol":
        return cls(
            kind="cross_view",
            train_views=frozenset(int(v) for v in train_views),
            test_views=frozenset(int(v) for v in test_views),
        )

    @classmethod
    def cross_subject(
        cls, train_subjects: Iterable[int], test_subjects: Iterable[int]
    ) -> "SplitProtocol":
        return cls(
            kind="cross_subject",
            train_subjects=frozenset(int(s) for s in train_subjects),
            test_subjects=frozenset(int(s) for s in test_subjects),
        )


@dataclass(frozen=True)
class RocCurve:
    """One ROC vertex per unique score, descending threshold order."""

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # (C, C) ints, rows = true class
    per_class_roc: tuple[RocCurve, ...]
    per_class_auc: np.ndarray
    macro_auc: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_class_auc": self.per_class_auc.tolist(),
            "macro_auc": self.macro_auc,
        }


def _validate_simplex(arr: np.ndarray) -> None:
    if np.any(arr < -1e-9):
        raise ValueError("scores must be non-negative")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("score vectors must sum to 1")


def _combine(stack: np.ndarray, mode: FusionMode) -> np.ndarray:
    """Fuse an (S, ..., C) score stack along the stream axis and renormalize."""
    if mode is FusionMode.MAXIMUM:
        combined = stack.max(axis=0)
    elif mode is FusionMode.AVERAGE:
        combined = stack.mean(axis=0)
    else:
        combined = stack.prod(axis=0)
    sums = combined.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("fusion collapsed a score vector to zero mass")
    return combined / sums


def fuse(scores: Sequence[np.ndarray], mode: FusionMode) -> np.ndarray:
    """Fuse per-stream score vectors for one sample.

    Inputs must live on the probability simplex; the output is
    renormalized so the product mode lands back on it.
    """
    if len(scores) == 0:
        raise ValueError("need at least one stream")
    lengths = {np.asarray(s).shape for s in scores}
    if len(lengths) != 1:
        raise ValueError(f"class-count mismatch across streams: {sorted(lengths)}")
    stack = np.asarray(scores, dtype=np.float64)
    if stack.ndim != 2:
        raise ValueError("each stream must contribute one score vector")
    _validate_simplex(stack)
    return _combine(stack, mode)


def make_splits(
    entries: Sequence[Mapping], protocol: SplitProtocol
) -> tuple[list[str], list[str]]:
    """Partition manifest entries into (train ids, test ids), sorted by id.

    Entries whose key falls in neither side are excluded (e.g. unused
    views of a four-view corpus).
    """
    train_side, test_side = protocol.sides()
    train: list[str] = []
    test: list[str] = []
    for entry in entries:
        key = protocol.key_of(entry)
        if key in train_side:
            train.append(str(entry["id"]))
        elif key in test_side:
            test.append(str(entry["id"]))
    if not train or not test:
        raise ValueError("protocol produced an empty train or test side")
    return sorted(train), sorted(test)


def roc_auc(labels: np.ndarray, scores: np.ndarray) -> tuple[RocCurve, float]:
    """ROC curve and trapezoidal AUC for binary labels.

    Thresholds sweep the unique scores in descending order; tied scores
    share a threshold, so the curve has one vertex per unique value plus
    the (0, 0) origin at threshold +inf.
    """
    y = np.asarray(labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("labels and scores must be 1-D and aligned")
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise ValueError("need at least one positive and one negative label")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each unique-score run
    distinct = np.flatnonzero(np.diff(s_sorted))
    boundaries = np.concatenate([distinct, [s.size - 1]])
    tp = np.cumsum(y_sorted)[boundaries]
    fp = np.cumsum(~y_sorted)[boundaries]
    tpr = np.concatenate([[0.0], tp / pos])
    fpr = np.concatenate([[0.0], fp / neg])
    thresholds = np.concatenate([[np.inf], s_sorted[boundaries]])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr), auc


def _single_report(scores: np.ndarray, labels: np.ndarray, num_classes: int) -> EvalReport:
    pred = np.argmax(scores, axis=1)  # first maximum = lowest class id on ties
    accuracy = float((pred == labels).mean())
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    curves = []
    aucs = []
    for c in range(num_classes):
        curve, auc = roc_auc(labels == c, scores[:, c])
        curves.append(curve)
        aucs.append(auc)
    per_class_auc = np.asarray(aucs)
    return EvalReport(
        accuracy=accuracy,
        confusion=confusion,
        per_class_roc=tuple(curves),
        per_class_auc=per_class_auc,
        macro_auc=float(per_class_auc.mean()),
    )


def evaluate(
    stream_scores: Mapping[str, np.ndarray],
    labels: np.ndarray,
    modes: Iterable[FusionMode] = tuple(FusionMode),
) -> dict:
    """Per-stream and per-fusion-mode reports over aligned test samples.

    ``stream_scores`` maps stream name to an (n, C) matrix of simplex
    rows, all aligned with ``labels``.  Returns
    ``{"streams": {name: EvalReport}, "fusion": {mode value: EvalReport}}``.
    """
    if not stream_scores:
        raise ValueError("need at least one stream")
    labels = np.asarray(labels, dtype=np.int64)
    matrices = {}
    for name, scores in stream_scores.items():
        arr = np.asarray(scores, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != labels.shape[0]:
            raise ValueError(f"stream {name!r} is misaligned with the labels")
        _validate_simplex(arr)
        matrices[name] = arr
    shapes = {m.shape for m in matrices.values()}
    if len(shapes) != 1:
        raise ValueError(f"streams disagree on shape: {sorted(shapes)}")
    num_classes = next(iter(shapes))[1]
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError("labels outside [0, num_classes)")

    report: dict = {"streams": {}, "fusion": {}}
    for name, arr in matrices.items():
        report["streams"][name] = _single_report(arr, labels, num_classes)
    stack = np.stack(list(matrices.values()))
    for mode in modes:
        fused = _combine(stack, mode)
        report["fusion"][mode.value] = _single_report(fused, labels, num_classes)
    return report


def report_to_json(report: dict, num_samples: int) -> str:
    """Deterministic JSON rendering of an evaluate() result."""

    payload = {
        "num_samples": num_samples,
        "streams": {k: v.to_dict() for k, v in report["streams"].items()},
        "fusion": {k: v.to_dict() for k, v in report["fusion"].items()},
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def write_curves_csv(report: EvalReport, path) -> None:
    """Per-class ROC vertices as CSV rows (class_id, fpr, tpr, threshold)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "fpr", "tpr", "threshold"])
        for class_id, curve in enumerate(report.per_class_roc):
            for f, t, th in zip(curve.fpr, curve.tpr, curve.thresholds):
                writer.writerow([class_id, repr(float(f)), repr(float(t)), repr(float(th))])
