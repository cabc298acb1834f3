"""Confusion matrices, per-class precision/recall/F1 reports, and
before/during-shift comparison reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class LabelMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassReport:
    accuracy: float
    label0: LabelMetrics
    label1: LabelMetrics

    def per_label(self) -> dict:
        return {0: self.label0, 1: self.label1}


@dataclass(frozen=True)
class ShiftReport:
    model: str
    optimizer: str
    test1: ClassReport
    test2: ClassReport
    delta_accuracy: float
    delta_precision0: float
    delta_precision1: float
    delta_recall0: float
    delta_recall1: float
    delta_f1_0: float
    delta_f1_1: float
    # True when label-1 precision degraded strictly less than label-0
    # precision, None when the two deltas are equal.
    label1_more_robust: bool | None


def confusion(preds, labels) -> ConfusionMatrix:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise DataError("preds and labels misaligned")
    if preds.size == 0:
        raise DataError("empty prediction list")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def _prf(tp: int, fp: int, fn: int, support: int) -> LabelMetrics:
    # zero-denominator metrics are defined as 0 so degenerate one-class
    # predictors still produce complete reports
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return LabelMetrics(precision=precision, recall=recall, f1=f1, support=support)


def classification_report(cm: ConfusionMatrix) -> ClassReport:
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    return ClassReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        label0=_prf(cm.tn, cm.fn, cm.fp, support=cm.tn + cm.fp),
        label1=_prf(cm.tp, cm.fp, cm.fn, support=cm.tp + cm.fn),
    )


def report_from_predictions(preds, labels) -> ClassReport:
    return classification_report(confusion(preds, labels))


def shift_report(r1: ClassReport, r2: ClassReport, model: str = "",
                 optimizer: str = "") -> ShiftReport:
    dp0 = r2.label0.precision - r1.label0.precision
    dp1 = r2.label1.precision - r1.label1.precision
    if dp1 == dp0:
        robust = None
    else:
        robust = dp1 > dp0  # label-1 precision dropped less
    return ShiftReport(
        model=model,
        optimizer=optimizer,
        test1=r1,
        test2=r2,
        delta_accuracy=r2.accuracy - r1.accuracy,
        delta_precision0=dp0,
        delta_precision1=dp1,
        delta_recall0=r2.label0.recall - r1.label0.recall,
        delta_recall1=r2.label1.recall - r1.label1.recall,
        delta_f1_0=r2.label0.f1 - r1.label0.f1,
        delta_f1_1=r2.label1.f1 - r1.label1.f1,
        label1_more_robust=robust,
    )


def report_json(model: str, optimizer: str, split: str, report: ClassReport,
                wall_time_s: float) -> str:
    doc = {
        "model": model,
        "optimizer": optimizer,
        "split": split,
        "accuracy": report.accuracy,
        "per_label": {
            "0": asdict(report.label0),
            "1": asdict(report.label1),
        },
        "wall_time_s": round(wall_time_s, 3),
    }
    return json.dumps(doc, sort_keys=True)
