"""Classification metrics over the at-risk class, ROC sweep and AUC."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    confusion: dict = field(default_factory=dict)
    roc_points: list[tuple[float, float, float]] = field(default_factory=list)

    def summary(self) -> dict:
        """Scalars only; undefined values (nan) become ``None``."""
        out = {}
        for k in ("accuracy", "precision", "recall", "f1", "auc"):
            v = getattr(self, k)
            out[k] = None if math.isnan(v) else round(v, 12)
        out["confusion"] = dict(self.confusion)
        return out

    def roc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in self.roc_points:
            w.writerow([repr(float(fpr)), repr(float(tpr)), "inf" if math.isinf(thr) else repr(float(thr))])
        return buf.getvalue()


def roc_curve(scores, positives) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) with "positive iff score >= threshold".

    Thresholds are every distinct score plus 0 and 1, swept from high to low,
    preceded by an (0, 0, inf) anchor so the curve always starts at the
    origin.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    thresholds = np.unique(np.concatenate([s, [0.0, 1.0]]))[::-1]
    pos_sorted = np.sort(s[y])
    neg_sorted = np.sort(s[~y])
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    tpr = tp / n_pos if n_pos else np.full(len(thresholds), np.nan)
    fpr = fp / n_neg if n_neg else np.full(len(thresholds), np.nan)
    pts = [(0.0, 0.0, math.inf)]
    pts += [(float(a), float(b), float(t)) for a, b, t in zip(fpr, tpr, thresholds)]
    return pts


def auc_from_roc(points) -> float:
    if not points or any(math.isnan(p[0]) or math.isnan(p[1]) for p in points):
        return math.nan
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def _div(a: float, b: float) -> float:
    return a / b if b else math.nan


def evaluate(scores, labels, positive_class: int = 1, threshold: float = 0.5) -> MetricReport:
    """Metrics for scores of ``positive_class``; hard call is ``score >= threshold``.

    Precision, recall and F1 are undefined (nan) rather than 0 when their
    denominators vanish.
    """
    s = np.asarray(scores, dtype=float)
    lab = np.asarray(labels)
    if s.shape != lab.shape or s.ndim != 1:
        raise MetricsError("scores and labels must be 1-d and the same length")
    if len(s) == 0:
        raise MetricsError("need at least one prediction")
    pos = lab == positive_class
    pred = s >= threshold
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision = _div(tp, tp + fp)
    recall = _div(tp, tp + fn)
    if math.isnan(precision) or math.isnan(recall) or precision + recall == 0:
        f1 = math.nan if (math.isnan(precision) or math.isnan(recall)) else 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    roc = roc_curve(s, pos)
    return MetricReport(
        accuracy=(tp + tn) / len(s),
        precision=precision,
        recall=recall,
        f1=f1,
        auc=auc_from_roc(roc),
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        roc_points=roc,
    )


def write_roc_csv(path, report: MetricReport, header: str = "") -> None:
    Path(path).write_text(header + report.roc_csv())
