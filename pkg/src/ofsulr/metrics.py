"""Binary classification metrics: confusion counts, Ac/Pr/Re/F1, ROC and AUC.

Class 1 is the positive class.  Zero denominators yield 0 (precision with no
positive predictions, recall with no positive labels, F1 when Pr + Re = 0).

The true-positive rate is Tp / (Tp + Fn), i.e. recall.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def _binary(a, name) -> np.ndarray:
    arr = np.asarray(a).ravel()
    if arr.size and not np.all(np.isin(arr, (0, 1))):
        raise DataError(f"{name} must contain only 0/1 labels")
    return arr.astype(int)


def confusion(y_true, y_pred) -> Confusion:
    t, p = _binary(y_true, "y_true"), _binary(y_pred, "y_pred")
    if t.shape != p.shape:
        raise DataError(f"length mismatch: {t.size} labels vs {p.size} predictions")
    return Confusion(
        tp=int(np.sum((t == 1) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


def accuracy(c: Confusion) -> float:
    return (c.tp + c.tn) / c.total if c.total else 0.0


def precision(c: Confusion) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: Confusion) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: Confusion) -> float:
    pr, re = precision(c), recall(c)
    return 2 * pr * re / (pr + re) if pr + re > 0 else 0.0


def roc_curve(scores, y_true) -> list[tuple[float, float]]:
    """ROC points, one per distinct score threshold (descending), from (0, 0) to (1, 1).

    Equal scores form a single step, so ties produce a diagonal segment.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = _binary(y_true, "y_true")
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise DataError("scores must be finite")
    pos, neg = int(y.sum()), int(len(y) - y.sum())
    if pos == 0 or neg == 0:
        raise DataError("ROC/AUC undefined: y_true contains a single class")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.nonzero(np.diff(s))[0]
    ends = np.append(ends, len(s) - 1)
    tps = np.cumsum(y)[ends]
    fps = (ends + 1) - tps
    points = [(0.0, 0.0)]
    points.extend(zip((fps / neg).tolist(), (tps / pos).tolist()))
    return points


def auc_trapezoid(points) -> float:
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_auc(scores, y_true) -> tuple[list[tuple[float, float]], float]:
    points = roc_curve(scores, y_true)
    return points, auc_trapezoid(points)


@dataclass
class EvalReport:
    confusion: Confusion
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_points: list[tuple[float, float]] = field(default_factory=list)
    auc: float | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc_points"] = [list(p) for p in self.roc_points]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            Confusion(**d["confusion"]),
            d["accuracy"], d["precision"], d["recall"], d["f1"],
            [tuple(p) for p in d.get("roc_points", [])],
            d.get("auc"), d.get("wall_time", 0.0),
        )


TABLE_COLUMNS = ["Classifier", "Avg. time", "Ac", "Fm", "Pr", "Re"]


def table_row(name: str, report: EvalReport) -> list:
    return [name, f"{report.wall_time:.3f}s", report.accuracy, report.f1, report.precision, report.recall]


def to_csv_row(name: str, report: EvalReport, header: bool = False) -> str:
    """One Classifier/Avg. time/Ac/Fm/Pr/Re CSV row (optionally preceded by the header)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(TABLE_COLUMNS)
    w.writerow(table_row(name, report))
    return buf.getvalue()


def report_from_confusion(c: Confusion, wall_time: float = 0.0) -> EvalReport:
    return EvalReport(c, accuracy(c), precision(c), recall(c), f1(c), [], None, wall_time)


def evaluate(y_true, y_pred, scores=None, wall_time: float = 0.0) -> EvalReport:
    """Full report; ROC/AUC are included when scores are given and both classes occur."""
    rep = report_from_confusion(confusion(y_true, y_pred), wall_time)
    if scores is not None:
        y = np.asarray(y_true)
        if 0 < y.sum() < len(y):
            rep.roc_points, rep.auc = roc_auc(scores, y_true)
    return rep
