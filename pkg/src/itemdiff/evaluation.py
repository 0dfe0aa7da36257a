"""Error metrics, dummy baselines, and the per-grade evaluation report.

The report convention follows the benchmark tables: the difference columns
are dummy metric minus method metric, so positive means the method beat
the per-group-mean baseline.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from .item_pool import grade_label
from .tabletext import format_table

METHOD_ORDER = ("direct", "rf", "gbm", "dummy")
OVERALL = "overall"


def _aligned(pred: Sequence[float], truth: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} predictions vs {t.shape[0]} truths")
    if p.size == 0:
        raise ValueError("empty input")
    return p, t


def rmse(pred: Sequence[float], truth: Sequence[float]) -> float:
    p, t = _aligned(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    p, t = _aligned(pred, truth)
    return float(np.mean(np.abs(p - t)))


def pearson_r(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample correlation; raises on constant input."""
    x, y = _aligned(a, b)
    if x.size < 2:
        raise ValueError("need at least 2 observations for a correlation")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float((xc @ yc) / (sx * sy))


def safe_pearson(a: Sequence[float], b: Sequence[float]) -> Optional[float]:
    """pearson_r, or None when undefined (fewer than 3 points or constant)."""
    if len(a) < 3:
        return None
    try:
        return pearson_r(a, b)
    except ValueError:
        return None


def dummy_predict(
    train_y_by_group: Mapping[Hashable, Sequence[float]],
    test_groups: Sequence[Hashable],
) -> np.ndarray:
    """Predict each test observation by its group's training-mean target.

    Callers choose the grouping: per-grade keys for the grade-mean dummy,
    a single shared key for the overall-mean dummy.
    """
    means = {}
    for key, ys in train_y_by_group.items():
        if len(ys) == 0:
            raise ValueError(f"group {key!r} has no training targets")
        means[key] = float(np.mean(np.asarray(ys, dtype=np.float64)))
    unseen = sorted({str(g) for g in test_groups if g not in means})
    if unseen:
        raise ValueError(f"unseen group(s) in test data: {', '.join(unseen)}")
    return np.array([means[g] for g in test_groups])


@dataclass(frozen=True)
class ReportRow:
    subject: str
    grade: str  # "K", "1".."5", or "overall"
    method: str
    n: int
    rmse: float
    mae: float
    pearson_r: Optional[float]
    rmse_diff_vs_dummy: float
    mae_diff_vs_dummy: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["subject", "grade", "method", "n", "rmse", "mae",
                 "pearson_r", "rmse_diff_vs_dummy", "mae_diff_vs_dummy"]
            )
            for r in self.rows:
                writer.writerow([
                    r.subject, r.grade, r.method, r.n,
                    repr(r.rmse), repr(r.mae),
                    "" if r.pearson_r is None else repr(r.pearson_r),
                    repr(r.rmse_diff_vs_dummy), repr(r.mae_diff_vs_dummy),
                ])

    def render_text(self) -> str:
        headers = ["subject", "grade", "method", "n", "RMSE", "MAE", "r",
                   "dRMSE", "dMAE"]
        body = []
        for r in self.rows:
            body.append([
                r.subject, r.grade, r.method, str(r.n),
                f"{r.rmse:.2f}", f"{r.mae:.2f}",
                "n/a" if r.pearson_r is None else f"{r.pearson_r:.2f}",
                f"{r.rmse_diff_vs_dummy:.2f}", f"{r.mae_diff_vs_dummy:.2f}",
            ])
        note = ("dRMSE/dMAE = dummy minus method; positive means the method "
                "beat the per-grade-mean baseline.\n")
        return format_table(headers, body) + note


def build_report(
    predictions_by_method: Mapping[str, Mapping[str, float]],
    truth: Mapping[str, float],
    groups: Mapping[str, tuple[str, int]],
) -> EvalReport:
    """Per-grade and overall rows for every method, against the dummy.

    ``predictions_by_method`` must contain a ``"dummy"`` entry; every method
    must cover exactly the ids in ``truth``.  ``groups`` maps item id to
    (subject, grade).
    """
    ids = sorted(truth)
    if not ids:
        raise ValueError("empty truth set")
    if set(groups) != set(truth):
        raise ValueError("groups and truth cover different item ids")
    if "dummy" not in predictions_by_method:
        raise ValueError("predictions_by_method must include the 'dummy' baseline")
    for method, preds in predictions_by_method.items():
        if set(preds) != set(truth):
            missing = sorted(set(truth) - set(preds))[:5]
            extra = sorted(set(preds) - set(truth))[:5]
            raise ValueError(
                f"method {method!r} predictions misaligned with truth "
                f"(missing e.g. {missing}, extra e.g. {extra})"
            )

    methods = [m for m in METHOD_ORDER if m in predictions_by_method]
    methods += sorted(set(predictions_by_method) - set(METHOD_ORDER))

    subjects = sorted({groups[i][0] for i in ids})
    rows: list[ReportRow] = []
    for subject in subjects:
        subj_ids = [i for i in ids if groups[i][0] == subject]
        grades = sorted({groups[i][1] for i in subj_ids})
        facets: list[tuple[str, list[str]]] = [
            (grade_label(g), [i for i in subj_ids if groups[i][1] == g]) for g in grades
        ]
        facets.append((OVERALL, subj_ids))
        for facet_name, facet_ids in facets:
            t = [truth[i] for i in facet_ids]
            metrics = {}
            for method in methods:
                p = [predictions_by_method[method][i] for i in facet_ids]
                metrics[method] = (rmse(p, t), mae(p, t), safe_pearson(p, t))
            d_rmse, d_mae, _ = metrics["dummy"]
            for method in methods:
                m_rmse, m_mae, m_r = metrics[method]
                rows.append(
                    ReportRow(
                        subject=subject,
                        grade=facet_name,
                        method=method,
                        n=len(facet_ids),
                        rmse=m_rmse,
                        mae=m_mae,
                        pearson_r=m_r,
                        rmse_diff_vs_dummy=d_rmse - m_rmse,
                        mae_diff_vs_dummy=d_mae - m_mae,
                    )
                )
    return EvalReport(rows=tuple(rows))
