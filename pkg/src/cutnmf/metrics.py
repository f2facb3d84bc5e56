"""Accuracy measures over a subset of rated cells.

Every measure takes the true ratings ``A`` and the integer predictions
``C`` as dense ``n_users x n_items`` arrays and an index set ``sigma``,
given either as a boolean mask or as a ``(rows, cols)`` pair of arrays.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .ratings import ObservedRatings


@dataclass(frozen=True)
class EvalSet:
    label: str
    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def from_ratings(cls, label: str, ratings: ObservedRatings) -> EvalSet:
        return cls(label, *ratings.omega)

    @property
    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        return self.rows, self.cols

    def __len__(self):
        return len(self.rows)


def _pairs(A, C, sigma, allow_empty=False):
    A = np.asarray(A)
    C = np.asarray(C)
    if A.shape != C.shape:
        raise ValueError(f"A {A.shape} and C {C.shape} differ in shape")
    if isinstance(sigma, EvalSet):
        sigma = sigma.cells
    if isinstance(sigma, np.ndarray) and sigma.dtype == bool:
        if sigma.shape != A.shape:
            raise ValueError("mask shape does not match the matrices")
        a, c = A[sigma], C[sigma]
    else:
        rows, cols = sigma
        a, c = A[rows, cols], C[rows, cols]
    if a.size == 0 and not allow_empty:
        raise ValueError("empty evaluation set")
    return a.astype(np.float64), c.astype(np.float64)


def _mae(a, c) -> float:
    return float(np.mean(np.abs(a - c)))


def mae(A, C, sigma) -> float:
    return _mae(*_pairs(A, C, sigma))


def zero_one_loss(A, C, sigma, threshold=4) -> float:
    """Fraction of cells where truth and prediction fall on opposite sides of
    ``threshold``. Agreeing cells (including ``a = c = threshold``) never count."""
    a, c = _pairs(A, C, sigma)
    return float(np.mean((a >= threshold) != (c >= threshold)))


def cmae(A, C, sigma, threshold=4) -> float | None:
    """MAE restricted to cells where the truth or the prediction reaches
    ``threshold``; ``None`` when no cell qualifies."""
    a, c = _pairs(A, C, sigma)
    keep = (a >= threshold) | (c >= threshold)
    if not keep.any():
        return None
    return _mae(a[keep], c[keep])


def precision_recall(A, C, sigma, threshold=4) -> tuple[float | None, float | None]:
    """Pooled precision and recall in percent; ``None`` for an empty denominator."""
    a, c = _pairs(A, C, sigma)
    relevant = a >= threshold
    recommended = c >= threshold
    hits = int(np.count_nonzero(relevant & recommended))
    n_rec = int(np.count_nonzero(recommended))
    n_rel = int(np.count_nonzero(relevant))
    precision = 100.0 * hits / n_rec if n_rec else None
    recall = 100.0 * hits / n_rel if n_rel else None
    return precision, recall


@dataclass(frozen=True)
class MetricReport:
    set_label: str
    mae: float
    cmae: float | None
    zero_one: float
    precision: float | None
    recall: float | None
    threshold: float = 4

    def __post_init__(self):
        if self.mae < 0 or (self.cmae is not None and self.cmae < 0):
            raise ValueError("negative error")
        if not 0 <= self.zero_one <= 1:
            raise ValueError("0-1 loss outside [0, 1]")
        for p in (self.precision, self.recall):
            if p is not None and not 0 <= p <= 100:
                raise ValueError("precision/recall outside [0, 100]")


def evaluate(A, C, sigma, label: str | None = None, threshold=4) -> MetricReport:
    if label is None:
        label = sigma.label if isinstance(sigma, EvalSet) else "sigma"
    precision, recall = precision_recall(A, C, sigma, threshold)
    return MetricReport(
        set_label=label,
        mae=mae(A, C, sigma),
        cmae=cmae(A, C, sigma, threshold),
        zero_one=zero_one_loss(A, C, sigma, threshold),
        precision=precision,
        recall=recall,
        threshold=threshold,
    )


RESULT_FIELDS = ["algo", "set_label", "k", "iterations", "mae", "cmae",
                 "zero_one", "precision", "recall"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def report_row(report: MetricReport, algo: str, k, iterations) -> dict:
    """CSV row for ``report``; absent values become empty fields."""
    return {
        "algo": algo,
        "set_label": report.set_label,
        "k": _fmt(k),
        "iterations": _fmt(iterations),
        "mae": _fmt(report.mae),
        "cmae": _fmt(report.cmae),
        "zero_one": _fmt(report.zero_one),
        "precision": _fmt(report.precision),
        "recall": _fmt(report.recall),
    }


def read_report_rows(path) -> list[dict]:
    def num(s):
        return None if s == "" else float(s)

    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out = dict(row)
            for key in ("mae", "cmae", "zero_one", "precision", "recall"):
                out[key] = num(row[key])
            rows.append(out)
    return rows


def distance_from_origin(mae_value: float, zero_one: float) -> float:
    return math.hypot(mae_value, zero_one)
