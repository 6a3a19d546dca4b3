"""Binary classification metrics and distribution-comparison metrics.

The distance/similarity metrics follow the standard label-distribution-learning
forms. Coordinates where both distributions are exactly zero contribute
nothing to clark/canberra (continuity convention).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .schema import LabelSchema, default_schema
from .validation import targets_matrix

__all__ = [
    "BinaryReport",
    "DistReport",
    "binary_metrics",
    "dist_accuracy",
    "clark",
    "canberra",
    "cosine",
    "intersection",
    "evaluate_run",
    "summarize_runs",
    "write_report_csv",
]


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryReport:
    """Accuracy/precision/recall/F1 with the lonely class as positive.

    ``precision_defined``/``recall_defined`` flag zero-denominator cases,
    which are reported as 0. ``ties_excluded`` counts targets with an exact
    vote tie, which carry no majority label and are left out of scoring.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    n_scored: int
    ties_excluded: int = 0
    precision_defined: bool = True
    recall_defined: bool = True

    def rows(self) -> list[tuple[str, str, float]]:
        return [
            ("lonely", "accuracy", self.accuracy),
            ("lonely", "precision", self.precision),
            ("lonely", "recall", self.recall),
            ("lonely", "f1", self.f1),
        ]


@dataclass(frozen=True)
class DistReport:
    """Mean distribution metrics for one category over a test set (K = block size)."""

    category: str
    k: int
    accuracy: float
    clark: float
    canberra: float
    cosine: float
    intersection: float
    n_scored: int

    def rows(self) -> list[tuple[str, str, float]]:
        return [
            (self.category, "accuracy", self.accuracy),
            (self.category, "clark", self.clark),
            (self.category, "canberra", self.canberra),
            (self.category, "cosine", self.cosine),
            (self.category, "intersection", self.intersection),
        ]


def binary_metrics(pred_lonely, true_lonely) -> BinaryReport:
    """Score binary predictions; the true label is the vote-majority argmax.

    Accepts (n, 2) lonely-block distributions (argmax is taken, predicted ties
    to the lowest index) or 1-D 0/1 label arrays. Exact ties in the true
    block are excluded from scoring and counted.
    """
    pred = np.asarray(pred_lonely, dtype=np.float64)
    true = np.asarray(true_lonely, dtype=np.float64)
    if pred.shape[0] != true.shape[0]:
        raise MetricError(f"length mismatch: {pred.shape[0]} predictions, {true.shape[0]} targets")
    if pred.shape[0] == 0:
        raise MetricError("nothing to score")

    if true.ndim == 2:
        tie = true[:, 0] == true[:, 1]
        true_label = np.argmax(true, axis=1)
    else:
        tie = np.zeros(true.shape[0], dtype=bool)
        true_label = true.astype(np.int64)
    pred_label = np.argmax(pred, axis=1) if pred.ndim == 2 else pred.astype(np.int64)

    keep = ~tie
    n_ties = int(tie.sum())
    y, yhat = true_label[keep], pred_label[keep]
    if y.size == 0:
        raise MetricError("all targets are ties; nothing to score")

    tp = int(np.sum((yhat == 1) & (y == 1)))
    tn = int(np.sum((yhat == 0) & (y == 0)))
    fp = int(np.sum((yhat == 1) & (y == 0)))
    fn = int(np.sum((yhat == 0) & (y == 1)))
    accuracy = (tp + tn) / y.size
    precision_defined = (tp + fp) > 0
    recall_defined = (tp + fn) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if recall_defined else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return BinaryReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        n_scored=int(y.size),
        ties_excluded=n_ties,
        precision_defined=precision_defined,
        recall_defined=recall_defined,
    )


def _check_pair(d: np.ndarray, d_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    d_hat = np.asarray(d_hat, dtype=np.float64)
    if d.shape != d_hat.shape or d.ndim != 1:
        raise MetricError(f"dimension mismatch: {d.shape} vs {d_hat.shape}")
    if np.any(d < 0) or np.any(d_hat < 0):
        raise MetricError("distribution entries must be nonnegative")
    return d, d_hat


def dist_accuracy(d_hat, d) -> int:
    """1 iff the predicted argmax lies in the target's argmax set (target ties are a set)."""
    d, d_hat = _check_pair(d, d_hat)
    if not np.any(d > 0):
        raise MetricError("all-zero target distribution has no argmax")
    pred = int(np.argmax(d_hat))  # ties broken by lowest index
    target_max = d.max()
    return int(d[pred] == target_max)


def clark(d, d_hat) -> float:
    d, d_hat = _check_pair(d, d_hat)
    s = d + d_hat
    with np.errstate(invalid="ignore"):
        terms = np.where(s > 0, (d - d_hat) ** 2 / np.where(s > 0, s, 1.0) ** 2, 0.0)
    return float(np.sqrt(np.sum(terms)))


def canberra(d, d_hat) -> float:
    d, d_hat = _check_pair(d, d_hat)
    s = d + d_hat
    terms = np.where(s > 0, np.abs(d - d_hat) / np.where(s > 0, s, 1.0), 0.0)
    return float(np.sum(terms))


def cosine(d, d_hat) -> float:
    d, d_hat = _check_pair(d, d_hat)
    nd = np.linalg.norm(d)
    nh = np.linalg.norm(d_hat)
    if nd == 0.0 or nh == 0.0:
        raise MetricError("cosine is undefined for a zero vector")
    return float(np.dot(d, d_hat) / (nd * nh))


def intersection(d, d_hat) -> float:
    d, d_hat = _check_pair(d, d_hat)
    return float(np.sum(np.minimum(d, d_hat)))


def evaluate_run(
    pred_probs,
    targets,
    schema: Optional[LabelSchema] = None,
) -> tuple[BinaryReport, list[DistReport]]:
    """Score one model run: binary report plus per-category distribution reports.

    Fine-grained metrics average over examples whose target block carries mass
    (all-zero targets have no defined argmax or clark and are excluded).
    """
    schema = schema or default_schema()
    probs = targets_matrix(pred_probs, schema, require_valid=False, dtype=np.float64)
    t = targets_matrix(targets, schema, dtype=np.float64)
    if probs.shape != t.shape:
        raise MetricError(f"predictions {probs.shape} vs targets {t.shape}")

    binary = binary_metrics(probs[:, :2], t[:, :2])

    reports: list[DistReport] = []
    start = 2
    for block in schema.fine_grained_blocks:
        size = block.size
        tb = t[:, start : start + size].astype(np.float64)
        pb = probs[:, start : start + size].astype(np.float64)
        mask = tb.sum(axis=1) > 0
        if not np.any(mask):
            raise MetricError(f"no examples with mass in block {block.name!r} to evaluate")
        accs, clarks, canberras, cosines, inters = [], [], [], [], []
        for i in np.flatnonzero(mask):
            accs.append(dist_accuracy(pb[i], tb[i]))
            clarks.append(clark(tb[i], pb[i]))
            canberras.append(canberra(tb[i], pb[i]))
            cosines.append(cosine(tb[i], pb[i]))
            inters.append(intersection(tb[i], pb[i]))
        reports.append(
            DistReport(
                category=block.name,
                k=size,
                accuracy=float(np.mean(accs)),
                clark=float(np.mean(clarks)),
                canberra=float(np.mean(canberras)),
                cosine=float(np.mean(cosines)),
                intersection=float(np.mean(inters)),
                n_scored=int(mask.sum()),
            )
        )
        start += size
    return binary, reports


def summarize_runs(
    runs: Sequence[tuple[BinaryReport, list[DistReport]]],
) -> list[dict]:
    """Mean and std (population) per (category, metric) across seed runs."""
    if not runs:
        raise MetricError("at least one run is required")
    rows: dict[tuple[str, str], list[float]] = {}
    order: list[tuple[str, str]] = []
    for binary, dists in runs:
        for cat, metric, value in binary.rows() + [r for d in dists for r in d.rows()]:
            key = (cat, metric)
            if key not in rows:
                rows[key] = []
                order.append(key)
            rows[key].append(value)
    return [
        {
            "category": cat,
            "metric": metric,
            "mean": float(np.mean(rows[(cat, metric)])),
            "std": float(np.std(rows[(cat, metric)])),
            "n_runs": len(rows[(cat, metric)]),
        }
        for cat, metric in order
    ]


def write_report_csv(path: str, summary: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "metric", "mean", "std", "n_runs"])
        for row in summary:
            writer.writerow([row["category"], row["metric"], repr(row["mean"]), repr(row["std"]), row["n_runs"]])
