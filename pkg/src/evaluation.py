"""
Top-k scoring and cross-validation aggregation.
"""

import json
import logging
import math
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .errors import InsufficientFolds, ResultsParseError, ShapeMismatch
from .imagecore import PathLike
from .models import BenchmarkReport, FoldResult, ResultRow

logger = logging.getLogger(__name__)


def top_k_accuracy(probabilities: np.ndarray, labels: Sequence[int], k: int) -> float:
    """
    Fraction of items whose label ranks within the k highest probabilities.

    Equal probabilities rank the lower class index first.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ShapeMismatch(
            f"{probs.shape} probabilities do not match {labels.shape[0]} labels"
        )
    if k < 1:
        raise ValueError("k must be at least 1")
    if probs.shape[0] == 0:
        return 0.0
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ShapeMismatch("label outside the class range")
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("each row must be a probability distribution")

    order = np.argsort(-probs, axis=1, kind="stable")
    ranks = np.argmax(order == labels[:, np.newaxis], axis=1)
    return float(np.mean(ranks < k))


def score_fold(
    probabilities: np.ndarray, labels: Sequence[int], fold_index: int
) -> FoldResult:
    return FoldResult(
        fold_index=fold_index,
        top1=top_k_accuracy(probabilities, labels, 1),
        top5=top_k_accuracy(probabilities, labels, 5),
        item_count=len(labels),
    )


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Arithmetic mean and sample (n - 1) standard deviation."""
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
    return mean, std


def aggregate(fold_results: Iterable[FoldResult], scheme: str = "") -> BenchmarkReport:
    folds = sorted(fold_results, key=lambda f: f.fold_index)
    if len(folds) < 2:
        raise InsufficientFolds(f"need at least 2 folds, got {len(folds)}")
    top1_mean, top1_std = _mean_std([f.top1 for f in folds])
    top5_mean, top5_std = _mean_std([f.top5 for f in folds])
    return BenchmarkReport(
        scheme=scheme,
        folds=folds,
        top1_mean=top1_mean,
        top1_std=top1_std,
        top5_mean=top5_mean,
        top5_std=top5_std,
    )


def format_mean_std(mean: float, std: float) -> str:
    """Fractions rendered as percentages, e.g. ``61.95 ± 1.01%``."""
    return f"{mean * 100:.2f} ± {std * 100:.2f}%"


def improvement(
    report: BenchmarkReport, baseline: Optional[BenchmarkReport]
) -> Optional[Tuple[float, float]]:
    """Top-1 and Top-5 change versus the baseline, in percentage points."""
    if baseline is None or report.scheme == baseline.scheme:
        return None
    return (
        (report.top1_mean - baseline.top1_mean) * 100,
        (report.top5_mean - baseline.top5_mean) * 100,
    )


def read_results(path: PathLike) -> List[ResultRow]:
    """Parse a JSON-lines results file; blank lines are ignored."""
    rows = []
    with open(path, "rb") as fh:
        for number, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ResultsParseError(number, f"not valid UTF-8: {e.reason}") from e
            if not line.strip():
                continue
            try:
                rows.append(ResultRow.model_validate(json.loads(line)))
            except (json.JSONDecodeError, ValidationError) as e:
                raise ResultsParseError(number, str(e).splitlines()[0]) from e
    return rows


def reports_from_rows(
    rows: Iterable[ResultRow],
) -> Tuple[List[BenchmarkReport], Dict[str, str]]:
    """
    Aggregate fold rows per scheme, in first-seen order.

    Returns the reports and a mapping of failed (or under-folded) schemes to
    their error message.
    """
    folds: "OrderedDict[str, Dict[int, FoldResult]]" = OrderedDict()
    failures: Dict[str, str] = {}
    for row in rows:
        if row.status != "ok":
            failures[row.scheme] = row.error or "failed"
            continue
        # a re-run fold replaces the earlier row
        folds.setdefault(row.scheme, {})[row.fold or 0] = row.to_fold_result()

    reports = []
    for scheme, by_fold in folds.items():
        if scheme in failures:
            continue
        try:
            reports.append(aggregate(by_fold.values(), scheme))
        except InsufficientFolds as e:
            logger.warning(f"Scheme {scheme}: {e}")
            failures[scheme] = str(e)
    return reports, failures


def write_reports(reports: Iterable[BenchmarkReport], path: PathLike) -> None:
    Path(path).write_text("".join(r.summary_json() + "\n" for r in reports))
