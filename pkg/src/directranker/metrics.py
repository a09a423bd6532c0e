"""NDCG@k, precision@k, average precision and MAP.

Each per-query function takes the relevance grades in the order the model
ranked the documents. Queries on which a metric is undefined (no relevant
document) return ``None`` and are counted as excluded, never as zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import order_by_scores

_LN2 = math.log(2.0)


class EmptyReportError(ValueError):
    """No query contributed a value to an aggregate."""


def _check_k(k):
    if k < 1:
        raise ValueError(f"cutoff k must be >= 1, got {k}")


def _binary(rels):
    rels = [int(r) for r in rels]
    if any(r not in (0, 1) for r in rels):
        raise ValueError("precision and MAP need binary relevance grades")
    return rels


def dcg_at_k(rels, k: int) -> float:
    _check_k(k)
    total = 0.0
    for i, r in enumerate(list(rels)[:k], start=1):
        total += (2.0 ** int(r) - 1.0) / (math.log(i + 1) / _LN2)
    return total


def ndcg_at_k(rels, k: int):
    """DCG@k over ideal DCG@k; ``None`` if the query has no relevant document.

    Lists shorter than k are evaluated at cutoff n.
    """
    rels = list(rels)
    ideal = dcg_at_k(sorted(rels, reverse=True), k)
    if ideal == 0.0:
        return None
    return dcg_at_k(rels, k) / ideal


def precision_at_k(rels, k: int) -> float:
    _check_k(k)
    rels = _binary(rels)
    if not rels:
        raise ValueError("empty ranked list")
    k_eff = min(k, len(rels))
    return sum(rels[:k_eff]) / k_eff


def average_precision(rels):
    # exact rational sum, rounded once
    rels = _binary(rels)
    n_rel = sum(rels)
    if n_rel == 0:
        return None
    hits = 0
    total = Fraction(0)
    for i, r in enumerate(rels, start=1):
        if r:
            hits += 1
            total += Fraction(hits, i)
    return float(total / n_rel)


@dataclass
class MeanValue:
    mean: float
    stderr: float
    count: int
    stderr_defined: bool = True


def mean_metric(values) -> MeanValue:
    """Mean and standard error (sample std / sqrt(count)) of the non-None values."""
    vals = np.array([v for v in values if v is not None], dtype=np.float64)
    if vals.size == 0:
        raise EmptyReportError("no included queries to aggregate")
    mean = float(vals.mean())
    if vals.size == 1:
        return MeanValue(mean, 0.0, 1, stderr_defined=False)
    return MeanValue(mean, float(vals.std(ddof=1) / np.sqrt(vals.size)), int(vals.size))


@dataclass
class MetricReport:
    ndcg_at: dict = field(default_factory=dict)  # k -> MeanValue
    map_value: MeanValue | None = None
    per_query: dict = field(default_factory=dict)  # metric name -> {qid: value or None}
    n_queries_used: dict = field(default_factory=dict)
    n_queries_excluded: dict = field(default_factory=dict)

    def value(self, metric: str) -> float:
        name, k = parse_metric(metric)
        return self.map_value.mean if name == "map" else self.ndcg_at[k].mean


def parse_metric(text: str):
    """``'ndcg@10' -> ('ndcg', 10)``, ``'map' -> ('map', None)``."""
    t = text.strip().lower()
    if t == "map":
        return "map", None
    if t.startswith("ndcg@"):
        k = int(t[5:])
        _check_k(k)
        return "ndcg", k
    raise ValueError(f"unknown metric {text!r}; use ndcg@<k> or map")


def metric_name(name, k):
    return "map" if name == "map" else f"ndcg@{k}"


def ranked_grades(dataset, scores):
    """Yield ``(qid, grades in ranked order)`` per query."""
    for qid, rows in dataset.queries.items():
        order = order_by_scores(scores[rows])
        yield qid, dataset.grades[rows][order]


def evaluate(dataset, scores, metrics=("ndcg@10", "map"), map_threshold: int = 1) -> MetricReport:
    """Evaluate model scores on a dataset query by query.

    NDCG uses the dataset's grades as they are; MAP binarizes them at
    ``map_threshold``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    parsed = [parse_metric(m) for m in metrics]
    if not parsed:
        raise ValueError("no metrics requested")
    report = MetricReport()
    per = {metric_name(n, k): {} for n, k in parsed}
    for qid, rels in ranked_grades(dataset, scores):
        for name, k in parsed:
            if name == "map":
                v = average_precision((rels >= map_threshold).astype(int))
            else:
                v = ndcg_at_k(rels, k)
            per[metric_name(name, k)][qid] = v
    report.per_query = per
    for name, k in parsed:
        key = metric_name(name, k)
        vals = list(per[key].values())
        report.n_queries_used[key] = sum(v is not None for v in vals)
        report.n_queries_excluded[key] = sum(v is None for v in vals)
        agg = mean_metric(vals)
        if name == "map":
            report.map_value = agg
        else:
            report.ndcg_at[k] = agg
    return report
