"""Experiment protocols: LETOR grid search with nested CV, the synthetic NDCG@20
protocol and its parameter sweeps, and class-boundary detection from
successive-pair outputs."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .letor import Dataset, apply_normalizer, binarize, fit_normalizer
from .metrics import EmptyReportError, evaluate, mean_metric, ndcg_at_k, parse_metric
from .model import order_by_scores, tau
from .synthetic import SyntheticConfig, add_label_noise, generate
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("n_classes", "n_features", "train_size", "noise_sigma")

DEFAULT_SWEEP_VALUES = {
    "n_classes": [2, 3, 5, 7, 10],
    "n_features": [10, 30, 70, 100],
    "train_size": [1_000, 10_000, 100_000],
    "noise_sigma": [0.0, 0.25, 0.5, 0.75, 1.0],
}

DEFAULT_LETOR_GRID = {
    "hidden_sizes": [[64], [128, 64]],
    "lr": [1e-3, 1e-4],
    "epochs": [20, 50],
    "batch_size": [64, 128],
    "cost": ["cross_entropy"],
}


def _child_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


# ---------------------------------------------------------------- grid search


class GridSpec:
    """Named hyperparameters -> candidate values; points expand in listed order."""

    def __init__(self, values: dict):
        if not values:
            raise ValueError("grid is empty")
        known = {f.name for f in fields(TrainConfig)}
        for name, vals in values.items():
            if name not in known:
                raise ValueError(f"unknown hyperparameter {name!r}")
            if not list(vals):
                raise ValueError(f"grid parameter {name!r} has no candidate values")
        self.values = {k: list(v) for k, v in values.items()}

    def points(self) -> list[dict]:
        names = list(self.values)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.values.values())]

    def __len__(self):
        return len(self.points())


def _training_view(ds: Dataset, threshold):
    return binarize(ds, threshold) if threshold else ds


def _score_point(train_ds, valid_ds, config, metric, threshold):
    model, _ = train(_training_view(train_ds, threshold), config)
    report = evaluate(valid_ds, model.scores(valid_ds.X), [metric], map_threshold=threshold or 1)
    return report.value(metric)


def internal_cv_score(train_ds: Dataset, config: TrainConfig, metric, n_folds=5, threshold=None, seed=0):
    """Mean validation metric of ``config`` over query-level folds of a training split."""
    qids = np.array(list(train_ds.queries))
    rng = np.random.default_rng(seed)
    parts = np.array_split(qids[rng.permutation(len(qids))], n_folds)
    vals = []
    for i in range(n_folds):
        valid_q = parts[i]
        fit_q = np.concatenate([parts[j] for j in range(n_folds) if j != i])
        if len(valid_q) == 0 or len(fit_q) == 0:
            continue
        try:
            vals.append(
                _score_point(
                    train_ds.select_queries(fit_q.tolist()),
                    train_ds.select_queries(valid_q.tolist()),
                    config,
                    metric,
                    threshold,
                )
            )
        except EmptyReportError:
            logger.warning("internal fold %d: metric undefined on every query", i)
    return float(np.mean(vals)) if vals else float("-inf")


@dataclass
class FoldResult:
    fold: int
    best_config: TrainConfig
    grid_scores: list  # internal CV score per grid point (empty for a single-point grid)
    report: object  # MetricReport on the outer test split, or None if undefined
    flagged: bool = False


@dataclass
class GridSearchResult:
    metric: str
    folds: list
    summary: dict = field(default_factory=dict)  # metric name -> MeanValue across folds

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "metric", "k", "mean", "stderr", "n_used", "n_excluded"])
        for fr in self.folds:
            if fr.report is None:
                continue
            for name, used in fr.report.n_queries_used.items():
                m, k = parse_metric(name)
                agg = fr.report.map_value if m == "map" else fr.report.ndcg_at[k]
                w.writerow([fr.fold, m, k or "", repr(agg.mean), repr(agg.stderr), used,
                            fr.report.n_queries_excluded[name]])
        for name, agg in self.summary.items():
            m, k = parse_metric(name)
            w.writerow(["all", m, k or "", repr(agg.mean), repr(agg.stderr), agg.count, 0])
        return buf.getvalue()


def select_config(train_ds, grid: GridSpec, base: TrainConfig, metric, n_folds=5, threshold=None, seed=0):
    """Pick the grid point with the best internal-CV score; first listed wins ties.

    Only the outer training split is ever passed in here.
    """
    points = grid.points()
    configs = [replace(base, **p) for p in points]
    if len(configs) == 1:
        return configs[0], []
    scores = [internal_cv_score(train_ds, c, metric, n_folds, threshold, seed) for c in configs]
    best = int(np.argmax(scores))  # argmax returns the first maximum
    return configs[best], scores


def train_and_evaluate(train_ds, test_ds, config, threshold=None, metrics=("ndcg@10", "map")):
    model, log = train(_training_view(train_ds, threshold), config)
    report = evaluate(test_ds, model.scores(test_ds.X), metrics, map_threshold=threshold or 1)
    return model, report


def grid_search(
    folds,
    grid: GridSpec,
    base: TrainConfig | None = None,
    metric="ndcg@10",
    n_inner_folds=5,
    threshold=None,
    report_metrics=("ndcg@10", "map"),
    seed=0,
) -> GridSearchResult:
    """Nested cross-validation over predefined ``(train, test)`` folds.

    Each outer training split is searched by internal CV, the winner is
    retrained on the whole training split and scored once on the test split.
    ``threshold`` binarizes training labels (and MAP); NDCG is computed on the
    original test grades.
    """
    base = base or TrainConfig()
    parse_metric(metric)
    results = []
    for i, (train_ds, test_ds) in enumerate(folds, start=1):
        best, scores = select_config(train_ds, grid, base, metric, n_inner_folds, threshold, seed + i)
        try:
            _, report = train_and_evaluate(train_ds, test_ds, best, threshold, report_metrics)
            flagged = False
        except EmptyReportError:
            report, flagged = None, True
            logger.warning("fold %d: metric undefined on every test query", i)
        results.append(FoldResult(i, best, scores, report, flagged))
    out = GridSearchResult(metric, results)
    for name in report_metrics:
        vals = [fr.report.value(name) for fr in results if fr.report is not None]
        if vals:
            out.summary[name] = mean_metric(vals)
    return out


# ---------------------------------------------------------------- synthetic protocol


@dataclass
class SyntheticProtocolConfig:
    subset_min: int = 50
    subset_max: int = 150
    k: int = 20
    n_subsets: int = 50
    n_repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.subset_min <= self.subset_max:
            raise ValueError("need 1 <= subset_min <= subset_max")
        if self.n_subsets < 1 or self.n_repeats < 1:
            raise ValueError("n_subsets and n_repeats must be positive")


def synthetic_train_config(syn: SyntheticConfig, **overrides) -> TrainConfig:
    """Default synthetic topology: a 70-unit layer, then one unit per relevance class."""
    cfg = dict(
        hidden_sizes=[70, syn.n_classes],
        cost="squared",
        pairing="adjacent",
        epochs=10,
        batch_size=128,
        pairs_per_query=syn.train_size,
    )
    cfg.update(overrides)
    return TrainConfig(**cfg)


def evaluate_subsets(scores, labels, protocol: SyntheticProtocolConfig, rng) -> float:
    """Average NDCG@k over random test subsets sorted by ``scores``.

    Subsets whose labels are all equal have no defined NDCG and are redrawn.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    if np.all(labels == labels[0]):
        raise ValueError("test labels are all identical; NDCG is undefined")
    vals = []
    while len(vals) < protocol.n_subsets:
        size = int(rng.integers(protocol.subset_min, protocol.subset_max + 1))
        idx = rng.choice(n, size=min(size, n), replace=False)
        rel = labels[idx]
        if np.all(rel == rel[0]):
            continue
        vals.append(ndcg_at_k(rel[order_by_scores(scores[idx])], protocol.k))
    return float(np.mean(vals))


@dataclass
class ProtocolPoint:
    mu: float
    stderr: float
    repeat_means: list
    seconds: float


def run_synthetic_protocol(
    syn: SyntheticConfig,
    train_config: TrainConfig | None = None,
    protocol: SyntheticProtocolConfig | None = None,
) -> ProtocolPoint:
    """Generate, train, evaluate on random subsets; repeat and average.

    Label noise (``syn.noise_sigma``) corrupts the training labels only; the
    test subsets are scored against the clean labels. ``syn.seed`` is ignored:
    each repeat draws its own dataset seed from ``protocol.seed``.
    """
    protocol = protocol or SyntheticProtocolConfig()
    train_config = train_config or synthetic_train_config(syn)
    start = time.perf_counter()
    means = []
    for ss in np.random.SeedSequence(protocol.seed).spawn(protocol.n_repeats):
        data_ss, noise_ss, train_ss, eval_ss = ss.spawn(4)
        train_ds, test_ds, _ = generate(replace(syn, seed=_child_seed(data_ss)))
        if syn.noise_sigma > 0:
            noisy = add_label_noise(train_ds.grades, syn.noise_sigma, syn.n_classes, np.random.default_rng(noise_ss))
            train_ds = train_ds.with_grades(noisy)
        stats = fit_normalizer(train_ds)
        train_ds, test_ds = apply_normalizer(stats, train_ds), apply_normalizer(stats, test_ds)
        model, _ = train(train_ds, replace(train_config, seed=_child_seed(train_ss)))
        means.append(evaluate_subsets(model.scores(test_ds.X), test_ds.grades, protocol, np.random.default_rng(eval_ss)))
    agg = mean_metric(means)
    return ProtocolPoint(agg.mean, agg.stderr, means, time.perf_counter() - start)


@dataclass
class ExperimentReport:
    variable: str
    values: list
    points: list
    seed: int
    seconds: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable", "value", "mu", "stderr", "n_repeats", "seed"])
        for v, p in zip(self.values, self.points):
            w.writerow([self.variable, v, repr(p.mu), repr(p.stderr), len(p.repeat_means), self.seed])
        return buf.getvalue()


def sweep(variable, values, base: SyntheticConfig | None = None, protocol=None, **train_overrides) -> ExperimentReport:
    """One protocol point per value of ``variable``, all other parameters fixed."""
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}")
    values = list(values)
    if not values:
        raise ValueError("no sweep values")
    base = base or SyntheticConfig()
    protocol = protocol or SyntheticProtocolConfig()
    start = time.perf_counter()
    points = []
    for v in values:
        syn = replace(base, **{variable: v})
        point = run_synthetic_protocol(syn, synthetic_train_config(syn, **train_overrides), protocol)
        logger.info("%s=%s: mu=%.4f +- %.4f", variable, v, point.mu, point.stderr)
        points.append(point)
    return ExperimentReport(variable, values, points, protocol.seed, time.perf_counter() - start)


# ---------------------------------------------------------------- boundary peaks


def successive_pair_outputs(model, docs, return_order=False):
    """Sort ``docs`` by the model and return r(d_n, d_{n+1}) for each neighbour pair."""
    docs = list(docs)
    if len(docs) < 2:
        raise ValueError("need at least two documents")
    s = np.array([model.score(d) for d in docs])
    order = order_by_scores(s)
    outputs = tau(s[order[:-1]] - s[order[1:]], model.head.tau)
    return (outputs, order) if return_order else outputs


def detect_boundaries(outputs, expected_k=None) -> list[int]:
    """Positions ``i`` where a class boundary lies between sorted docs ``i`` and ``i+1``.

    With ``expected_k`` classes, the ``k-1`` largest outputs are taken (ties go
    to the smaller index). Otherwise every output above mean + 2 std counts.
    """
    out = np.asarray(outputs, dtype=np.float64)
    if out.size == 0:
        raise ValueError("no outputs")
    if expected_k is not None:
        m = max(int(expected_k) - 1, 0)
        order = np.lexsort((np.arange(out.size), -out))
        return sorted(order[:m].tolist())
    threshold = out.mean() + 2.0 * out.std()
    return np.flatnonzero(out > threshold).tolist()


def true_boundaries(sorted_labels) -> list[int]:
    """Where classes change in a list ideally ordered by descending label:
    the cumulative class counts from the top, minus one."""
    labels = np.asarray(sorted_labels)
    counts = [int(np.sum(labels == c)) for c in sorted(np.unique(labels), reverse=True)]
    return (np.cumsum(counts)[:-1] - 1).tolist()


def boundaries_match(detected, truth, tolerance=2) -> bool:
    if len(detected) != len(truth):
        return False
    return all(abs(d - t) <= tolerance for d, t in zip(sorted(detected), sorted(truth)))


@dataclass
class PeakRun:
    outputs: np.ndarray
    sorted_labels: np.ndarray
    detected: list
    truth: list
    matched: bool


def run_peak_experiment(seed, n_classes=3, n_features=10, list_size=100, train_size=3000,
                        std_range=(1.0, 5.0), expected_k=True) -> PeakRun:
    """Train on well separated synthetic classes and locate boundaries in a sorted test list."""
    syn = SyntheticConfig(n_classes=n_classes, n_features=n_features, train_size=train_size,
                          test_size=max(list_size, n_classes), std_range=std_range, seed=seed)
    train_ds, test_ds, _ = generate(syn)
    stats = fit_normalizer(train_ds)
    train_ds, test_ds = apply_normalizer(stats, train_ds), apply_normalizer(stats, test_ds)
    model, _ = train(train_ds, synthetic_train_config(syn, seed=seed, epochs=10))
    docs = test_ds.X[:list_size]
    outputs, order = successive_pair_outputs(model, docs, return_order=True)
    labels = test_ds.grades[:list_size][order]
    detected = detect_boundaries(outputs, n_classes if expected_k else None)
    truth = true_boundaries(labels)
    return PeakRun(outputs, labels, detected, truth, boundaries_match(detected, truth))
