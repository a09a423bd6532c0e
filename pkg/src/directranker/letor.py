"""LETOR / SVMLight-with-qid files: parsing, emitting, binarization, normalization, folds."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LETOR_MAX_GRADE = 4


class LetorFormatError(ValueError):
    pass


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    grade: int
    qid: int
    features: np.ndarray
    line_index: int


@dataclass
class Dataset:
    """Documents stored column-wise, in file order.

    ``X`` is ``(n_docs, feature_dim)``; ``grades``, ``qids`` and ``line_index``
    are aligned with its rows.
    """

    X: np.ndarray
    grades: np.ndarray
    qids: np.ndarray
    line_index: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.X), -1)
        self.grades = np.asarray(self.grades, dtype=np.int64)
        self.qids = np.asarray(self.qids, dtype=np.int64)
        if self.line_index is None:
            self.line_index = np.arange(len(self.grades))
        self.line_index = np.asarray(self.line_index, dtype=np.int64)
        n = len(self.X)
        if not (len(self.grades) == len(self.qids) == len(self.line_index) == n):
            raise ValueError("dataset columns have different lengths")
        self._groups = None

    def __len__(self):
        return len(self.grades)

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def grade_range(self):
        if len(self) == 0:
            return None
        return int(self.grades.min()), int(self.grades.max())

    @property
    def queries(self) -> dict[int, np.ndarray]:
        """qid -> row indices, qids in order of first appearance."""
        if self._groups is None:
            groups: dict[int, list] = {}
            for i, q in enumerate(self.qids.tolist()):
                groups.setdefault(q, []).append(i)
            self._groups = {q: np.array(ix, dtype=np.int64) for q, ix in groups.items()}
        return self._groups

    def documents(self):
        for i in range(len(self)):
            yield Document(int(self.grades[i]), int(self.qids[i]), self.X[i], int(self.line_index[i]))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.X[rows], self.grades[rows], self.qids[rows], self.line_index[rows])

    def select_queries(self, qids) -> "Dataset":
        groups = self.queries
        rows = [groups[q] for q in qids]
        return self.subset(np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64))

    def with_grades(self, grades) -> "Dataset":
        return Dataset(self.X, grades, self.qids, self.line_index)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.grades, self.qids, self.line_index)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.grades, other.grades)
            and np.array_equal(self.qids, other.qids)
        )


def _parse_line(line: str, lineno: int):
    body = line.split("#", 1)[0]
    toks = body.split()
    if not toks:
        return None
    if len(toks) < 2:
        raise LetorFormatError(f"line {lineno}: expected '<grade> qid:<id> ...'")
    try:
        grade = int(toks[0])
    except ValueError:
        raise LetorFormatError(f"line {lineno}: bad grade {toks[0]!r}") from None
    if not toks[1].startswith("qid:"):
        raise LetorFormatError(f"line {lineno}: second token must be qid:<int>, got {toks[1]!r}")
    try:
        qid = int(toks[1][4:])
    except ValueError:
        raise LetorFormatError(f"line {lineno}: bad qid {toks[1]!r}") from None
    idx, vals = [], []
    last = 0
    for tok in toks[2:]:
        key, sep, val = tok.partition(":")
        try:
            j = int(key)
            v = float(val)
        except ValueError:
            raise LetorFormatError(f"line {lineno}: malformed feature token {tok!r}") from None
        if not sep or j < 1:
            raise LetorFormatError(f"line {lineno}: malformed feature token {tok!r}")
        if j <= last:
            raise LetorFormatError(f"line {lineno}: feature indices must strictly increase ({j} after {last})")
        if not np.isfinite(v):
            raise LetorFormatError(f"line {lineno}: non-finite feature value {tok!r}")
        last = j
        idx.append(j)
        vals.append(v)
    return grade, qid, idx, vals


def parse_letor(stream, max_grade: int | None = LETOR_MAX_GRADE) -> Dataset:
    """Parse a LETOR text stream (file object, string or iterable of lines).

    Missing feature indices are zero-filled; ``feature_dim`` is the largest index
    seen. Pass ``max_grade=None`` to accept arbitrary non-negative grades.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = []
    dim = 0
    for lineno, line in enumerate(stream, start=1):
        parsed = _parse_line(line, lineno)
        if parsed is None:
            continue
        grade, qid, idx, vals = parsed
        if grade < 0 or (max_grade is not None and grade > max_grade):
            raise LetorFormatError(f"line {lineno}: grade {grade} outside [0, {max_grade}]")
        if idx:
            dim = max(dim, idx[-1])
        rows.append((grade, qid, idx, vals, lineno))
    X = np.zeros((len(rows), dim))
    for r, (_, _, idx, vals, _) in enumerate(rows):
        if idx:
            X[r, np.asarray(idx) - 1] = vals
    return Dataset(
        X,
        [r[0] for r in rows],
        [r[1] for r in rows],
        [r[4] for r in rows],
    )


def read_letor(path, max_grade: int | None = LETOR_MAX_GRADE) -> Dataset:
    with open(path) as fh:
        return parse_letor(fh, max_grade=max_grade)


def emit_letor(dataset: Dataset) -> str:
    out = []
    for i in range(len(dataset)):
        feats = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(dataset.X[i]))
        line = f"{dataset.grades[i]} qid:{dataset.qids[i]}"
        out.append(f"{line} {feats}" if feats else line)
    return "\n".join(out) + ("\n" if out else "")


def write_letor(path, dataset: Dataset):
    Path(path).write_text(emit_letor(dataset))


def binarize(dataset: Dataset, threshold: int) -> Dataset:
    """Grades >= threshold become 1, everything else 0."""
    if threshold < 1:
        raise ValueError("binarization threshold must be >= 1")
    return dataset.with_grades((dataset.grades >= threshold).astype(np.int64))


def drop_irrelevant_queries(dataset: Dataset) -> Dataset:
    """Remove queries without a single document of positive grade."""
    keep = [q for q, rows in dataset.queries.items() if dataset.grades[rows].max() > 0]
    return dataset.select_queries(keep)


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0.0


def fit_normalizer(train: Dataset) -> NormalizationStats:
    if len(train) == 0:
        raise ValueError("cannot fit a normalizer on an empty split")
    return NormalizationStats(train.X.mean(axis=0), train.X.std(axis=0))


def apply_normalizer(stats: NormalizationStats, dataset: Dataset) -> Dataset:
    """Shift to zero mean and scale to standard deviation 1/3; constant features become 0."""
    if dataset.feature_dim != stats.mean.shape[0]:
        raise ValueError(
            f"normalizer fitted on {stats.mean.shape[0]} features, dataset has {dataset.feature_dim}"
        )
    return dataset.with_features(normalize_features(stats, dataset.X))


def normalize_features(stats: NormalizationStats, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    scale = np.where(stats.constant, 0.0, 1.0 / (3.0 * np.where(stats.constant, 1.0, stats.std)))
    return (X - stats.mean) * scale


@dataclass(frozen=True)
class FoldSpec:
    fold_id: str
    train: Path
    test: Path
    validation: Path | None = None


def discover_folds(root) -> list[FoldSpec]:
    """Standard LETOR layout: ``root/Fold<i>/{train,vali,test}.txt``."""
    root = Path(root)
    specs = []
    for d in sorted(root.glob("Fold*")):
        if not d.is_dir():
            continue
        vali = d / "vali.txt"
        specs.append(FoldSpec(d.name, d / "train.txt", d / "test.txt", vali if vali.exists() else None))
    if not specs:
        raise FoldError(f"no Fold* directories under {root}")
    return specs


def load_folds(specs, normalize: bool = True, include_validation: bool = True, max_grade=LETOR_MAX_GRADE):
    """Load ``(train, test)`` per fold; normalization is fitted on the train split only.

    With ``include_validation`` the validation file (if any) is merged into the
    training split, since model selection happens by internal cross-validation.
    """
    out = []
    for spec in specs:
        train = read_letor(spec.train, max_grade)
        if include_validation and spec.validation is not None:
            vali = read_letor(spec.validation, max_grade)
            train = concat([train, vali])
        test = read_letor(spec.test, max_grade)
        if len(test) == 0:
            raise FoldError(f"fold {spec.fold_id}: test split is empty")
        if len(train) == 0:
            raise FoldError(f"fold {spec.fold_id}: train split is empty")
        overlap = set(train.queries) & set(test.queries)
        if overlap:
            raise FoldError(f"fold {spec.fold_id}: {len(overlap)} qids appear in both train and test")
        if normalize:
            stats = fit_normalizer(train)
            train, test = apply_normalizer(stats, train), apply_normalizer(stats, test)
        out.append((train, test))
        logger.info("fold %s: %d train / %d test documents", spec.fold_id, len(train), len(test))
    return out


def concat(datasets) -> Dataset:
    datasets = list(datasets)
    dim = max(d.feature_dim for d in datasets)
    Xs = [np.pad(d.X, ((0, 0), (0, dim - d.feature_dim))) for d in datasets]
    return Dataset(
        np.concatenate(Xs),
        np.concatenate([d.grades for d in datasets]),
        np.concatenate([d.qids for d in datasets]),
        np.concatenate([d.line_index for d in datasets]),
    )
