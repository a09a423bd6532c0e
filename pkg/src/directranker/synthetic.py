"""Synthetic ranking data: one Gaussian per (relevance class, feature), plus label noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .letor import Dataset


@dataclass
class SyntheticConfig:
    n_classes: int = 5
    n_features: int = 70
    train_size: int = 100_000
    test_size: int = 10_000
    mean_range: tuple = (0.0, 100.0)
    std_range: tuple = (50.0, 100.0)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.mean_range = tuple(float(v) for v in self.mean_range)
        self.std_range = tuple(float(v) for v in self.std_range)
        if self.n_classes < 1 or self.n_features < 1:
            raise ValueError("n_classes and n_features must be positive")
        if min(self.train_size, self.test_size) < self.n_classes:
            raise ValueError("train_size and test_size must be at least n_classes")
        if self.mean_range[0] > self.mean_range[1] or self.std_range[0] > self.std_range[1]:
            raise ValueError("ranges must be (low, high)")
        if self.std_range[0] < 0 or self.noise_sigma < 0:
            raise ValueError("standard deviations must be non-negative")


@dataclass(frozen=True)
class ClassSpec:
    means: np.ndarray  # (n_classes, n_features)
    stds: np.ndarray


def draw_class_specs(config: SyntheticConfig, rng) -> ClassSpec:
    shape = (config.n_classes, config.n_features)
    means = rng.uniform(*config.mean_range, size=shape)
    stds = rng.uniform(*config.std_range, size=shape)
    return ClassSpec(means, stds)


def balanced_labels(size, n_classes):
    """``size // n_classes`` per class, the remainder going to the lowest classes."""
    base, extra = divmod(size, n_classes)
    counts = [base + (c < extra) for c in range(n_classes)]
    return np.repeat(np.arange(n_classes), counts)


def sample_split(spec: ClassSpec, size, rng, qid=1) -> Dataset:
    labels = balanced_labels(size, spec.means.shape[0])
    labels = labels[rng.permutation(size)]
    noise = rng.standard_normal((size, spec.means.shape[1]))
    X = spec.means[labels] + spec.stds[labels] * noise
    return Dataset(X, labels, np.full(size, qid))


def generate(config: SyntheticConfig):
    """Return ``(train, test, spec)``; both splits share one ``ClassSpec``.

    Labels are clean; noise is applied separately by the caller to whichever
    split it is meant to corrupt.
    """
    spec_ss, train_ss, test_ss = np.random.SeedSequence(config.seed).spawn(3)
    spec = draw_class_specs(config, np.random.default_rng(spec_ss))
    train = sample_split(spec, config.train_size, np.random.default_rng(train_ss))
    test = sample_split(spec, config.test_size, np.random.default_rng(test_ss))
    return train, test, spec


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def add_label_noise(labels, sigma, n_classes, rng):
    """Add N(0, sigma) to each label, round half away from zero, clamp into range."""
    labels = np.asarray(labels, dtype=np.int64)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return labels.copy()
    noisy = round_half_away(labels + rng.normal(0.0, sigma, size=labels.shape))
    return np.clip(noisy, 0, n_classes - 1).astype(np.int64)
