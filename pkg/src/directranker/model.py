"""The DirectRanker: a shared feature net followed by a bias-free antisymmetric head.

``r(x, y) = tau(g(x) - g(y))`` with ``g(x) = w . f(x)``. Every pairwise output is
computed from the two scalar scores, so reflexivity and antisymmetry hold
bit-exactly in floating point and sorting by ``g`` realises the order.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .net import FeatureNet, _floats, _fmt, dump_layers, parse_layer

TAUS = ("identity", "tanh_half")
FORMAT_VERSION = "directranker-model v1"


def tau(s, kind="identity"):
    """Odd, sign-conserving output activation."""
    if kind == "identity":
        return s
    if kind == "tanh_half":
        # symmetric by construction, independent of the libm tanh implementation
        return np.copysign(np.tanh(np.abs(s) * 0.5), s)
    raise ValueError(f"unknown tau {kind!r}")


def tau_grad(s, kind="identity"):
    if kind == "identity":
        return np.ones_like(s)
    t = np.tanh(np.asarray(s) * 0.5)
    return 0.5 * (1.0 - t * t)


@dataclass
class OutputHead:
    """Single output neuron on ``f(x) - f(y)``. There is deliberately no bias field."""

    w: np.ndarray
    tau: str = "identity"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ValueError("head weights must be a vector")
        if self.tau not in TAUS:
            raise ValueError(f"unknown tau {self.tau!r}")


class DirectRanker:
    def __init__(self, feature_net: FeatureNet, head: OutputHead):
        if head.w.shape[0] != feature_net.output_dim:
            raise ValueError(
                f"head has {head.w.shape[0]} weights but the feature net emits {feature_net.output_dim}"
            )
        self.feature_net = feature_net
        self.head = head

    @classmethod
    def init(cls, input_dim, hidden_sizes, rng, activations="tanh", tau="identity"):
        net = FeatureNet.init(input_dim, hidden_sizes, rng, activations)
        n = net.output_dim
        limit = np.sqrt(6.0 / (n + 1))
        return cls(net, OutputHead(rng.uniform(-limit, limit, size=n), tau))

    @property
    def input_dim(self) -> int:
        return self.feature_net.input_dim

    def parameters(self):
        return self.feature_net.parameters() + [self.head.w]

    def copy(self) -> "DirectRanker":
        return DirectRanker(self.feature_net.copy(), OutputHead(self.head.w.copy(), self.head.tau))

    def score(self, x) -> float:
        """g(x) for a single document."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("score takes one feature vector; use scores() for batches")
        return float(self.feature_net(x) @ self.head.w)

    def scores(self, X) -> np.ndarray:
        """g for every row of ``X`` (batched; used for bulk evaluation)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("scores expects a 2-d (n_docs, n_features) array")
        if len(X) == 0:
            return np.zeros(0)
        return self.feature_net(X) @ self.head.w

    def rank_pair(self, x, y) -> float:
        """r(x, y); ``x`` ranks at least as high as ``y`` iff the result is >= 0."""
        return float(tau(self.score(x) - self.score(y), self.head.tau))

    def sort_documents(self, docs) -> list[int]:
        """Indices of ``docs`` by descending score, ties kept in input order."""
        docs = list(docs)
        if not docs:
            raise ValueError("cannot sort an empty document list")
        s = np.array([self.score(d) for d in docs])
        return order_by_scores(s).tolist()


def order_by_scores(scores) -> np.ndarray:
    """Descending order, ties broken by ascending index."""
    s = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(s)), -s))


# ---------------------------------------------------------------- model files


def dump_model(model: DirectRanker, normalizer=None) -> str:
    lines = [FORMAT_VERSION]
    lines += dump_layers(model.feature_net)
    lines.append(f"head {model.head.w.shape[0]} {model.head.tau}")
    lines.append(_fmt(model.head.w))
    if normalizer is not None:
        lines.append(f"norm {normalizer.mean.shape[0]}")
        lines.append(_fmt(normalizer.mean))
        lines.append(_fmt(normalizer.std))
    return "\n".join(lines) + "\n"


def parse_model(text: str):
    """Return ``(model, normalizer or None)``."""
    from .letor import NormalizationStats

    lines = iter(l for l in text.splitlines() if l.strip())
    version = next(lines, "").strip()
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {version!r}")
    layers, head, normalizer = [], None, None
    for header in lines:
        kind = header.split()[0]
        if kind == "layer":
            layers.append(parse_layer(header, lines))
        elif kind == "head":
            _, n, kind_tau = header.split()
            head = OutputHead(_floats(next(lines), int(n), "head weights"), kind_tau)
        elif kind == "norm":
            d = int(header.split()[1])
            mean = _floats(next(lines), d, "norm mean")
            std = _floats(next(lines), d, "norm std")
            normalizer = NormalizationStats(mean, std)
        else:
            raise ValueError(f"unknown record {header!r}")
    if head is None:
        raise ValueError("model file has no head record")
    return DirectRanker(FeatureNet(layers), head), normalizer


def save_model(path, model, normalizer=None):
    Path(path).write_text(dump_model(model, normalizer))


def load_model(path):
    return parse_model(Path(path).read_text())
