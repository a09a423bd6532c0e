"""Pair construction, the two pairwise costs, and the minibatch training loop."""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import DirectRanker, tau, tau_grad
from .net import AdamState, GradientTape, NonFiniteError, adam_step

logger = logging.getLogger(__name__)

COSTS = ("cross_entropy", "squared")
PAIRINGS = ("adjacent", "all_different")


@dataclass(frozen=True)
class TrainPair:
    high: int  # row index into the dataset
    low: int
    grade_gap: int
    high_grade: int


@dataclass
class TrainConfig:
    hidden_sizes: list = field(default_factory=lambda: [64])
    activation: str = "tanh"
    tau: str = "identity"
    cost: str = "cross_entropy"
    pairing: str = "adjacent"
    epochs: int = 30
    batch_size: int = 128
    pairs_per_query: int = 200
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    early_stop_tol: float = 1e-6

    def __post_init__(self):
        self.hidden_sizes = [int(h) for h in self.hidden_sizes]
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a non-empty list of positive integers")
        if self.cost not in COSTS:
            raise ValueError(f"cost must be one of {COSTS}")
        if self.pairing not in PAIRINGS:
            raise ValueError(f"pairing must be one of {PAIRINGS}")
        if self.batch_size < 1 or self.pairs_per_query < 1 or self.epochs < 0:
            raise ValueError("batch_size and pairs_per_query must be >= 1, epochs >= 0")


# ---------------------------------------------------------------- pairs


def _blocks(grades, rows, pairing):
    """(high rows, low rows) blocks of one query under the pairing rule."""
    g = grades[rows]
    present = np.unique(g)[::-1]
    by_grade = {int(v): rows[g == v] for v in present}
    present = [int(v) for v in present]
    if pairing == "adjacent":
        combos = list(zip(present, present[1:]))
    else:
        combos = [(a, b) for i, a in enumerate(present) for b in present[i + 1:]]
    return [(a, b, by_grade[a], by_grade[b]) for a, b in combos]


def build_pairs(dataset, pairing="adjacent", rng=None):
    """Enumerate every training pair of ``dataset`` (within queries), shuffled if ``rng`` is given."""
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}")
    pairs = []
    for rows in dataset.queries.values():
        for a, b, hi, lo in _blocks(dataset.grades, rows, pairing):
            pairs.extend(TrainPair(int(h), int(l), a - b, a) for h in hi for l in lo)
    if not pairs:
        warnings.warn("dataset has no query with two distinct grades; no training pairs", RuntimeWarning)
    if rng is not None:
        order = rng.permutation(len(pairs))
        pairs = [pairs[i] for i in order]
    yield from pairs


class PairSampler:
    """Draws up to ``budget`` pairs per query per epoch without enumerating them."""

    def __init__(self, dataset, pairing, budget):
        self.budget = budget
        self.queries = []
        for rows in dataset.queries.values():
            blocks = _blocks(dataset.grades, rows, pairing)
            if blocks:
                sizes = np.array([len(h) * len(l) for _, _, h, l in blocks], dtype=np.int64)
                self.queries.append((blocks, sizes))
        if not self.queries:
            warnings.warn("dataset has no query with two distinct grades; no training pairs", RuntimeWarning)

    def sample(self, rng):
        """Return ``(high rows, low rows, high grades)`` arrays for one epoch."""
        his, los, gs = [], [], []
        for blocks, sizes in self.queries:
            total = int(sizes.sum())
            if total <= self.budget:
                for a, _, h, l in blocks:
                    his.append(np.repeat(h, len(l)))
                    los.append(np.tile(l, len(h)))
                    gs.append(np.full(len(h) * len(l), a))
            else:
                counts = rng.multinomial(self.budget, sizes / total)
                for (a, _, h, l), c in zip(blocks, counts):
                    if c:
                        his.append(h[rng.integers(0, len(h), c)])
                        los.append(l[rng.integers(0, len(l), c)])
                        gs.append(np.full(c, a))
        if not his:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        hi, lo, g = np.concatenate(his), np.concatenate(los), np.concatenate(gs)
        order = rng.permutation(len(hi))
        return hi[order], lo[order], g[order]


# ---------------------------------------------------------------- costs


def cost_squared(o1, high_grade):
    """``high_grade * (1 - o1)**2`` and its derivative in ``o1``."""
    o1 = np.asarray(o1, dtype=np.float64)
    diff = 1.0 - o1
    return high_grade * diff * diff, -2.0 * high_grade * diff


def cost_cross_entropy(delta):
    """``ln(1 + exp(-delta))`` and its derivative, for target probability 1."""
    delta = np.asarray(delta, dtype=np.float64)
    cost = np.logaddexp(0.0, -delta)
    e = np.exp(-np.abs(delta))
    # -1/(1+exp(delta)), written to avoid overflow on either side
    grad = np.where(delta >= 0, -e / (1.0 + e), -1.0 / (1.0 + e))
    return cost, grad


# ---------------------------------------------------------------- training


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # (epoch, mean_cost, wall_seconds)

    def to_csv(self) -> str:
        lines = ["epoch,mean_cost,wall_seconds"]
        lines += [f"{e},{c:.17g},{w:.6f}" for e, c, w in self.epochs]
        return "\n".join(lines) + "\n"


def pair_loss_and_grads(model: DirectRanker, Xh, Xl, high_grade, cost="cross_entropy", tape=None, target=1.0):
    """Mean pairwise loss over a batch and its gradient w.r.t. every parameter.

    Both documents of each pair run through the same feature net; the head sees
    ``f(first) - f(second)``, so the first branch backpropagates with ``+w`` and
    the second with ``-w`` into one shared tape. ``target=-1`` means the second
    document is the more relevant one.
    """
    params = model.parameters()
    if tape is None:
        tape = GradientTape.like(params)
    net, head = model.feature_net, model.head
    fh, cache_h = net.forward(Xh)
    fl, cache_l = net.forward(Xl)
    diff = fh - fl
    s = diff @ head.w
    n = len(s)
    if cost == "squared":
        o1 = tau(s, head.tau)
        c, dc_do = cost_squared(target * o1, np.asarray(high_grade, dtype=np.float64))
        ds = target * dc_do * tau_grad(s, head.tau)
    elif cost == "cross_entropy":
        c, dc = cost_cross_entropy(target * s)
        ds = target * dc
    else:
        raise ValueError(f"unknown cost {cost!r}")
    loss = float(c.sum() / n)
    ds = ds / n
    tape.grads[-1] += diff.T @ ds
    df = np.outer(ds, head.w)
    net.backward(cache_h, df, tape)
    net.backward(cache_l, -df, tape)
    return loss, tape


def train(dataset, config: TrainConfig, model: DirectRanker | None = None, debug_pairs=False):
    """Fit a DirectRanker on ``dataset``; returns ``(model, TrainLog)``.

    Pairs are re-sampled every epoch from the seeded generator, so a given
    ``(dataset, config)`` always yields the same parameters.
    """
    init_rng, pair_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    if model is None:
        model = DirectRanker.init(
            dataset.feature_dim, config.hidden_sizes, init_rng, config.activation, config.tau
        )
    elif model.input_dim != dataset.feature_dim:
        raise ValueError("model input dimension does not match the dataset")
    sampler = PairSampler(dataset, config.pairing, config.pairs_per_query)
    params = model.parameters()
    tape = GradientTape.like(params)
    state = AdamState(config.lr, config.beta1, config.beta2, config.epsilon)
    log = TrainLog()
    start = time.perf_counter()
    prev = None
    for epoch in range(1, config.epochs + 1):
        hi, lo, g = sampler.sample(pair_rng)
        if len(hi) == 0:
            break
        if debug_pairs:
            assert np.all(dataset.grades[hi] > dataset.grades[lo])
        total = 0.0
        for b, i in enumerate(range(0, len(hi), config.batch_size)):
            sl = slice(i, i + config.batch_size)
            tape.zero()
            loss, _ = pair_loss_and_grads(
                model, dataset.X[hi[sl]], dataset.X[lo[sl]], g[sl], config.cost, tape
            )
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite loss in epoch {epoch}, batch {b}")
            adam_step(params, tape.grads, state)
            total += loss * len(hi[sl])
        mean_cost = total / len(hi)
        log.epochs.append((epoch, mean_cost, time.perf_counter() - start))
        logger.debug("epoch %d mean cost %.6g", epoch, mean_cost)
        if prev is not None and prev - mean_cost < config.early_stop_tol:
            break
        prev = mean_cost
    return model, log
