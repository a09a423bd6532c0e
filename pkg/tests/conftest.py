import numpy as np
import pytest

from directranker.letor import Dataset
from directranker.model import DirectRanker


def random_model(rng, input_dim=None, tau="identity"):
    input_dim = input_dim or int(rng.integers(1, 6))
    sizes = [int(s) for s in rng.integers(1, 6, size=int(rng.integers(1, 3)))]
    return DirectRanker.init(input_dim, sizes, rng, "tanh", tau)


def central_difference(loss, params, step=1e-5):
    """Numerical gradient of ``loss()`` w.r.t. every entry of every array in ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss()
            flat[i] = orig - step
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def toy_letor(rng, n_queries=30, docs=(5, 15), dim=6, noise=0.3):
    """Queries whose grade is a noisy monotone function of a hidden linear score."""
    direction = rng.normal(size=dim)
    X, g, q = [], [], []
    for qid in range(1, n_queries + 1):
        n = int(rng.integers(*docs))
        x = rng.normal(size=(n, dim))
        latent = x @ direction + noise * rng.normal(size=n)
        grades = np.digitize(latent, np.quantile(latent, [0.5, 0.8]))
        X.append(x)
        g.append(grades)
        q.append(np.full(n, qid))
    return Dataset(np.concatenate(X), np.concatenate(g), np.concatenate(q))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
