import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from directranker.model import DirectRanker, OutputHead, dump_model, parse_model, tau
from directranker.net import FeatureNet, Layer

from conftest import random_model


def identity_model(w, tau_kind="identity"):
    n = len(w)
    return DirectRanker(FeatureNet([Layer(np.eye(n), np.zeros(n), "identity")]), OutputHead(w, tau_kind))


def test_score_is_linear_projection_for_identity_net():
    assert identity_model([1.0, 0.0]).score([7.0, 99.0]) == 7.0


def test_zero_head_scores_zero(rng):
    m = random_model(rng, input_dim=3)
    m.head.w[:] = 0.0
    assert m.score(rng.normal(size=3)) == 0.0


def test_score_composes_forward_and_head(rng):
    m = random_model(rng, input_dim=4)
    x = rng.normal(size=4)
    assert m.score(x) == float(m.feature_net.forward(x)[0] @ m.head.w)


def test_score_dimension_mismatch(rng):
    m = random_model(rng, input_dim=4)
    with pytest.raises(ValueError):
        m.score(np.ones(3))
    with pytest.raises(ValueError):
        m.rank_pair(np.ones(4), np.ones(5))


def test_head_has_no_bias():
    head = OutputHead([1.0, 2.0])
    assert not hasattr(head, "bias") and not hasattr(head, "b")


def test_head_size_must_match_net(rng):
    with pytest.raises(ValueError):
        DirectRanker(FeatureNet.init(3, [4], rng), OutputHead(np.ones(2)))


def test_rank_pair_arithmetic():
    assert identity_model([1.0]).rank_pair([5.0], [3.0]) == 2.0


def test_sort_documents_simple():
    assert identity_model([1.0]).sort_documents([[1.0], [3.0], [2.0]]) == [1, 2, 0]


def test_sort_ties_keep_input_order(rng):
    m = random_model(rng, input_dim=2)
    x = rng.normal(size=2)
    assert m.sort_documents([x] * 5) == [0, 1, 2, 3, 4]


def test_sort_empty_rejected(rng):
    with pytest.raises(ValueError):
        random_model(rng).sort_documents([])


@pytest.mark.parametrize("seed", range(10))
def test_sorted_list_is_pairwise_consistent(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, input_dim=3)
    n = int(rng.integers(2, 101))
    docs = list(rng.normal(size=(n, 3)))
    # inject exact duplicates to exercise ties
    docs[-1] = docs[0]
    out = m.sort_documents(docs)
    for i in range(n):
        for j in range(i + 1, n):
            assert m.rank_pair(docs[out[i]], docs[out[j]]) >= 0


def test_order_properties_over_1000_random_cases():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = random_model(rng, tau=str(rng.choice(["identity", "tanh_half"])))
        x, y, z = rng.normal(scale=3.0, size=(3, m.input_dim))
        assert m.rank_pair(x, x) == 0.0
        assert m.rank_pair(x, y) == -m.rank_pair(y, x)
        if m.rank_pair(x, y) >= 0 and m.rank_pair(y, z) >= 0:
            assert m.rank_pair(x, z) >= 0


vectors = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), vectors, vectors)
def test_tau_choice_never_changes_sign_or_order(seed, x, y):
    rng = np.random.default_rng(seed)
    m = random_model(rng, input_dim=3)
    m2 = DirectRanker(m.feature_net, OutputHead(m.head.w, "tanh_half"))
    assert np.sign(m.rank_pair(x, y)) == np.sign(m2.rank_pair(x, y))
    assert m.sort_documents([x, y, x + 1]) == m2.sort_documents([x, y, x + 1])


@given(st.floats(-50, 50, allow_nan=False))
def test_tanh_half_is_odd_and_sign_conserving(s):
    assert tau(-s, "tanh_half") == -tau(s, "tanh_half")
    assert np.sign(tau(s, "tanh_half")) == np.sign(s)


def test_tanh_half_matches_ranknet_probability_map():
    # tanh(s/2) == 2 * sigmoid(s) - 1
    s = np.linspace(-10, 10, 41)
    np.testing.assert_allclose(tau(s, "tanh_half"), 2 / (1 + np.exp(-s)) - 1, atol=1e-14)


def test_model_file_round_trip(rng):
    m = random_model(rng, input_dim=4, tau="tanh_half")
    text = dump_model(m)
    assert text.splitlines()[0] == "directranker-model v1"
    m2, norm = parse_model(text)
    assert norm is None
    for a, b in zip(m.parameters(), m2.parameters()):
        assert np.array_equal(a, b)
    assert m2.head.tau == "tanh_half"
    assert dump_model(m2) == text


def test_model_file_unknown_version(rng):
    text = dump_model(random_model(rng)).replace("v1", "v9", 1)
    with pytest.raises(ValueError, match="version"):
        parse_model(text)


def test_batch_scores_agree_with_single(rng):
    m = random_model(rng, input_dim=3)
    X = rng.normal(size=(20, 3))
    np.testing.assert_allclose(m.scores(X), [m.score(x) for x in X], rtol=1e-12, atol=1e-12)
