import math

import mpmath
import numpy as np
import pytest

from mrag_bias.listwise import (
    ScoredList,
    ToyListwiseRanker,
    finite_difference_gradient,
    gradient_relative_error,
    listwise_loss,
    listwise_loss_gradient,
    overlap_features,
    train_toy_scorer,
)


def test_uniform_losses():
    assert listwise_loss(np.zeros(8), 0) == pytest.approx(math.log(8), abs=1e-12)
    assert listwise_loss(np.zeros(2), 1) == pytest.approx(math.log(2), abs=1e-12)


def test_large_margin_against_arbitrary_precision():
    mpmath.mp.dps = 40
    expected = float(mpmath.log(1 + 2 * mpmath.e ** -10))
    assert listwise_loss([10.0, 0.0, 0.0], 0) == pytest.approx(expected, rel=1e-10)


def test_stable_for_huge_scores():
    assert listwise_loss([1e4, 0.0], 0) == 0.0
    assert listwise_loss([0.0, 1e4], 0) == pytest.approx(1e4)


def test_gradient_uniform():
    g = listwise_loss_gradient(np.zeros(4), 2)
    np.testing.assert_allclose(g, [0.25, 0.25, -0.75, 0.25])


def test_gradient_properties_and_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(2, 10)
        s = rng.normal(0, 3, n)
        pos = int(rng.integers(0, n))
        g = listwise_loss_gradient(s, pos)
        assert abs(g.sum()) < 1e-12
        assert np.all((g > -1) & (g < 1))
        assert gradient_relative_error(s, pos) < 1e-6
        np.testing.assert_allclose(finite_difference_gradient(s, pos), g, atol=1e-8)


def test_shift_invariance_and_monotonicity():
    s = np.array([0.3, -1.2, 2.0, 0.7])
    assert listwise_loss(s + 123.4, 1) == pytest.approx(listwise_loss(s, 1), abs=1e-12)
    raised = s.copy()
    raised[1] += 0.5
    assert listwise_loss(raised, 1) < listwise_loss(s, 1)


def test_descent_with_backtracking():
    rng = np.random.default_rng(4)
    for _ in range(30):
        s = rng.normal(size=6)
        base = listwise_loss(s, 0)
        g = listwise_loss_gradient(s, 0)
        step = 1.0
        while listwise_loss(s - step * g, 0) >= base and step > 1e-12:
            step /= 2
        assert listwise_loss(s - step * g, 0) < base


def test_scored_list_validation():
    with pytest.raises(ValueError):
        ScoredList([1.0, 2.0], 2)
    with pytest.raises(ValueError):
        ScoredList([], 0)
    with pytest.raises(ValueError):
        listwise_loss([float("nan"), 1.0])


def separable_instances(n=40, k=3, seed=0):
    """Positives repeat the query; negatives use a disjoint alphabet."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        query = "".join(rng.choice(list("abcdefgh"), 12))
        pos = query[2:10] + "".join(rng.choice(list("abcdefgh"), 6))
        negs = ["".join(rng.choice(list("stuvwxyz"), 14)) for _ in range(k)]
        out.append({"query": query, "pos": [pos], "neg": negs})
    return out


def test_overlap_features_counts_shared_grams():
    f = overlap_features("banana", "xbanx", 64)
    assert f.sum() == 1  # only "ban" is shared
    assert overlap_features("abc", "xyz", 64).sum() == 0


def test_toy_trainer_separable():
    data = separable_instances()
    model = ToyListwiseRanker(epochs=40, learning_rate=0.5).fit(data)
    assert model.loss_curve_[-1] < model.loss_curve_[0]
    assert model.score(data) >= 0.95


def test_toy_trainer_zero_learning_rate_is_flat():
    model = ToyListwiseRanker(epochs=5, learning_rate=0.0).fit(separable_instances(8))
    assert max(model.loss_curve_) - min(model.loss_curve_) == 0.0


def test_toy_trainer_duplicate_dataset_same_curve():
    data = separable_instances(10)
    a = train_toy_scorer(data, epochs=10, learning_rate=0.3, seed=2)["loss_curve"]
    b = train_toy_scorer(data + data, epochs=10, learning_rate=0.3, seed=2)["loss_curve"]
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_toy_trainer_non_finite_loss_aborts():
    # contradictory instances: the optimum is w = 0, a huge step overshoots to overflow
    data = [
        {"query": "abcdef", "pos": ["abcdef"], "neg": ["zzzz"]},
        {"query": "abcdef", "pos": ["zzzz"], "neg": ["abcdef"]},
        {"query": "abcdef", "pos": ["zzzz"], "neg": ["abcdef"]},
    ]
    with pytest.raises(FloatingPointError, match="epoch"):
        ToyListwiseRanker(epochs=20, learning_rate=1e308).fit(data)


def test_estimator_params_roundtrip():
    model = ToyListwiseRanker(n_features=32)
    assert model.get_params()["n_features"] == 32
    assert model.set_params(epochs=3).epochs == 3
