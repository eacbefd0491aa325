import logging
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import ndcg_score

from mrag_bias.exceptions import NotApplicableError
from mrag_bias.metrics import char_3gram_recall, ndcg_at_k, precision_at_k
from mrag_bias.records import RankedList


class TestCharRecall:
    def test_identical(self):
        assert char_3gram_recall("banana", "banana") == 1.0

    def test_multiset_example(self):
        assert char_3gram_recall("ana", "banana") == pytest.approx(0.25, abs=1e-12)

    def test_disjoint(self):
        assert char_3gram_recall("xyzw", "banana") == 0.0

    def test_short_reference_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert char_3gram_recall("abc", "ab") == 0.0
        assert "shorter than 3" in caplog.text

    def test_short_generation(self):
        assert char_3gram_recall("ba", "banana") == 0.0

    def test_casefold_switch(self):
        assert char_3gram_recall("BANANA", "banana") == 0.0
        assert char_3gram_recall("BANANA", "banana", casefold=True) == 1.0

    def test_unicode_scalars(self):
        assert char_3gram_recall("Maïwenn", "Maïwenn") == 1.0
        assert char_3gram_recall("Maiwenn", "Maïwenn") == pytest.approx(2 / 5)

    @given(st.text(min_size=3, max_size=40))
    def test_self_recall_is_one(self, s):
        assert char_3gram_recall(s, s) == 1.0

    @given(st.text(alphabet="abn", max_size=20), st.text(alphabet="abn", min_size=3, max_size=20),
           st.integers(0, 17))
    def test_monotone_under_appending_reference_grams(self, gen, ref, start):
        start = start % (len(ref) - 2)
        extended = gen + " " + ref[start:start + 3]
        assert char_3gram_recall(extended, ref) >= char_3gram_recall(gen, ref)


class TestPrecision:
    def test_all_relevant(self):
        assert precision_at_k(list("abcde"), set("abcde"), 5) == 1.0

    def test_ranks_one_and_three(self):
        assert precision_at_k(list("abcde"), {"a", "c"}, 5) == pytest.approx(0.4)

    def test_short_list_padding(self):
        assert precision_at_k(list("abc"), {"a", "b"}, 5) == pytest.approx(0.4)

    def test_accepts_ranked_list(self):
        rl = RankedList("q", [("a", 2.0), ("b", 1.0)])
        assert precision_at_k(rl, {"b"}, 2) == 0.5

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            precision_at_k(["a"], {"a"}, 0)


class TestNdcg:
    def test_worked_example(self):
        expected = (1 / math.log2(3) + 1 / math.log2(4)) / (1 + 1 / math.log2(3))
        value = ndcg_at_k(["x", "r1", "r2"], {"r1", "r2"}, 3)
        assert value == pytest.approx(0.69343, abs=1e-5)
        assert value == pytest.approx(expected, abs=1e-12)
        # reference implementation (linear gain == exponential gain for binary labels)
        assert value == pytest.approx(ndcg_score([[0, 1, 1]], [[3, 2, 1]], k=3), abs=1e-12)

    def test_ideal_prefix(self):
        assert ndcg_at_k(["r1", "r2", "x"], {"r1", "r2"}, 3) == pytest.approx(1.0)

    def test_no_relevant_in_top_k(self):
        assert ndcg_at_k(["x", "y", "r"], {"r"}, 2) == 0.0

    def test_empty_judgments_is_skip_signal(self):
        with pytest.raises(NotApplicableError):
            ndcg_at_k(["x"], set(), 1)


def test_permutation_covariance():
    rng = random.Random(3)
    for _ in range(200):
        ids = [f"c{i}" for i in range(rng.randint(1, 8))]
        relevant = {c for c in ids if rng.random() < 0.4} or {ids[0]}
        k = rng.randint(1, 8)
        mapping = {c: f"z{rng.random()}" for c in ids}
        ids2 = [mapping[c] for c in ids]
        rel2 = {mapping[c] for c in relevant}
        assert precision_at_k(ids, relevant, k) == precision_at_k(ids2, rel2, k)
        assert ndcg_at_k(ids, relevant, k) == ndcg_at_k(ids2, rel2, k)
        value = ndcg_at_k(ids, relevant, k)
        assert 0.0 <= value <= 1.0 + 1e-12
        top = ids[:k]
        ideal = all(c in relevant for c in top[: min(len(relevant), k)])
        assert (abs(value - 1.0) < 1e-12) == ideal
