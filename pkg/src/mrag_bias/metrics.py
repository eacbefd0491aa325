"""Generation and ranking metrics: character 3-gram recall, Precision@k, NDCG@k."""

import logging
import math
from collections import Counter

from mrag_bias._validation import check_positive_int
from mrag_bias.exceptions import NotApplicableError

logger = logging.getLogger(__name__)

__all__ = [
    "char_ngrams",
    "char_3gram_recall",
    "best_reference_recall",
    "precision_at_k",
    "ndcg_at_k",
]


def char_ngrams(text, n=3, casefold=False):
    """Multiset of contiguous ``n``-character substrings (code points)."""
    if casefold:
        text = text.casefold()
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def char_3gram_recall(generated, reference, casefold=False):
    """Fraction of the reference's character 3-grams covered by ``generated``.

    Overlap is a multiset intersection, so a gram occurring twice in the
    reference needs two occurrences in the generation to be fully covered.
    A reference shorter than three characters has no grams and scores 0.
    """
    ref = char_ngrams(reference, 3, casefold)
    total = sum(ref.values())
    if total == 0:
        logger.warning("reference %r is shorter than 3 characters; recall defined as 0", reference)
        return 0.0
    gen = char_ngrams(generated, 3, casefold)
    return sum((gen & ref).values()) / total


def best_reference_recall(generated, references, casefold=False):
    """Max 3-gram recall over several acceptable gold answers."""
    if not references:
        return 0.0
    return max(char_3gram_recall(generated, ref, casefold) for ref in references)


def _ranked_ids(ranked):
    entries = getattr(ranked, "entries", ranked)
    return [e[0] if isinstance(e, (tuple, list)) else e for e in entries]


def _relevant_set(judgments):
    return set(getattr(judgments, "relevant_chunk_ids", judgments))


def precision_at_k(ranked, judgments, k):
    """Share of relevant ids in the first ``k`` positions; missing positions count as misses."""
    k = check_positive_int(k, "k")
    relevant = _relevant_set(judgments)
    ids = _ranked_ids(ranked)[:k]
    return sum(1 for cid in ids if cid in relevant) / k


def ndcg_at_k(ranked, judgments, k):
    """Binary-relevance NDCG@k with base-2 log discount.

    Raises:
        NotApplicableError: the judgment set is empty (ideal DCG is zero).
    """
    k = check_positive_int(k, "k")
    relevant = _relevant_set(judgments)
    if not relevant:
        raise NotApplicableError("NDCG undefined: no relevant documents for this query")
    ids = _ranked_ids(ranked)[:k]
    dcg = sum(1.0 / math.log2(i + 2) for i, cid in enumerate(ids) if cid in relevant)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(len(relevant), k)))
    return dcg / idcg
