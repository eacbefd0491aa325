"""Answer-utility-driven training data for multilingual rerankers.

Stage 1 reranks each language group of the retrieved pool on its own, keeps
its top five, and retains the group(s) whose context yields the best mean
answer quality across generators. Stage 2 scores every retained chunk on
its own and keeps those whose mean utility clears ``theta``. Everything
else in the pool is a negative.
"""

import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from mrag_bias._validation import check_positive_int, check_unit_interval
from mrag_bias.corpus import render_chunk_text
from mrag_bias.exceptions import QueryDropped, ServiceError
from mrag_bias.pipeline import answer_all, best_with_ties, build_context, group_by_language, resolve
from mrag_bias.services import rerank, retrieve

logger = logging.getLogger(__name__)

LAURA_TOP_K = 100
PER_LANGUAGE_K = 5
THETA = 0.8
MODES = ("full", "stage1_only", "self_training")


@dataclass
class UtilityScore:
    chunk_id: str
    per_generator: dict
    mean: float = None
    error: str = None

    @classmethod
    def from_answers(cls, chunk_id, answers):
        per = {gid: a.score for gid, a in answers.items()}
        return cls(chunk_id, per, float(np.mean(list(per.values()))))


@dataclass
class BalancedCandidateSet:
    query_id: str
    by_language: dict
    group_utilities: dict
    selected_languages: list
    d_balanced: list
    doc_utilities: dict = field(default_factory=dict)


@dataclass
class LabeledQuery:
    query_id: str
    positives: list
    negatives: list
    theta: float
    stage: str
    utilities: list = field(default_factory=list)
    group_utilities: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["group_utilities"] = {k: asdict(v) if isinstance(v, UtilityScore) else v
                                for k, v in sorted(self.group_utilities.items())}
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            query_id=d["query_id"],
            positives=list(d["positives"]),
            negatives=list(d["negatives"]),
            theta=d.get("theta"),
            stage=d["stage"],
            utilities=[UtilityScore(**u) for u in d.get("utilities", [])],
            group_utilities={k: UtilityScore(**v) for k, v in d.get("group_utilities", {}).items()},
        )


@dataclass
class TrainingInstance:
    query_id: str
    query: str
    pos: str
    neg: list
    pos_id: str
    neg_ids: list

    def to_dict(self):
        """Layout consumed by common reranker fine-tuning tools: ``{"query", "pos": [..], "neg": [..]}``."""
        return {
            "query_id": self.query_id,
            "query": self.query,
            "pos": [self.pos],
            "neg": list(self.neg),
            "pos_id": self.pos_id,
            "neg_ids": list(self.neg_ids),
        }


def _evaluate(query, context, generators, casefold, prompt_template, label):
    try:
        return answer_all(query, context, generators, casefold, prompt_template)
    except ServiceError as exc:
        logger.warning("query %s: generation failed for %s: %s", query.query_id, label, exc)
        return None


def _chunk_utility(query, chunk, generators, casefold, prompt_template, cache=None):
    if cache is not None and chunk.chunk_id in cache:
        return cache[chunk.chunk_id]
    answers = _evaluate(query, render_chunk_text(chunk), generators, casefold, prompt_template, chunk.chunk_id)
    if answers is None:
        util = UtilityScore(chunk.chunk_id, {}, None, "generation failed")
    else:
        util = UtilityScore.from_answers(chunk.chunk_id, answers)
    if cache is not None:
        cache[chunk.chunk_id] = util
    return util


def stage1_select(query, pool, reranker, generators, index, per_language_k=PER_LANGUAGE_K,
                  utility="group", casefold=False, prompt_template=None):
    """Language-debiased candidate selection.

    Args:
        pool: RankedList (or list of chunk ids) of retrieved candidates.
        utility: ``"group"`` scores each language's concatenated top-k as
            one context; ``"document"`` scores every candidate chunk alone
            and keeps the chunks reaching the overall maximum.

    Raises:
        QueryDropped: generation failed for every group.
    """
    if utility not in ("group", "document"):
        raise ValueError(f"unknown stage-1 utility mode {utility!r}")
    if not generators:
        raise ValueError("stage 1 needs at least one generator")
    ids = getattr(pool, "ids", pool)
    chunks = [index[cid] for cid in ids]
    by_language = {}
    for lang, group in group_by_language(chunks).items():
        by_language[lang] = rerank(reranker, query.text, group, query.query_id).top(per_language_k).ids

    group_utilities, doc_utilities = {}, {}
    for lang, cids in by_language.items():
        if utility == "group":
            context = build_context([index[c] for c in cids])
            answers = _evaluate(query, context, generators, casefold, prompt_template, f"language group {lang}")
            if answers is not None:
                group_utilities[lang] = UtilityScore.from_answers(lang, answers)
        else:
            utils = [_chunk_utility(query, index[c], generators, casefold, prompt_template) for c in cids]
            doc_utilities.update({u.chunk_id: u for u in utils})
            scored = [u.mean for u in utils if u.mean is not None]
            if scored:
                group_utilities[lang] = UtilityScore(lang, {}, max(scored))
    if not group_utilities:
        raise QueryDropped(query.query_id, "stage 1: generation failed for every language group")

    best, selected = best_with_ties({lang: u.mean for lang, u in group_utilities.items()})
    if utility == "group":
        d_balanced = [c for lang in by_language if lang in selected for c in by_language[lang]]
    else:
        d_balanced = [c for lang in by_language if lang in selected for c in by_language[lang]
                      if doc_utilities[c].mean is not None and best - doc_utilities[c].mean <= 1e-12]
    return BalancedCandidateSet(query.query_id, by_language, group_utilities, selected, d_balanced, doc_utilities)


def stage2_filter(query, d_balanced, pool_ids, generators, index, theta=THETA, inclusive=True,
                  casefold=False, prompt_template=None, cache=None):
    """Keep chunks of ``d_balanced`` whose own mean utility reaches ``theta``.

    Negatives are every pool chunk that is not a positive. Chunks whose
    generation fails count as negatives.

    Raises:
        QueryDropped: no chunk clears the threshold.
    """
    theta = check_unit_interval(theta, "theta")
    if not d_balanced:
        raise QueryDropped(query.query_id, "stage 2: empty candidate set")
    utilities = [_chunk_utility(query, index[c], generators, casefold, prompt_template, cache) for c in d_balanced]
    passes = (lambda m: m >= theta) if inclusive else (lambda m: m > theta)
    positives = [u.chunk_id for u in utilities if u.mean is not None and passes(u.mean)]
    if not positives:
        raise QueryDropped(query.query_id, f"stage 2: no candidate reaches theta={theta}")
    pos = set(positives)
    negatives = [c for c in pool_ids if c not in pos]
    return LabeledQuery(query.query_id, positives, negatives, theta, "full", utilities)


def stage1_only_label(candidates, pool_ids):
    """Ablation: the whole balanced candidate set becomes the positive set."""
    pos = set(candidates.d_balanced)
    return LabeledQuery(
        candidates.query_id,
        list(candidates.d_balanced),
        [c for c in pool_ids if c not in pos],
        None,
        "stage1_only",
        list(candidates.doc_utilities.values()),
        dict(candidates.group_utilities),
    )


def self_training_label(query_id, reranked_top, pool_ids, top_k=PER_LANGUAGE_K):
    """Reranker's own top-k as positives, the rest of the pool as negatives."""
    ids = list(getattr(reranked_top, "ids", reranked_top))
    if not ids:
        raise ValueError("self-training labels need a non-empty reranked list")
    positives = ids[:top_k]
    pos = set(positives)
    return LabeledQuery(query_id, positives, [c for c in pool_ids if c not in pos], None, "self_training")


def label_query(query, retriever, reranker, generators, index, mode="full", theta=THETA,
                retrieval_top_k=LAURA_TOP_K, per_language_k=PER_LANGUAGE_K, stage1_utility="group",
                inclusive=True, casefold=False, prompt_template=None):
    """Retrieve the pool for ``query`` and label it under ``mode``.

    Raises:
        QueryDropped: the query yields no positives (or generation failed everywhere).
        ServiceError: retrieval or reranking failed after retries.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    retrieved = retrieve(retriever, query.text, retrieval_top_k, query.query_id)
    if not retrieved.entries:
        raise QueryDropped(query.query_id, "empty retrieval")
    resolve(index, retrieved, retriever.name)
    pool_ids = retrieved.ids
    if mode == "self_training":
        ranked = rerank(reranker, query.text, [index[c] for c in pool_ids], query.query_id)
        return self_training_label(query.query_id, ranked, pool_ids, per_language_k)
    candidates = stage1_select(query, retrieved, reranker, generators, index, per_language_k,
                               stage1_utility, casefold, prompt_template)
    if mode == "stage1_only":
        return stage1_only_label(candidates, pool_ids)
    labeled = stage2_filter(query, candidates.d_balanced, pool_ids, generators, index, theta, inclusive,
                            casefold, prompt_template, cache=dict(candidates.doc_utilities))
    labeled.group_utilities = dict(candidates.group_utilities)
    return labeled


def _stable_int(text):
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def emit_training_instances(labeled, k, seed, index, query_text):
    """One instance per positive with ``k`` negatives drawn uniformly without replacement.

    Negatives are sorted before sampling and each draw is seeded from
    ``(seed, query_id, positive index)``, so output is independent of list
    order and of which other queries are processed.

    Raises:
        QueryDropped: fewer than ``k`` negatives are available.
    """
    k = check_positive_int(k, "k")
    negatives = sorted(labeled.negatives)
    if len(negatives) < k:
        raise QueryDropped(labeled.query_id, f"only {len(negatives)} negatives for k={k}")
    out = []
    for i, pos_id in enumerate(labeled.positives):
        rng = np.random.default_rng([int(seed), _stable_int(labeled.query_id), i])
        picks = rng.choice(len(negatives), size=k, replace=False)
        neg_ids = [negatives[j] for j in picks]
        out.append(TrainingInstance(
            query_id=labeled.query_id,
            query=query_text,
            pos=render_chunk_text(index[pos_id]),
            neg=[render_chunk_text(index[c]) for c in neg_ids],
            pos_id=pos_id,
            neg_ids=neg_ids,
        ))
    return out


def dataset_statistics(labeled_queries, language_of):
    """Query count, positive count and mean distinct positive languages per query.

    ``language_of`` maps chunk_id -> language (a dict or a CorpusIndex).
    """
    labeled_queries = list(labeled_queries)
    lookup = language_of.language_of if hasattr(language_of, "language_of") else language_of.__getitem__
    n_pos = sum(len(lq.positives) for lq in labeled_queries)
    langs = [len({lookup(c) for c in lq.positives}) for lq in labeled_queries]
    return {
        "queries": len(labeled_queries),
        "positives": n_pos,
        "avg_languages_per_query": float(np.mean(langs)) if langs else 0.0,
    }
