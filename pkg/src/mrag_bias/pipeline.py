"""Vanilla and oracle (language-wise) RAG runs over pluggable services."""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from mrag_bias.corpus import render_chunk_text
from mrag_bias.exceptions import ProtocolError, ServiceError
from mrag_bias.io import dumps, read_jsonl, write_jsonl
from mrag_bias.metrics import best_reference_recall
from mrag_bias.records import (
    GenerationRecord,
    LanguageGroup,
    OracleRunRecord,
    RankedList,
    VanillaRunRecord,
)
from mrag_bias.services import generate, rerank, retrieve

logger = logging.getLogger(__name__)

VANILLA_TOP_K = 50
RERANK_TOP_K = 5
CONTEXT_SEPARATOR = "\n\n"
TIE_TOL = 1e-12


def build_context(chunks):
    """Rendered chunks in rank order, separated by a blank line."""
    return CONTEXT_SEPARATOR.join(render_chunk_text(c) for c in chunks)


def resolve(index, ranked, endpoint_name="retriever"):
    try:
        return [index[cid] for cid in ranked.ids]
    except KeyError as exc:
        raise ProtocolError(endpoint_name, f"unknown chunk id {exc.args[0]!r}") from None


def answer_all(query, context, generators, casefold=False, prompt_template=None):
    """One GenerationRecord per generator; score = max 3-gram recall over references."""
    out = {}
    for gid, endpoint in generators.items():
        answer = generate(endpoint, query.text, context, gid, prompt_template)
        out[gid] = GenerationRecord(gid, answer, best_reference_recall(answer, query.reference_answers, casefold))
    return out


def mean_score(answers):
    return float(np.mean([a.score for a in answers.values()])) if answers else 0.0


def best_with_ties(scores):
    """Max value and every key within TIE_TOL of it."""
    best = max(scores.values())
    return best, sorted(k for k, v in scores.items() if best - v <= TIE_TOL)


def group_by_language(chunks):
    """Partition chunks by language, keeping first-appearance order."""
    groups = {}
    for c in chunks:
        groups.setdefault(c.language, []).append(c)
    return groups


def _empty(query_id):
    return RankedList(query_id, [])


def run_vanilla(query, retriever, reranker, generators, index, retrieval_top_k=VANILLA_TOP_K,
                rerank_top_k=RERANK_TOP_K, casefold=False, prompt_template=None):
    """Retrieve from the pooled corpus, rerank, answer from the top-5 context.

    Service failures never raise: the record comes back with
    ``status="failed"``. An empty retrieval gives ``status="empty"``.
    """
    qid = query.query_id

    def blank(status, error=None):
        return VanillaRunRecord(qid, query.language, _empty(qid), _empty(qid), _empty(qid), {}, 0.0,
                                {gid: GenerationRecord(gid, "", 0.0) for gid in generators}, status, error)

    try:
        retrieved = retrieve(retriever, query.text, retrieval_top_k, qid)
        if not retrieved.entries:
            logger.warning("query %s: retrieval returned nothing", qid)
            return blank("empty", "empty retrieval")
        pool = resolve(index, retrieved, retriever.name)
        ranked = rerank(reranker, query.text, pool, qid)
        top = ranked.top(rerank_top_k)
        chunks = [index[cid] for cid in top.ids]
        answers = answer_all(query, build_context(chunks), generators, casefold, prompt_template)
    except ServiceError as exc:
        logger.warning("query %s failed: %s", qid, exc)
        return blank("failed", str(exc))
    counts = Counter(c.language for c in chunks)
    return VanillaRunRecord(
        query_id=qid,
        query_language=query.language,
        retrieved=retrieved,
        reranked=top,
        rerank_pool=ranked,
        context_language_counts=dict(counts),
        mean_top5_score=float(np.mean(top.scores)),
        answers=answers,
    )


def run_oracle(query, retriever, reranker, generators, index, retrieval_top_k=VANILLA_TOP_K,
               rerank_top_k=RERANK_TOP_K, casefold=False, prompt_template=None):
    """Rerank each language group of the pool separately and keep the best group score.

    A group's score is the mean over generators. Groups whose generation
    fails are kept in the record with their error but take no part in the max.
    """
    qid = query.query_id

    def blank(status, error):
        return OracleRunRecord(qid, query.language, {}, 0.0, [], status, error)

    try:
        retrieved = retrieve(retriever, query.text, retrieval_top_k, qid)
        if not retrieved.entries:
            logger.warning("query %s: retrieval returned nothing", qid)
            return blank("empty", "empty retrieval")
        pool = resolve(index, retrieved, retriever.name)
        per_language = {}
        for lang, chunks in group_by_language(pool).items():
            top = rerank(reranker, query.text, chunks, qid).top(rerank_top_k)
            context = build_context([index[cid] for cid in top.ids])
            try:
                answers = answer_all(query, context, generators, casefold, prompt_template)
            except ServiceError as exc:
                logger.warning("query %s: generation failed for language group %s: %s", qid, lang, exc)
                per_language[lang] = LanguageGroup(top, {}, None, str(exc))
                continue
            per_language[lang] = LanguageGroup(top, answers, mean_score(answers))
    except ServiceError as exc:
        logger.warning("query %s failed: %s", qid, exc)
        return blank("failed", str(exc))
    scored = {lang: g.score for lang, g in per_language.items() if g.error is None}
    if not scored:
        rec = blank("failed", "generation failed for every language group")
        rec.per_language = per_language
        return rec
    best, ties = best_with_ties(scored)
    return OracleRunRecord(qid, query.language, per_language, best, ties)


class BatchRunner:
    """Runs a per-query function over a worker pool with JSONL checkpointing.

    Records are appended to ``out_path`` in query-input order as they
    complete, so an interrupted run can resume: queries already present
    with a non-failed status are skipped. At the end the file is rewritten
    once in input order, keeping the latest record per query.
    """

    def __init__(self, fn, out_path, parallelism=1):
        self.fn = fn
        self.out_path = Path(out_path)
        self.parallelism = max(1, int(parallelism))

    def _completed(self):
        done = {}
        if self.out_path.exists():
            for rec in read_jsonl(self.out_path):
                if rec.get("status") != "failed":
                    done[rec["query_id"]] = rec
        return done

    def run(self, queries):
        queries = list(queries)
        done = self._completed()
        resumed = sum(1 for q in queries if q.query_id in done)
        todo = [q for q in queries if q.query_id not in done]
        self.out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.out_path, "a", encoding="utf-8", newline="\n") as fh, \
                ThreadPoolExecutor(self.parallelism) as pool:
            for q, rec in zip(todo, pool.map(self.fn, todo)):
                d = rec.to_dict()
                fh.write(dumps(d) + "\n")
                fh.flush()
                done[q.query_id] = d
        records = [done[q.query_id] for q in queries]
        write_jsonl(self.out_path, records)
        failures = [{"query_id": r["query_id"], "reason": r.get("error")} for r in records if r["status"] == "failed"]
        counts = {
            "queries": len(queries),
            "resumed": resumed,
            "ok": sum(1 for r in records if r["status"] == "ok"),
            "empty": sum(1 for r in records if r["status"] == "empty"),
            "failed": len(failures),
        }
        return records, counts, failures
