"""Tables produced by the ``eval`` and ``significance`` subcommands."""

import logging
from collections import defaultdict

import numpy as np

from mrag_bias.exceptions import NotApplicableError
from mrag_bias.metrics import ndcg_at_k, precision_at_k
from mrag_bias.stats import paired_t_test, pearson, peer, significance_stars

logger = logging.getLogger(__name__)

PER_QUERY_HEADER = ["query_id", "query_language", "generator_id", "score", "mean_top5_score"]
PER_LANGUAGE_HEADER = ["query_language", "generator_id", "n", "n_failed", "mean_score"]
RANKING_HEADER = ["query_language", "n", "precision_at_k", "ndcg_at_k", "peer", "peer_n"]
CORRELATION_HEADER = ["generator_id", "n", "pearson_r", "p"]
SIGNIFICANCE_HEADER = [
    "language", "n", "baseline_mean", "treatment_mean", "delta_pct", "t", "p", "stars", "p_bonferroni",
]


def per_query_rows(records):
    """Flatten run records into (query, generator) score rows; failed queries are left out.

    Oracle rows carry each generator's best score over language groups.
    """
    rows = []
    for rec in records:
        if rec["status"] == "failed":
            continue
        if rec.get("kind") == "oracle":
            per_gen = defaultdict(list)
            for group in rec["per_language"].values():
                for gid, ans in group["answers"].items():
                    per_gen[gid].append(ans["score"])
            for gid in sorted(per_gen):
                rows.append([rec["query_id"], rec["query_language"], gid, max(per_gen[gid]), ""])
        else:
            for gid in sorted(rec["answers"]):
                rows.append([rec["query_id"], rec["query_language"], gid, rec["answers"][gid]["score"],
                             rec["mean_top5_score"]])
    return rows


def per_language_rows(records, rows):
    failed = defaultdict(int)
    for rec in records:
        if rec["status"] == "failed":
            failed[rec["query_language"]] += 1
    groups = defaultdict(list)
    for _, lang, gid, score, _ in rows:
        groups[(lang, gid)].append(score)
    return [[lang, gid, len(v), failed[lang], float(np.mean(v))] for (lang, gid), v in sorted(groups.items())]


def rank_groups(record, relevant, language_of):
    """Language -> 1-based ranks of positive chunks in the reranker's full ordering of the pool."""
    groups = defaultdict(list)
    for rank, (cid, _) in enumerate(record["rerank_pool"]["entries"], 1):
        if cid in relevant:
            groups[language_of(cid)].append(rank)
    return dict(groups)


def ranking_rows(records, judgments, language_of, k=5):
    """Precision@k, NDCG@k and PEER per query language (plus an ``ALL`` row) for vanilla runs."""
    by_lang = defaultdict(lambda: {"p": [], "ndcg": [], "groups": []})
    for rec in records:
        if rec.get("kind") == "oracle" or rec["status"] != "ok":
            continue
        relevant = judgments.get(rec["query_id"])
        if relevant is None:
            continue
        if not relevant:
            logger.warning("query %s has no relevant chunks; skipped by rank metrics", rec["query_id"])
            continue
        ids = [cid for cid, _ in rec["rerank_pool"]["entries"]]
        for bucket in (by_lang[rec["query_language"]], by_lang["ALL"]):
            bucket["p"].append(precision_at_k(ids, relevant, k))
            bucket["ndcg"].append(ndcg_at_k(ids, relevant, k))
            bucket["groups"].append(rank_groups(rec, relevant, language_of))
    rows = []
    for lang in sorted(by_lang, key=lambda x: (x == "ALL", x)):
        b = by_lang[lang]
        try:
            pr = peer(b["groups"])
            peer_value, peer_n = pr.value, pr.n_evaluable
        except NotApplicableError:
            peer_value, peer_n = "", 0
        rows.append([lang, len(b["p"]), float(np.mean(b["p"])), float(np.mean(b["ndcg"])), peer_value, peer_n])
    return rows


def correlation_rows(records):
    """Pearson correlation of mean top-5 rerank score with answer score, per generator."""
    xs, ys = defaultdict(list), defaultdict(list)
    for rec in records:
        if rec.get("kind") == "oracle" or rec["status"] != "ok":
            continue
        for gid, ans in rec["answers"].items():
            xs[gid].append(rec["mean_top5_score"])
            ys[gid].append(ans["score"])
    rows = []
    for gid in sorted(xs):
        try:
            res = pearson(xs[gid], ys[gid])
            rows.append([gid, len(xs[gid]), res.r, res.p])
        except (NotApplicableError, ValueError) as exc:
            logger.warning("no correlation for %s: %s", gid, exc)
            rows.append([gid, len(xs[gid]), "", ""])
    return rows


def relative_change_pct(baseline, treatment):
    return (treatment - baseline) / baseline * 100.0 if baseline else float("nan")


def significance_rows(baseline_rows, treatment_rows):
    """Paired t-tests per language (and overall) on rows joined by (query_id, generator_id)."""
    base = {(r["query_id"], r["generator_id"]): r for r in baseline_rows}
    pairs = defaultdict(lambda: ([], []))
    for r in treatment_rows:
        b = base.get((r["query_id"], r["generator_id"]))
        if b is None:
            continue
        for lang in (b["query_language"], "Overall"):
            pairs[lang][0].append(float(b["score"]))
            pairs[lang][1].append(float(r["score"]))
    langs = sorted(lang for lang in pairs if lang != "Overall")
    m = len(langs)
    out = []
    for lang in [*langs, "Overall"] if pairs else []:
        a, b = pairs[lang]
        bm, tm = float(np.mean(a)), float(np.mean(b))
        if len(a) < 2:
            logger.warning("significance: %s has fewer than two pairs", lang)
            out.append([lang, len(a), bm, tm, relative_change_pct(bm, tm), "", "", "", ""])
            continue
        res = paired_t_test(b, a)
        out.append([lang, len(a), bm, tm, relative_change_pct(bm, tm), res.t, res.p,
                    significance_stars(res.p), min(1.0, res.p * max(m, 1))])
    return out
