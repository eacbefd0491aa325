"""Context-language distributions and the divergences between them.

All logarithms default to base 2: JS is then bounded by 1 and entropy is
in bits.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from mrag_bias.exceptions import NotApplicableError

logger = logging.getLogger(__name__)

KL_EPSILON = 1e-12


@dataclass
class LanguageDistribution:
    query_language: str
    probs: dict
    n_queries: int = 0

    def vector(self, languages):
        return np.array([self.probs.get(lang, 0.0) for lang in languages], dtype=np.float64)


@dataclass
class DistributionMatrix:
    """Rows are document languages, columns are query languages."""

    query_languages: list
    doc_languages: list
    values: np.ndarray

    def rows(self):
        for lang, row in zip(self.doc_languages, self.values):
            yield [lang, *row.tolist()]


def _get(rec, key):
    return rec[key] if isinstance(rec, dict) else getattr(rec, key)


def _usable(rec):
    return _get(rec, "status") == "ok"


def _average(vectors, query_language):
    langs = sorted({k for v in vectors for k in v})
    probs = {lang: float(np.mean([v.get(lang, 0.0) for v in vectors])) for lang in langs}
    return LanguageDistribution(query_language, probs, len(vectors))


def vanilla_distribution(records, query_language):
    """Average over queries of the per-query language proportions in the reranked top-5.

    Raises:
        NotApplicableError: no successful record with a non-empty context.
    """
    vectors = []
    for rec in records:
        if _get(rec, "query_language") != query_language or not _usable(rec):
            continue
        counts = _get(rec, "context_language_counts")
        total = sum(counts.values())
        if total:
            vectors.append({lang: n / total for lang, n in counts.items()})
    if not vectors:
        raise NotApplicableError(f"no vanilla records with context for query language {query_language!r}")
    return _average(vectors, query_language)


def oracle_distribution(records, query_language):
    """Average over queries of a unit weight split evenly across the best language(s).

    Raises:
        NotApplicableError: no successful record for the query language.
    """
    vectors = []
    for rec in records:
        if _get(rec, "query_language") != query_language or not _usable(rec):
            continue
        best = list(_get(rec, "best_languages"))
        if best:
            vectors.append({lang: 1.0 / len(best) for lang in best})
    if not vectors:
        raise NotApplicableError(f"no oracle records for query language {query_language!r}")
    return _average(vectors, query_language)


def _as_pair(p, q):
    if isinstance(p, LanguageDistribution) or isinstance(q, LanguageDistribution):
        pd = p.probs if isinstance(p, LanguageDistribution) else p
        qd = q.probs if isinstance(q, LanguageDistribution) else q
        keys = sorted(set(pd) | set(qd))
        return (np.array([pd.get(k, 0.0) for k in keys]), np.array([qd.get(k, 0.0) for k in keys]))
    if isinstance(p, dict):
        keys = sorted(set(p) | set(q))
        return np.array([p.get(k, 0.0) for k in keys]), np.array([q.get(k, 0.0) for k in keys])
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distributions have different supports: {p.shape} vs {q.shape}")
    return p, q


def kl_divergence(p, q, base=2.0, epsilon=KL_EPSILON):
    """KL(p || q). Zero-mass entries of ``q`` under positive ``p`` trigger
    epsilon smoothing of ``q`` (then renormalisation), so the result stays finite.

    Accepts LanguageDistributions, dicts keyed by language, or aligned arrays.
    """
    p, q = _as_pair(p, q)
    mask = p > 0
    if np.any(mask & (q <= 0)):
        q = (q + epsilon) / (q.sum() + epsilon * q.size)
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))) / math.log(base))


def js_divergence(p, q, base=2.0):
    p, q = _as_pair(p, q)
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m, base) + 0.5 * kl_divergence(q, m, base)


def entropy(p, base=2.0):
    if isinstance(p, LanguageDistribution):
        p = list(p.probs.values())
    elif isinstance(p, dict):
        p = list(p.values())
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)) / math.log(base)) + 0.0


@dataclass
class DistributionReport:
    matrix_vanilla: DistributionMatrix
    matrix_oracle: DistributionMatrix
    per_query_language: list
    means: dict


def _matrix(dists, query_languages, doc_languages):
    values = np.zeros((len(doc_languages), len(query_languages)))
    for j, ql in enumerate(query_languages):
        values[:, j] = dists[ql].vector(doc_languages)
    return DistributionMatrix(list(query_languages), list(doc_languages), values)


def distribution_report(vanilla_records, oracle_records, languages, kl_direction="vanilla||oracle", base=2.0):
    """Per-query-language JS/KL/entropy plus their unweighted means and both matrices.

    Query languages missing on either side are skipped with a warning.
    Matrix columns follow ``languages`` order. Rows cover every configured
    language (zero rows included) plus any unexpected document language,
    appended in sorted order.
    """
    if kl_direction not in ("vanilla||oracle", "oracle||vanilla"):
        raise ValueError(f"unknown kl_direction {kl_direction!r}")
    vanilla_records = list(vanilla_records)
    oracle_records = list(oracle_records)
    seen = {_get(r, "query_language") for r in vanilla_records} | {_get(r, "query_language") for r in oracle_records}
    candidates = [lang for lang in languages if lang in seen] + sorted(seen - set(languages))

    van, orc, rows = {}, {}, []
    for ql in candidates:
        try:
            v = vanilla_distribution(vanilla_records, ql)
            o = oracle_distribution(oracle_records, ql)
        except NotApplicableError as exc:
            logger.warning("distribution report skips %s: %s", ql, exc)
            continue
        van[ql], orc[ql] = v, o
        keys = sorted(set(v.probs) | set(o.probs))
        pv, po = v.vector(keys), o.vector(keys)
        kl = kl_divergence(pv, po, base) if kl_direction == "vanilla||oracle" else kl_divergence(po, pv, base)
        rows.append({
            "query_language": ql,
            "js": js_divergence(pv, po, base),
            "kl": kl,
            "entropy": entropy(pv, base),
            "n_vanilla": v.n_queries,
            "n_oracle": o.n_queries,
        })
    if not rows:
        raise NotApplicableError("no query language is covered by both record sets")
    query_languages = [r["query_language"] for r in rows]
    doc_seen = {k for d in (*van.values(), *orc.values()) for k in d.probs}
    doc_languages = list(languages) + sorted(doc_seen - set(languages))
    means = {key: float(np.mean([r[key] for r in rows])) for key in ("js", "kl", "entropy")}
    return DistributionReport(
        _matrix(van, query_languages, doc_languages),
        _matrix(orc, query_languages, doc_languages),
        rows,
        means,
    )
