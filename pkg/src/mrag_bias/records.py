"""Record types exchanged between the pipeline, analytics and LAURA stages."""

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    language: str
    reference_answers: tuple = ()

    @classmethod
    def from_dict(cls, d):
        return cls(
            query_id=str(d["query_id"]),
            text=d["text"],
            language=d["language"],
            reference_answers=tuple(d.get("reference_answers", ())),
        )


@dataclass
class RankedList:
    query_id: str
    entries: list = field(default_factory=list)

    @classmethod
    def from_scores(cls, query_id, chunk_ids, scores):
        """Sort by score descending; equal scores keep their input order."""
        order = sorted(range(len(chunk_ids)), key=lambda i: -scores[i])
        return cls(query_id, [(chunk_ids[i], float(scores[i])) for i in order])

    @property
    def ids(self):
        return [cid for cid, _ in self.entries]

    @property
    def scores(self):
        return [s for _, s in self.entries]

    def top(self, k):
        return RankedList(self.query_id, list(self.entries[:k]))

    def __len__(self):
        return len(self.entries)

    def to_dict(self):
        return {"query_id": self.query_id, "entries": [[cid, s] for cid, s in self.entries]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["query_id"], [(cid, float(s)) for cid, s in d["entries"]])


@dataclass
class GenerationRecord:
    generator_id: str
    answer: str
    score: float

    to_dict = asdict

    @classmethod
    def from_dict(cls, d):
        return cls(d["generator_id"], d["answer"], float(d["score"]))


def _answers_to_dict(answers):
    return {gid: asdict(rec) for gid, rec in answers.items()}


def _answers_from_dict(d):
    return {gid: GenerationRecord.from_dict(rec) for gid, rec in d.items()}


@dataclass
class VanillaRunRecord:
    query_id: str
    query_language: str
    retrieved: RankedList
    reranked: RankedList
    rerank_pool: RankedList
    context_language_counts: dict
    mean_top5_score: float
    answers: dict
    status: str = "ok"
    error: str = None

    def to_dict(self):
        return {
            "kind": "vanilla",
            "query_id": self.query_id,
            "query_language": self.query_language,
            "status": self.status,
            "error": self.error,
            "retrieved": self.retrieved.to_dict(),
            "reranked": self.reranked.to_dict(),
            "rerank_pool": self.rerank_pool.to_dict(),
            "context_language_counts": dict(sorted(self.context_language_counts.items())),
            "mean_top5_score": self.mean_top5_score,
            "answers": _answers_to_dict(self.answers),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            query_id=d["query_id"],
            query_language=d["query_language"],
            retrieved=RankedList.from_dict(d["retrieved"]),
            reranked=RankedList.from_dict(d["reranked"]),
            rerank_pool=RankedList.from_dict(d["rerank_pool"]),
            context_language_counts=dict(d["context_language_counts"]),
            mean_top5_score=float(d["mean_top5_score"]),
            answers=_answers_from_dict(d["answers"]),
            status=d.get("status", "ok"),
            error=d.get("error"),
        )


@dataclass
class LanguageGroup:
    reranked_top5: RankedList
    answers: dict
    score: float = None
    error: str = None

    def to_dict(self):
        return {
            "reranked_top5": self.reranked_top5.to_dict(),
            "answers": _answers_to_dict(self.answers),
            "score": self.score,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            RankedList.from_dict(d["reranked_top5"]),
            _answers_from_dict(d["answers"]),
            d.get("score"),
            d.get("error"),
        )


@dataclass
class OracleRunRecord:
    query_id: str
    query_language: str
    per_language: dict
    best_score: float
    best_languages: list
    status: str = "ok"
    error: str = None

    def to_dict(self):
        return {
            "kind": "oracle",
            "query_id": self.query_id,
            "query_language": self.query_language,
            "status": self.status,
            "error": self.error,
            "per_language": {lang: g.to_dict() for lang, g in self.per_language.items()},
            "best_score": self.best_score,
            "best_languages": sorted(self.best_languages),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            query_id=d["query_id"],
            query_language=d["query_language"],
            per_language={lang: LanguageGroup.from_dict(g) for lang, g in d["per_language"].items()},
            best_score=float(d["best_score"]),
            best_languages=list(d["best_languages"]),
            status=d.get("status", "ok"),
            error=d.get("error"),
        )


def record_from_dict(d):
    if d.get("kind") == "oracle":
        return OracleRunRecord.from_dict(d)
    return VanillaRunRecord.from_dict(d)
