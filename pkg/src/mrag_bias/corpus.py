"""Corpus ingestion and fixed-size chunking.

Whitespace-segmented languages are cut every 100 words; languages without
whitespace word boundaries (zh, ja, th by default) every 100 code points.
"""

import re
from dataclasses import asdict, dataclass

from sklearn.base import BaseEstimator, TransformerMixin

from mrag_bias._validation import check_positive_int
from mrag_bias.io import read_jsonl

DEFAULT_LANGUAGES = ("ar", "de", "en", "es", "fi", "fr", "it", "ja", "ko", "pt", "ru", "th", "zh")
CHAR_SEGMENTED_LANGUAGES = frozenset({"zh", "ja", "th"})
CHUNK_UNITS = 100

_WORD = re.compile(r"\S+")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    title: str
    body: str
    language: str

    @classmethod
    def from_dict(cls, d):
        return cls(doc_id=str(d["doc_id"]), title=d.get("title", ""), body=d["body"], language=d["language"])


@dataclass(frozen=True)
class DocumentChunk:
    chunk_id: str
    doc_id: str
    title: str
    text: str
    language: str
    index: int

    @classmethod
    def from_dict(cls, d):
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            title=d["title"],
            text=d["text"],
            language=d["language"],
            index=int(d["index"]),
        )

    def to_dict(self):
        return asdict(self)


def make_chunk_id(doc_id, index):
    return f"{doc_id}#{index}"


def _spans(body, char_segmented, units):
    if char_segmented:
        return [(i, min(i + units, len(body))) for i in range(0, len(body), units)]
    words = [m.span() for m in _WORD.finditer(body)]
    return [
        (words[i][0], words[min(i + units, len(words)) - 1][1])
        for i in range(0, len(words), units)
    ]


def chunk_document(doc, char_segmented_languages=CHAR_SEGMENTED_LANGUAGES, units=CHUNK_UNITS,
                   language_set=None):
    """Split ``doc.body`` into consecutive chunks of at most ``units`` words or code points.

    Word chunks are slices of the trimmed body, so whitespace inside a chunk
    is kept verbatim and only the separators between chunks are dropped.
    The last chunk may be short; it is never merged or discarded.

    Raises:
        ValueError: the body is blank, or the language is outside ``language_set``.
    """
    units = check_positive_int(units, "units")
    if not doc.doc_id:
        raise ValueError("document has an empty doc_id")
    if language_set is not None and doc.language not in language_set:
        raise ValueError(f"document {doc.doc_id!r}: language {doc.language!r} not in configured language set")
    body = doc.body.strip()
    if not body:
        raise ValueError(f"document {doc.doc_id!r} has an empty body")
    spans = _spans(body, doc.language in char_segmented_languages, units)
    return [
        DocumentChunk(
            chunk_id=make_chunk_id(doc.doc_id, i),
            doc_id=doc.doc_id,
            title=doc.title,
            text=body[start:end],
            language=doc.language,
            index=i,
        )
        for i, (start, end) in enumerate(spans)
    ]


def render_chunk_text(chunk):
    """The text every retriever, reranker and generator sees: ``"{title}. {text}"``."""
    return f"{chunk.title}. {chunk.text}"


def load_documents(path):
    docs = [RawDocument.from_dict(d) for d in read_jsonl(path)]
    seen = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise ValueError(f"{path}: duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
    return docs


def load_chunks(path):
    return [DocumentChunk.from_dict(d) for d in read_jsonl(path)]


class CorpusIndex:
    """chunk_id -> DocumentChunk lookup with corpus order preserved."""

    def __init__(self, chunks):
        self.chunks = list(chunks)
        self._by_id = {}
        for c in self.chunks:
            if c.chunk_id in self._by_id:
                raise ValueError(f"duplicate chunk_id {c.chunk_id!r}")
            self._by_id[c.chunk_id] = c

    @classmethod
    def from_jsonl(cls, path):
        return cls(load_chunks(path))

    def __getitem__(self, chunk_id):
        return self._by_id[chunk_id]

    def __contains__(self, chunk_id):
        return chunk_id in self._by_id

    def __len__(self):
        return len(self.chunks)

    def __iter__(self):
        return iter(self.chunks)

    def language_of(self, chunk_id):
        return self._by_id[chunk_id].language


class DocumentChunker(TransformerMixin, BaseEstimator):
    """Stateless transformer turning RawDocuments into DocumentChunks.

    Parameters
    ----------
    units : int, default=100
        Words (or code points for character-segmented languages) per chunk.
    char_segmented_languages : tuple of str, default=("ja", "th", "zh")
    language_set : tuple of str or None
        When given, documents in other languages are rejected.
    """

    def __init__(self, units=CHUNK_UNITS, char_segmented_languages=("ja", "th", "zh"), language_set=None):
        self.units = units
        self.char_segmented_languages = char_segmented_languages
        self.language_set = language_set

    def fit(self, X, y=None):
        check_positive_int(self.units, "units")
        self.n_documents_in_ = len(X)
        return self

    def transform(self, X):
        segmented = frozenset(self.char_segmented_languages)
        langs = None if self.language_set is None else frozenset(self.language_set)
        out = []
        for doc in X:
            if isinstance(doc, dict):
                doc = RawDocument.from_dict(doc)
            out.extend(chunk_document(doc, segmented, self.units, langs))
        return out
