import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrag_bias.corpus import (
    CorpusIndex,
    DocumentChunk,
    DocumentChunker,
    RawDocument,
    chunk_document,
    render_chunk_text,
)

THAI_SYLLABLES = "สวัสดีครับ"  # 10 code points


def _scalar_count(s):
    # independent of len(): count 4-byte units of the UTF-32 encoding
    return len(s.encode("utf-32-le")) // 4


def test_english_250_words():
    body = " ".join(f"w{i}" for i in range(250))
    chunks = chunk_document(RawDocument("doc", "T", body, "en"))
    assert [len(c.text.split()) for c in chunks] == [100, 100, 50]
    assert [c.chunk_id for c in chunks] == ["doc#0", "doc#1", "doc#2"]
    assert all(c.title == "T" for c in chunks)


def test_chinese_exact_boundary():
    body = "中" * 100
    chunks = chunk_document(RawDocument("z", "标题", body, "zh"))
    assert len(chunks) == 1
    assert _scalar_count(chunks[0].text) == 100


def test_thai_230_code_points_never_word_split():
    body = THAI_SYLLABLES * 23
    assert _scalar_count(body) == 230
    chunks = chunk_document(RawDocument("t", "ไทย", body, "th"))
    assert [_scalar_count(c.text) for c in chunks] == [100, 100, 30]


def test_char_segmented_counts_spaces_as_units():
    body = "ab cd" * 40  # 200 code points including spaces
    chunks = chunk_document(RawDocument("j", "", body, "ja"))
    assert [len(c.text) for c in chunks] == [100, 100]


def test_empty_body_rejected_with_doc_id():
    with pytest.raises(ValueError, match="doc-7"):
        chunk_document(RawDocument("doc-7", "t", "   \n\t ", "en"))


def test_language_outside_set_rejected():
    with pytest.raises(ValueError, match="xx"):
        chunk_document(RawDocument("d", "t", "body", "xx"), language_set={"en"})


@pytest.mark.parametrize("title,text,expected", [
    ("The Fifth Element", "The Fifth Element () is a 1997...",
     "The Fifth Element. The Fifth Element () is a 1997..."),
    ("", "abc", ". abc"),
    ("A", "b", "A. b"),
])
def test_render_chunk_text(title, text, expected):
    chunk = DocumentChunk("d#0", "d", title, text, "en", 0)
    assert render_chunk_text(chunk) == expected


_words = st.lists(st.text(alphabet="abcé中ß", min_size=1, max_size=6), min_size=1, max_size=330)
_seps = st.sampled_from([" ", "  ", "\n", "\t", "　", " \n "])


@settings(max_examples=150, deadline=None)
@given(_words, st.data())
def test_word_chunks_round_trip(words, data):
    seps = [data.draw(_seps) for _ in words[1:]]
    body = words[0] + "".join(s + w for s, w in zip(seps, words[1:]))
    chunks = chunk_document(RawDocument("d", "t", body, "en"))
    assert len(chunks) == -(-len(words) // 100)
    # rebuild: consecutive chunks are separated by the original whitespace run
    rebuilt = chunks[0].text
    pos = len(rebuilt)
    for c in chunks[1:]:
        start = body.index(c.text, pos)
        assert re.fullmatch(r"\s+", body[pos:start])
        rebuilt += body[pos:start] + c.text
        pos = start + len(c.text)
    assert rebuilt == body.strip()
    assert all(len(c.text.split()) <= 100 for c in chunks)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="กขคงจฉ中文日本語 ", min_size=1, max_size=450))
def test_char_chunks_round_trip(body):
    doc = RawDocument("d", "t", body, "th")
    if not body.strip():
        with pytest.raises(ValueError):
            chunk_document(doc)
        return
    chunks = chunk_document(doc)
    assert "".join(c.text for c in chunks) == body.strip()
    assert len(chunks) == -(-len(body.strip()) // 100)
    assert chunks == chunk_document(doc)


def test_chunker_estimator_api():
    chunker = DocumentChunker(units=2)
    assert chunker.get_params()["units"] == 2
    docs = [{"doc_id": "a", "title": "A", "body": "x y z", "language": "en"}]
    out = chunker.fit_transform(docs)
    assert [c.text for c in out] == ["x y", "z"]
    assert chunker.set_params(units=3).transform(docs)[0].text == "x y z"


def test_corpus_index_rejects_duplicates():
    c = DocumentChunk("d#0", "d", "t", "x", "en", 0)
    with pytest.raises(ValueError, match="duplicate"):
        CorpusIndex([c, c])
    idx = CorpusIndex([c])
    assert idx.language_of("d#0") == "en" and "d#0" in idx and len(idx) == 1
