import pytest

import synthetic
from mrag_bias.corpus import CorpusIndex, DocumentChunker, load_documents
from mrag_bias.io import write_jsonl
from mrag_bias.services import LocalEndpoint, MockServices


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    paths = synthetic.build(root)
    chunks = DocumentChunker(char_segmented_languages=("zh",)).fit_transform(load_documents(paths["docs"]))
    write_jsonl(paths["chunks"], [c.to_dict() for c in chunks])
    paths["judgments"] = synthetic.write_judgments(paths, chunks)
    return paths


@pytest.fixture(scope="session")
def index(corpus_dir):
    return CorpusIndex.from_jsonl(corpus_dir["chunks"])


@pytest.fixture(scope="session")
def mocks(corpus_dir, index):
    import yaml

    fixtures = yaml.safe_load(open(corpus_dir["fixtures"], encoding="utf-8"))
    return MockServices.from_fixtures(fixtures, index)


@pytest.fixture(scope="session")
def endpoints(mocks):
    return (
        LocalEndpoint("retriever", mocks),
        LocalEndpoint("reranker", mocks),
        {"gen-a": LocalEndpoint("gen-a", mocks), "gen-b": LocalEndpoint("gen-b", mocks)},
    )


@pytest.fixture(scope="session")
def queries(corpus_dir):
    from mrag_bias.cli import load_queries

    return load_queries(corpus_dir["queries"])


# -- acceptance report -------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        state = _CRITERIA.setdefault(marker, True)
        _CRITERIA[marker] = state and report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result().criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), ok in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
