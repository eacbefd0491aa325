"""``mrag-bias`` command-line entry point.

Exit codes: 0 success, 1 failed precondition, 2 partial completion (some
queries failed or were dropped), 64 usage error.
"""

import argparse
import json
import logging
import os
import signal
import sys
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np
import yaml

from mrag_bias import __version__
from mrag_bias.config import RunManifest, load_config, now_iso, run_directory
from mrag_bias.corpus import CorpusIndex, DocumentChunker, load_chunks, load_documents
from mrag_bias.distributions import distribution_report
from mrag_bias.evaluation import (
    CORRELATION_HEADER,
    PER_LANGUAGE_HEADER,
    PER_QUERY_HEADER,
    RANKING_HEADER,
    SIGNIFICANCE_HEADER,
    correlation_rows,
    per_language_rows,
    per_query_rows,
    ranking_rows,
    significance_rows,
)
from mrag_bias.exceptions import ConfigError, NotApplicableError, QueryDropped, ServiceError
from mrag_bias.io import read_jsonl, read_tsv, write_jsonl, write_tsv
from mrag_bias.laura import dataset_statistics, emit_training_instances, label_query
from mrag_bias.listwise import ToyListwiseRanker, gradient_relative_error, overlap_features
from mrag_bias.mock_server import make_server
from mrag_bias.pipeline import BatchRunner, run_oracle, run_vanilla
from mrag_bias.records import Query
from mrag_bias.services import MockServices

logger = logging.getLogger("mrag_bias")

EXIT_OK, EXIT_PRECONDITION, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_structured(path):
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def load_fixtures(path):
    """Fixture file for mock services; ``chunks`` is resolved relative to the file."""
    path = Path(path)
    fixtures = _read_structured(path)
    if "chunks" not in fixtures:
        raise ConfigError("fixtures.chunks: path to the chunk JSONL is required")
    chunks = load_chunks(path.parent / fixtures["chunks"])
    return MockServices.from_fixtures(fixtures, chunks)


def load_queries(path):
    queries = [Query.from_dict(d) for d in read_jsonl(path)]
    ids = [q.query_id for q in queries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate query_id")
    return queries


def _parallelism(args, cfg):
    width = args.parallelism or os.cpu_count() or 1
    cap = cfg.max_in_flight()
    return max(1, min(width, cap) if cap else width)


def _services(cfg, args):
    mocks = load_fixtures(args.mock_fixtures) if getattr(args, "mock_fixtures", None) else None
    if not cfg.endpoints:
        raise ConfigError("endpoints: no service endpoints configured")
    return (
        cfg.endpoint(cfg.retriever, mocks),
        cfg.endpoint(cfg.reranker, mocks),
        cfg.generator_endpoints(getattr(args, "generators", None), mocks),
    )


def _out_dir(cfg, args):
    out = run_directory(cfg, explicit=args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------

def cmd_chunk(args, cfg):
    docs = load_documents(args.input)
    chunker = DocumentChunker(units=args.units, char_segmented_languages=tuple(args.char_segmented),
                              language_set=tuple(cfg.language_set))
    chunks = chunker.fit_transform(docs)
    out = Path(args.output) if args.output else _out_dir(cfg, args) / "chunks.jsonl"
    write_jsonl(out, [c.to_dict() for c in chunks])
    print(f"{len(docs)} documents -> {len(chunks)} chunks: {out}")
    return EXIT_OK


def _cmd_run(args, cfg, kind):
    started = now_iso()
    index = CorpusIndex.from_jsonl(args.chunks)
    queries = load_queries(args.queries)
    retriever, reranker, generators = _services(cfg, args)
    fn = run_vanilla if kind == "vanilla" else run_oracle
    worker = partial(fn, retriever=retriever, reranker=reranker, generators=generators, index=index,
                     retrieval_top_k=args.top_k or cfg.retrieval_top_k, rerank_top_k=cfg.rerank_top_k,
                     casefold=cfg.casefold, prompt_template=cfg.prompt_template)
    out = _out_dir(cfg, args)
    runner = BatchRunner(lambda q: worker(q), out / f"{kind}.jsonl", _parallelism(args, cfg))
    _, counts, failures = runner.run(queries)
    RunManifest(f"run-{kind}", cfg.config_hash(), cfg.seed, started, now_iso(), counts=counts,
                failures=failures).write(out / f"manifest_{kind}.json")
    print(f"{kind}: {counts['ok']} ok, {counts['empty']} empty, {counts['failed']} failed -> {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_eval(args, cfg):
    records = list(read_jsonl(args.runs))
    out = _out_dir(cfg, args)
    stem = Path(args.runs).stem
    rows = per_query_rows(records)
    write_tsv(out / f"{stem}.per_query.tsv", PER_QUERY_HEADER, rows)
    write_tsv(out / f"{stem}.per_language.tsv", PER_LANGUAGE_HEADER, per_language_rows(records, rows))
    if any(r.get("kind") != "oracle" for r in records):
        write_tsv(out / f"{stem}.correlation.tsv", CORRELATION_HEADER, correlation_rows(records))
    if args.judgments:
        if not args.chunks:
            raise ConfigError("--chunks: required with --judgments (document languages for PEER)")
        index = CorpusIndex.from_jsonl(args.chunks)
        judgments = {d["query_id"]: set(d["relevant_chunk_ids"]) for d in read_jsonl(args.judgments)}
        write_tsv(out / f"{stem}.ranking.tsv", RANKING_HEADER,
                  ranking_rows(records, judgments, index.language_of, args.k))
    print(f"eval: {len(rows)} scored rows -> {out}")
    return EXIT_OK


def cmd_distributions(args, cfg):
    vanilla = list(read_jsonl(args.vanilla))
    oracle = list(read_jsonl(args.oracle))
    report = distribution_report(vanilla, oracle, cfg.language_set, cfg.kl_direction, cfg.log_base)
    out = _out_dir(cfg, args)
    for name, matrix in (("vanilla", report.matrix_vanilla), ("oracle", report.matrix_oracle)):
        write_tsv(out / f"matrix_{name}.tsv", ["doc_language", *matrix.query_languages], matrix.rows())
    rows = [[r["query_language"], r["js"], r["kl"], r["entropy"]] for r in report.per_query_language]
    rows.append(["MEAN", report.means["js"], report.means["kl"], report.means["entropy"]])
    write_tsv(out / "divergences.tsv", ["query_language", "js", "kl", "entropy"], rows)
    m = report.means
    print(f"distributions: JS={m['js']:.3f} KL={m['kl']:.3f} entropy={m['entropy']:.2f} -> {out}")
    return EXIT_OK


def cmd_build_laura(args, cfg):
    started = now_iso()
    mode = args.mode.replace("-", "_")
    theta = cfg.theta if args.theta is None else args.theta
    k = args.k_negatives or cfg.k_negatives
    seed = cfg.seed if args.seed is None else args.seed
    index = CorpusIndex.from_jsonl(args.chunks)
    queries = load_queries(args.queries)
    retriever, reranker, generators = _services(cfg, args)

    def work(q):
        try:
            return q, label_query(q, retriever, reranker, generators, index, mode, theta,
                                  args.top_k or cfg.laura_retrieval_top_k, cfg.rerank_top_k,
                                  args.stage1_utility or cfg.stage1_utility, cfg.theta_inclusive,
                                  cfg.casefold, cfg.prompt_template), None
        except QueryDropped as exc:
            return q, None, exc.reason
        except ServiceError as exc:
            return q, None, f"service failure: {exc}"

    labels, instances, failures = [], [], []
    with ThreadPoolExecutor(_parallelism(args, cfg)) as pool:
        for q, labeled, reason in pool.map(work, queries):
            if labeled is None:
                failures.append({"query_id": q.query_id, "reason": reason})
                continue
            labels.append(labeled)
            try:
                instances.extend(emit_training_instances(labeled, k, seed, index, q.text))
            except QueryDropped as exc:
                failures.append({"query_id": q.query_id, "reason": exc.reason})

    out = _out_dir(cfg, args)
    write_jsonl(out / "labels.jsonl", [lq.to_dict() for lq in labels])
    write_jsonl(out / "training.jsonl", [inst.to_dict() for inst in instances])
    stats = dataset_statistics(labels, index)
    with open(out / "statistics.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    counts = {"queries": len(queries), "labeled": len(labels), "instances": len(instances),
              "dropped": len(failures), "mode": mode, "theta": theta, "k_negatives": k}
    RunManifest("build-laura", cfg.config_hash(), seed, started, now_iso(), counts=counts,
                failures=failures).write(out / "manifest_laura.json")
    print(f"build-laura[{mode}]: {len(labels)} labeled queries, {len(instances)} instances -> {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_significance(args, cfg):
    rows = significance_rows(read_tsv(args.baseline), read_tsv(args.treatment))
    if not rows:
        raise ValueError("significance: no (query_id, generator_id) pairs shared by both inputs")
    out = Path(args.output) if args.output else _out_dir(cfg, args) / "significance.tsv"
    write_tsv(out, SIGNIFICANCE_HEADER, rows)
    for lang, n, bm, tm, dp, _, p, stars, _ in rows:
        p_txt = f"{p:.2e}{stars}" if p != "" else "n/a"
        print(f"{lang:<10} {100 * bm:6.1f} {100 * tm:6.1f} {dp:+6.1f} {p_txt}")
    return EXIT_OK


def cmd_loss_check(args, cfg):
    instances = list(read_jsonl(args.instances))
    rng = np.random.default_rng(args.seed)
    errors = []
    for _ in range(args.n_random):
        n = int(rng.integers(2, 10))
        errors.append(gradient_relative_error(rng.normal(0, 3, n), int(rng.integers(0, n))))
    w = rng.normal(0, 1, args.n_features)
    for inst in instances:
        docs = [inst["pos"][0] if isinstance(inst["pos"], list) else inst["pos"], *inst["neg"]]
        scores = np.array([overlap_features(inst["query"], d, args.n_features) @ w for d in docs])
        errors.append(gradient_relative_error(scores, 0))
    report = {"n_checked": len(errors), "max_gradient_error": max(errors) if errors else None}
    if args.train:
        if not instances:
            raise ValueError("loss-check --train: no training instances")
        model = ToyListwiseRanker(n_features=args.n_features, epochs=args.epochs,
                                  learning_rate=args.learning_rate, random_state=args.seed).fit(instances)
        report["loss_curve"] = model.loss_curve_
        report["train_top1_accuracy"] = model.score(instances)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if report["max_gradient_error"] is None or report["max_gradient_error"] <= args.tolerance else EXIT_PRECONDITION


def _raise_interrupt(signum, frame):
    raise KeyboardInterrupt


def cmd_mock_serve(args, cfg):
    services = load_fixtures(args.fixtures)
    server = make_server(services, args.host, args.port)
    signal.signal(signal.SIGTERM, _raise_interrupt)
    print(f"serving on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="mrag-bias", description="Language-bias analysis toolkit for multilingual RAG.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out-dir", help="run directory (default: <output_root>/<hash>-<timestamp>)")
    common.add_argument("--parallelism", type=int, help="worker threads (default: CPU count)")
    common.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("chunk", parents=[common], help="split raw documents into chunks")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--units", type=int, default=100)
    p.add_argument("--char-segmented", nargs="+", default=["ja", "th", "zh"])
    p.set_defaults(func=cmd_chunk)

    for kind in ("vanilla", "oracle"):
        p = sub.add_parser(f"run-{kind}", parents=[common], help=f"{kind} RAG run")
        p.add_argument("--queries", required=True)
        p.add_argument("--chunks", required=True)
        p.add_argument("--top-k", type=int, help="retrieval depth (default from config)")
        p.add_argument("--mock-fixtures", help="serve 'local:' endpoints from in-process mocks")
        p.set_defaults(func=partial(_cmd_run, kind=kind))

    p = sub.add_parser("eval", parents=[common], help="score a run JSONL")
    p.add_argument("--runs", required=True)
    p.add_argument("--judgments")
    p.add_argument("--chunks")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("distributions", parents=[common], help="language distributions and divergences")
    p.add_argument("--vanilla", required=True)
    p.add_argument("--oracle", required=True)
    p.set_defaults(func=cmd_distributions)

    p = sub.add_parser("build-laura", parents=[common], help="construct listwise training data")
    p.add_argument("--queries", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--k-negatives", type=int)
    p.add_argument("--mode", choices=["full", "stage1-only", "self-training"], default="full")
    p.add_argument("--generators", type=lambda s: [x for x in s.split(",") if x])
    p.add_argument("--seed", type=int)
    p.add_argument("--top-k", type=int, help="retrieval depth (default 100)")
    p.add_argument("--stage1-utility", choices=["group", "document"])
    p.add_argument("--mock-fixtures")
    p.set_defaults(func=cmd_build_laura)

    p = sub.add_parser("significance", parents=[common], help="paired t-tests between two per-query TSVs")
    p.add_argument("--baseline", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("loss-check", parents=[common], help="verify listwise gradients, optional toy training")
    p.add_argument("--instances", required=True)
    p.add_argument("--n-random", type=int, default=100)
    p.add_argument("--train", action="store_true")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--n-features", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--output")
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("mock-serve", parents=[common], help="host deterministic mock services over HTTP")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--fixtures", required=True)
    p.set_defaults(func=cmd_mock_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except (FileNotFoundError, ValueError, KeyError, NotApplicableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ServiceError as exc:
        print(f"service error: {exc}", file=sys.stderr)
    return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
