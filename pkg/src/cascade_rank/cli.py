"""Command-line entry point.

Subcommands: index, search, train-toy, evaluate, sweep.  Values may come
from flags or from a flat `key = value` config file (flags win).  Progress
goes to stderr; machine-readable output goes only to the declared files or
stdout.  Exit codes: 0 ok, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import corpus, evaluation, lexical, mono, duo, pipeline, remote
from .errors import CascadeRankError
from .features import FeatureMap


class UsageError(CascadeRankError):
    """Missing/invalid flags after config merging; exits with code 2."""


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def load_config(path: str | Path) -> dict[str, str]:
    """Flat `key = value` file; '#' starts a comment, keys use dashes or
    underscores interchangeably."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise CascadeRankError(f"{path}:{lineno}: expected key = value")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


class _Options:
    """Merged view over parsed flags and the config file; flags override."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None, cast=str):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.config:
            return cast(self.config[key])
        return default

    def get_bool(self, key: str) -> bool:
        if getattr(self.args, key, False):
            return True
        return self.config.get(key, "").lower() in ("1", "true", "yes", "on")

    def get_list(self, key: str, cast=str) -> list:
        raw = self.get(key)
        if raw is None:
            return []
        if isinstance(raw, list):
            return [cast(v) for v in raw]
        return [cast(v.strip()) for v in str(raw).split(",") if v.strip()]

    def require(self, key: str, cast=str):
        value = self.get(key, cast=cast)
        if value is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
        return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="base RNG seed (default 0)")
    parser.add_argument("--threads", type=int,
                        help="parallelism bound (default: available cores)")


def _add_remote_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--remote-batch", type=int, help="max items per request")
    parser.add_argument("--remote-timeout-ms", type=int)
    parser.add_argument("--remote-retries", type=int)
    parser.add_argument("--remote-concurrency", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade-rank",
        description="Multi-stage ranking: BM25 retrieval, pointwise and "
        "pairwise re-ranking, with exact inference-cost accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build or inspect an index")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)
    p_build = index_sub.add_parser("build", help="index a collection TSV")
    p_build.add_argument("--collection", help="doc_id<TAB>text file")
    p_build.add_argument("--out", help="output index directory")
    p_build.add_argument("--k1-sat", type=float, dest="k1_sat",
                         help="BM25 saturation (default 0.9)")
    p_build.add_argument("--b", type=float, help="BM25 length norm (default 0.4)")
    p_build.add_argument("--stem", action="store_true",
                         help="apply light plural stemming")
    p_build.add_argument("--stopwords", help="stopword file, one token per line")
    _add_common(p_build)

    p_search = sub.add_parser("search", help="run the ranking pipeline")
    p_search.add_argument("--index", help="index directory")
    p_search.add_argument("--queries", help="query_id<TAB>text file")
    p_search.add_argument("--k0", type=int, help="candidates out of retrieval")
    p_search.add_argument("--k1", type=int,
                          help="pointwise keep count; 0 disables the pairwise stage")
    p_search.add_argument("--agg", choices=duo.VARIANTS, help="pairwise aggregation")
    p_search.add_argument("--sample-m", type=int, dest="sample_m",
                          help="comparisons per candidate for --agg sample")
    p_search.add_argument("--mono", help="oracle | toy:<model file> | remote:<url>")
    p_search.add_argument("--duo", help="toy:<model file> | remote:<url>")
    p_search.add_argument("--qrels", help="needed by the oracle scorer")
    p_search.add_argument("--run-out", dest="run_out", help="run file to write")
    p_search.add_argument("--ledger-out", dest="ledger_out",
                          help="per-query cost CSV to write")
    p_search.add_argument("--dump-pairs", dest="dump_pairs",
                          help="pair-probability debug CSV to write")
    p_search.add_argument("--tag", help="run tag (default cascade)")
    p_search.add_argument("--k1-sat", type=float, dest="k1_sat")
    p_search.add_argument("--b", type=float)
    _add_remote_flags(p_search)
    _add_common(p_search)

    p_train = sub.add_parser("train-toy", help="train a toy lexical scorer")
    p_train.add_argument("--pairs", help="qid<TAB>docid<TAB>label file")
    p_train.add_argument("--collection", help="doc_id<TAB>text file")
    p_train.add_argument("--queries", help="query_id<TAB>text file")
    p_train.add_argument("--out", help="model file to write")
    p_train.add_argument("--mode", choices=("mono", "duo"),
                         help="pointwise or pairwise model (default mono)")
    p_train.add_argument("--lr", type=float, help="learning rate (default 0.1)")
    p_train.add_argument("--iters", type=int, help="SGD iterations (default 200)")
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    _add_common(p_train)

    p_eval = sub.add_parser("evaluate", help="score a run file against qrels")
    p_eval.add_argument("--run", help="run file")
    p_eval.add_argument("--qrels", help="qrels file")
    p_eval.add_argument("--metric", choices=("mrr10", "map", "recall"),
                        help="print a single metric instead of the full report")
    p_eval.add_argument("--k", type=int, help="cutoff for --metric recall")
    _add_common(p_eval)

    p_sweep = sub.add_parser("sweep", help="sweep (k0, k1, method) grids")
    p_sweep.add_argument("--csv-out", dest="csv_out", help="sweep CSV to write")
    p_sweep.add_argument("--index", help="index directory")
    p_sweep.add_argument("--queries")
    p_sweep.add_argument("--qrels")
    p_sweep.add_argument("--mono", help="oracle | toy:<model file> | remote:<url>")
    p_sweep.add_argument("--duo", help="toy:<model file> | remote:<url>")
    p_sweep.add_argument("--k0", help="comma-separated k0 list")
    p_sweep.add_argument("--k1", help="comma-separated k1 list")
    p_sweep.add_argument("--methods", help="comma-separated aggregation names")
    p_sweep.add_argument("--m", help="comma-separated sample sizes")
    p_sweep.add_argument("--metric", choices=("mrr10", "map"))
    p_sweep.add_argument("--trials", type=int, help="sample trials (default 10)")
    p_sweep.add_argument("--k1-sat", type=float, dest="k1_sat")
    p_sweep.add_argument("--b", type=float)
    _add_remote_flags(p_sweep)
    _add_common(p_sweep)

    return parser


def _endpoint(opts: _Options, url: str) -> remote.ScorerEndpoint:
    return remote.ScorerEndpoint(
        base_url=url,
        timeout_ms=opts.get("remote_timeout_ms", 30_000, int),
        max_batch=opts.get("remote_batch", 64, int),
        retries=opts.get("remote_retries", 2, int),
        concurrency=opts.get("remote_concurrency", 1, int),
    )


def _build_mono_scorer(opts: _Options, spec: str, qrels: corpus.Qrels | None):
    if spec == "oracle":
        if qrels is None:
            raise CascadeRankError("--mono oracle requires --qrels")
        return mono.OraclePointwiseScorer(qrels)
    if spec.startswith("toy:"):
        return mono.ToyPointwiseModel.load(spec[4:])
    if spec.startswith("remote:"):
        return remote.RemotePointwiseScorer(_endpoint(opts, spec[7:]))
    raise CascadeRankError(f"unknown pointwise scorer spec {spec!r}")


def _build_duo_scorer(opts: _Options, spec: str):
    if spec.startswith("toy:"):
        return duo.ToyPairwiseModel.load(spec[4:])
    if spec.startswith("remote:"):
        return remote.RemotePairwiseScorer(_endpoint(opts, spec[7:]))
    raise CascadeRankError(f"unknown pairwise scorer spec {spec!r}")


class _RecordingPairwiseScorer:
    """Wraps a pairwise scorer and tees (query, i, j, p) rows to a file."""

    def __init__(self, inner, sink):
        self.inner = inner
        self.sink = sink
        self.handles_truncation = getattr(inner, "handles_truncation", False)

    def score_pairs(self, query, pairs):
        probs = self.inner.score_pairs(query, pairs)
        for (i_id, _, j_id, _), p in zip(pairs, probs):
            self.sink.write(f"{query.query_id},{i_id},{j_id},{p:.6f}\n")
        return probs


def _bm25_params(opts: _Options, defaults: lexical.Bm25Params) -> lexical.Bm25Params:
    return lexical.Bm25Params(
        saturation=opts.get("k1_sat", defaults.saturation, float),
        length_norm=opts.get("b", defaults.length_norm, float),
    )


def cmd_index_build(opts: _Options) -> int:
    collection = opts.require("collection")
    out_dir = opts.require("out")
    stopwords = None
    stopword_path = opts.get("stopwords")
    if stopword_path:
        with open(stopword_path, encoding="utf-8") as f:
            stopwords = frozenset(t.strip().lower() for t in f if t.strip())
    _log(f"ingesting {collection}")
    store = corpus.ingest_collection(collection)
    _log(f"indexing {store.count} documents")
    index = lexical.build_index(store, stem=opts.get_bool("stem"), stopwords=stopwords)
    params = _bm25_params(opts, lexical.Bm25Params())
    lexical.save_index(index, out_dir, params)
    _log(f"index written to {out_dir} "
         f"(terms={len(index.postings)}, avg_doc_len={index.avg_doc_length:.2f})")
    return 0


def cmd_search(opts: _Options) -> int:
    index, default_params = lexical.load_index(opts.require("index"))
    queries = corpus.ingest_queries(opts.require("queries"))
    qrels = None
    if opts.get("qrels"):
        qrels = corpus.ingest_qrels(opts.get("qrels"))
    k0 = opts.require("k0", int)
    k1 = opts.get("k1", 0, int)
    seed = opts.get("seed", 0, int)

    aggregation = None
    duo_scorer = None
    if k1 > 0:
        agg_name = opts.get("agg", "sum")
        aggregation = duo.AggregationMethod(
            agg_name,
            m=opts.get("sample_m", None, int) if agg_name == "sample" else None,
            seed=seed,
        )
        duo_spec = opts.get("duo")
        if duo_spec is None:
            raise CascadeRankError("--k1 > 0 requires --duo")
        duo_scorer = _build_duo_scorer(opts, duo_spec)
    mono_scorer = _build_mono_scorer(opts, opts.require("mono"), qrels)

    budget = pipeline.StageBudget(k0=k0, k1=k1, aggregation=aggregation)
    params = _bm25_params(opts, default_params)
    threads = opts.get("threads", os.cpu_count() or 1, int)

    dump_path = opts.get("dump_pairs")
    dump_file = open(dump_path, "w", encoding="utf-8") if dump_path else None
    if dump_file is not None and duo_scorer is not None:
        dump_file.write("query_id,i_doc,j_doc,p\n")
        duo_scorer = _RecordingPairwiseScorer(duo_scorer, dump_file)
        threads = 1  # keep the dump deterministic

    try:
        _log(f"searching {len(queries)} queries (k0={k0}, k1={k1})")
        results, errors = pipeline.run_query_set(
            queries, index, mono_scorer, duo_scorer, budget, params, threads
        )
    finally:
        if dump_file is not None:
            dump_file.close()

    run_out = opts.require("run_out")
    tag = opts.get("tag", "cascade")
    evaluation.write_run([r.final_list() for r in results], run_out, tag)
    _log(f"run written to {run_out} ({len(results)} queries)")

    ledger_out = opts.get("ledger_out")
    if ledger_out:
        with open(ledger_out, "w", encoding="utf-8") as f:
            f.write("query_id,h0_candidates,mono_inferences,duo_inferences,total\n")
            for r in results:
                led = r.ledger
                f.write(f"{r.r0.query_id},{led.h0_candidates},{led.mono_inferences},"
                        f"{led.duo_inferences},{led.total}\n")
        _log(f"cost ledger written to {ledger_out}")
    return 1 if errors else 0


def _read_label_file(path: str) -> list[tuple[str, str, int]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise CascadeRankError(
                    f"{path}:{lineno}: expected qid<TAB>docid<TAB>label"
                )
            qid, doc_id, label = fields
            if label not in ("0", "1"):
                raise CascadeRankError(f"{path}:{lineno}: label must be 0 or 1")
            rows.append((qid, doc_id, int(label)))
    return rows


def cmd_train_toy(opts: _Options) -> int:
    pairs = _read_label_file(opts.require("pairs"))
    store = corpus.ingest_collection(opts.require("collection"))
    queries = {q.query_id: q.text for q in corpus.ingest_queries(opts.require("queries"))}

    examples = []
    for qid, doc_id, label in pairs:
        if qid not in queries:
            raise CascadeRankError(f"training pair references unknown query {qid!r}")
        examples.append((queries[qid], store.get(doc_id).text, label))

    config = mono.TrainConfig(
        lr=opts.get("lr", 0.1, float),
        iterations=opts.get("iters", 200, int),
        batch_size=opts.get("batch_size", 16, int),
        seed=opts.get("seed", 0, int),
    )
    feature_map = FeatureMap.from_store(store)
    mode = opts.get("mode", "mono")
    _log(f"training toy {mode} model on {len(examples)} examples")
    if mode == "duo":
        model = duo.train_toy_pairwise(duo.ToyPairwiseModel(feature_map), examples, config)
    else:
        model = mono.train_toy_pointwise(mono.ToyPointwiseModel(feature_map), examples, config)
    out = opts.require("out")
    model.save(out)
    _log(f"model written to {out}")
    return 0


def cmd_evaluate(opts: _Options) -> int:
    run = evaluation.read_run(opts.require("run"))
    qrels = corpus.ingest_qrels(opts.require("qrels"))
    metric = opts.get("metric")
    if metric == "mrr10":
        print(f"{evaluation.mrr_at_10(run, qrels).value:.6f}")
    elif metric == "map":
        print(f"{evaluation.mean_average_precision(run, qrels).value:.6f}")
    elif metric == "recall":
        k = opts.get("k", 1000, int)
        print(f"{evaluation.recall_at_k(run, qrels, k).value:.6f}")
    else:
        report = evaluation.evaluate_run(run, qrels)
        for line in report.lines():
            print(line)
    return 0


def cmd_sweep(opts: _Options) -> int:
    index, default_params = lexical.load_index(opts.require("index"))
    queries = corpus.ingest_queries(opts.require("queries"))
    qrels = corpus.ingest_qrels(opts.require("qrels"))
    mono_scorer = _build_mono_scorer(opts, opts.require("mono"), qrels)

    k1s = tuple(opts.get_list("k1", int)) or (0,)
    duo_scorer = None
    if any(k1 > 0 for k1 in k1s):
        duo_spec = opts.get("duo")
        if duo_spec is None:
            raise CascadeRankError("sweep with k1 > 0 requires a duo scorer")
        duo_scorer = _build_duo_scorer(opts, duo_spec)

    grid = evaluation.SweepGrid(
        k0s=tuple(opts.get_list("k0", int)) or (1000,),
        k1s=k1s,
        methods=tuple(opts.get_list("methods")) or ("sum",),
        ms=tuple(opts.get_list("m", int)),
    )
    _log(f"sweeping k0={grid.k0s} k1={grid.k1s} methods={grid.methods}")
    points, warnings = evaluation.sweep(
        index,
        queries,
        qrels,
        mono_scorer,
        duo_scorer,
        grid,
        metric=opts.get("metric", "mrr10"),
        trials=opts.get("trials", 10, int),
        seed=opts.get("seed", 0, int),
        params=_bm25_params(opts, default_params),
        threads=opts.get("threads", os.cpu_count() or 1, int),
    )
    for w in warnings:
        _log(f"warning: {w}")
    csv_out = opts.require("csv_out")
    evaluation.write_sweep_csv(points, csv_out)
    _log(f"{len(points)} sweep points written to {csv_out}")
    return 0


_COMMANDS = {
    "search": cmd_search,
    "train-toy": cmd_train_toy,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _Options(args)
        if args.command == "index":
            return cmd_index_build(opts)
        return _COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (CascadeRankError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
