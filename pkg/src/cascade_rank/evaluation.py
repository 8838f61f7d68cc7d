"""Ranking metrics, TREC-format run files, and the tradeoff sweep harness.

Metrics follow the usual run-centric convention: a query is evaluated
only if it appears in the run and has at least one relevant document in
the qrels; everything else is excluded from the mean and reported back.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from statistics import mean
from typing import Sequence

from .corpus import Qrels, Query
from .duo import AggregationMethod, PairwiseScorer
from .errors import RunFormatError
from .lexical import Bm25Params, InvertedIndex, RankedList
from .mono import PointwiseScorer
from .pipeline import StageBudget, run_query_set
from .util import derive_seed


@dataclass(frozen=True)
class RunRow:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


class RunFile:
    """Per-query ranked rows; ranks contiguous from 1, scores
    non-increasing, doc_ids distinct, queries grouped."""

    def __init__(self) -> None:
        self.queries: dict[str, list[RunRow]] = {}

    @classmethod
    def from_ranked_lists(cls, lists: Sequence[RankedList], tag: str) -> "RunFile":
        run = cls()
        for ranked in lists:
            rows = [
                RunRow(ranked.query_id, c.doc_id, rank, c.score, tag)
                for rank, c in enumerate(ranked.entries, 1)
            ]
            if ranked.query_id in run.queries:
                raise RunFormatError(f"duplicate query {ranked.query_id!r} in run")
            run.queries[ranked.query_id] = rows
        return run

    def query_ids(self) -> list[str]:
        return list(self.queries)

    def __len__(self) -> int:
        return sum(len(rows) for rows in self.queries.values())


def write_run(lists: Sequence[RankedList], path: str | Path, tag: str) -> RunFile:
    """Write ranked lists in the standard 6-column exchange format:
    `qid Q0 docid rank score tag`, scores with 6 decimal places."""
    run = RunFile.from_ranked_lists(lists, tag)
    with open(path, "w", encoding="utf-8") as f:
        for rows in run.queries.values():
            for row in rows:
                f.write(
                    f"{row.query_id} Q0 {row.doc_id} {row.rank} {row.score:.6f} {row.tag}\n"
                )
    return run


def read_run(path: str | Path) -> RunFile:
    """Parse and validate a run file; any violation names the line."""
    run = RunFile()
    finished: set[str] = set()
    current: str | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if len(fields) != 6:
                raise RunFormatError(
                    f"{path}:{lineno}: expected 6 fields, got {len(fields)}"
                )
            qid, _, doc_id, rank_str, score_str, tag = fields
            try:
                rank = int(rank_str)
                score = float(score_str)
            except ValueError:
                raise RunFormatError(
                    f"{path}:{lineno}: bad rank/score {rank_str!r} {score_str!r}"
                ) from None
            if qid != current:
                if qid in finished:
                    raise RunFormatError(
                        f"{path}:{lineno}: rows for query {qid!r} are not grouped"
                    )
                if current is not None:
                    finished.add(current)
                current = qid
                run.queries[qid] = []
            rows = run.queries[qid]
            if rank != len(rows) + 1:
                raise RunFormatError(
                    f"{path}:{lineno}: rank {rank} not contiguous from 1 for query {qid!r}"
                )
            if rows and score > rows[-1].score:
                raise RunFormatError(
                    f"{path}:{lineno}: score increases within query {qid!r}"
                )
            if any(r.doc_id == doc_id for r in rows):
                raise RunFormatError(
                    f"{path}:{lineno}: duplicate doc {doc_id!r} in query {qid!r}"
                )
            rows.append(RunRow(qid, doc_id, rank, score, tag))
    return run


@dataclass
class MetricResult:
    value: float
    per_query: dict[str, float]
    skipped: list[str]


def mrr_at_10(run: RunFile, qrels: Qrels) -> MetricResult:
    """Reciprocal rank of the first relevant doc within the top 10, else 0.

    Per-query values can only take the 11 values {0, 1/10, ..., 1/2, 1}.
    """
    per_query: dict[str, float] = {}
    skipped: list[str] = []
    for qid, rows in run.queries.items():
        relevant = qrels.relevant_docs(qid)
        if not relevant:
            skipped.append(qid)
            continue
        value = 0.0
        for row in rows[:10]:
            if row.doc_id in relevant:
                value = 1.0 / row.rank
                break
        per_query[qid] = value
    return MetricResult(
        mean(per_query.values()) if per_query else 0.0, per_query, skipped
    )


def mean_average_precision(run: RunFile, qrels: Qrels) -> MetricResult:
    """AP per query = mean over all relevant docs of precision at the rank
    where each was retrieved (0 for relevant docs never retrieved)."""
    per_query: dict[str, float] = {}
    skipped: list[str] = []
    for qid, rows in run.queries.items():
        relevant = qrels.relevant_docs(qid)
        if not relevant:
            skipped.append(qid)
            continue
        hits = 0
        precision_sum = 0.0
        for row in rows:
            if row.doc_id in relevant:
                hits += 1
                precision_sum += hits / row.rank
        per_query[qid] = precision_sum / len(relevant)
    return MetricResult(
        mean(per_query.values()) if per_query else 0.0, per_query, skipped
    )


def recall_at_k(run: RunFile, qrels: Qrels, k: int) -> MetricResult:
    """Fraction of a query's relevant docs found in its top k, averaged."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    per_query: dict[str, float] = {}
    skipped: list[str] = []
    for qid, rows in run.queries.items():
        relevant = qrels.relevant_docs(qid)
        if not relevant:
            skipped.append(qid)
            continue
        found = sum(1 for row in rows[:k] if row.doc_id in relevant)
        per_query[qid] = found / len(relevant)
    return MetricResult(
        mean(per_query.values()) if per_query else 0.0, per_query, skipped
    )


@dataclass
class MetricReport:
    """All metrics for one run, exposed both as [0, 1] fractions and in
    the conventional x100 reporting scale."""

    mrr_at_10: float
    map: float
    recall: dict[int, float]
    per_query: dict[str, dict[str, float]]
    skipped: list[str]

    def lines(self) -> list[str]:
        out = [
            f"mrr@10   {self.mrr_at_10:.6f}  ({self.mrr_at_10 * 100:.2f} x100)",
            f"map      {self.map:.6f}  ({self.map * 100:.2f} x100)",
        ]
        for k in sorted(self.recall):
            v = self.recall[k]
            out.append(f"recall@{k}  {v:.6f}  ({v * 100:.2f} x100)")
        if self.skipped:
            out.append(f"skipped (no relevant docs in qrels): {len(self.skipped)} queries")
        return out


def evaluate_run(
    run: RunFile, qrels: Qrels, recall_ks: Sequence[int] = (10, 1000)
) -> MetricReport:
    mrr = mrr_at_10(run, qrels)
    ap = mean_average_precision(run, qrels)
    recall = {k: recall_at_k(run, qrels, k) for k in recall_ks}
    per_query: dict[str, dict[str, float]] = {}
    for qid in mrr.per_query:
        per_query[qid] = {"mrr@10": mrr.per_query[qid], "map": ap.per_query[qid]}
        for k in recall:
            per_query[qid][f"recall@{k}"] = recall[k].per_query[qid]
    return MetricReport(
        mrr_at_10=mrr.value,
        map=ap.value,
        recall={k: r.value for k, r in recall.items()},
        per_query=per_query,
        skipped=mrr.skipped,
    )


@dataclass(frozen=True)
class SweepGrid:
    k0s: tuple[int, ...]
    k1s: tuple[int, ...]
    methods: tuple[str, ...]
    ms: tuple[int, ...] = ()


@dataclass
class SweepPoint:
    k0: int
    k1: int
    method: str
    m: int | None
    trials: int
    inferences_per_query: float
    metric_value: float


SWEEP_CSV_HEADER = "k0,k1,method,m,trials,inferences_per_query,metric"


def sweep(
    index: InvertedIndex,
    queries: list[Query],
    qrels: Qrels,
    mono: PointwiseScorer,
    duo: PairwiseScorer | None,
    grid: SweepGrid,
    metric: str = "mrr10",
    trials: int = 10,
    seed: int = 0,
    params: Bm25Params | None = None,
    threads: int = 1,
) -> tuple[list[SweepPoint], list[str]]:
    """Run the pipeline over every (k0, k1, method[, m]) grid cell.

    Cells with k1 > k0 are skipped and reported.  Sample cells are
    averaged over `trials` runs with per-trial seeds derived from the base
    seed; the recorded cost is the actual number of scorer invocations
    (k1 * m pair scores per query), not a nominal formula.
    """
    if metric not in ("mrr10", "map"):
        raise ValueError(f"unknown sweep metric {metric!r}")
    points: list[SweepPoint] = []
    warnings: list[str] = []

    def run_cell(k0: int, k1: int, method: AggregationMethod | None) -> tuple[float, float]:
        budget = StageBudget(k0=k0, k1=k1, aggregation=method)
        results, errors = run_query_set(
            queries, index, mono, duo if k1 > 0 else None, budget, params, threads
        )
        if errors:
            warnings.extend(str(e) for e in errors)
        run = RunFile.from_ranked_lists([r.final_list() for r in results], "sweep")
        value = (
            mrr_at_10(run, qrels).value
            if metric == "mrr10"
            else mean_average_precision(run, qrels).value
        )
        cost = mean(r.ledger.total for r in results) if results else 0.0
        return value, cost

    for k0 in grid.k0s:
        for method_name in grid.methods:
            for k1 in grid.k1s:
                if k1 > k0:
                    warnings.append(f"skipping infeasible cell k0={k0} k1={k1}")
                    continue
                if method_name == "sample" and k1 > 0:
                    for m in grid.ms or (k1 - 1,):
                        values, costs = [], []
                        for trial in range(trials):
                            method = AggregationMethod(
                                "sample", m=m, seed=derive_seed(seed, trial)
                            )
                            v, c = run_cell(k0, k1, method)
                            values.append(v)
                            costs.append(c)
                        points.append(
                            SweepPoint(k0, k1, method_name, m, trials,
                                       mean(costs), mean(values))
                        )
                else:
                    method = (
                        AggregationMethod(method_name, m=None, seed=seed)
                        if k1 > 0
                        else None
                    )
                    v, c = run_cell(k0, k1, method)
                    m_rec = None
                    if method_name == "sample":
                        # k1 = 0: the pairwise stage is off, m is moot.
                        m_rec = None
                    points.append(SweepPoint(k0, k1, method_name, m_rec, 1, c, v))
    return points, warnings


def write_sweep_csv(points: Sequence[SweepPoint], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(SWEEP_CSV_HEADER + "\n")
        for p in points:
            m = "" if p.m is None else str(p.m)
            f.write(
                f"{p.k0},{p.k1},{p.method},{m},{p.trials},"
                f"{p.inferences_per_query:.6f},{p.metric_value:.6f}\n"
            )
