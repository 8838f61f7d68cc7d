"""Stage orchestration and inference-cost accounting.

Runs H0 (BM25 retrieval) -> H1 (pointwise re-rank) -> H2 (pairwise
re-rank) for one query at a time, enforcing the cutoff chain
k1 <= k0 and counting exactly how many scorer invocations each stage
consumed.  Stages only reorder or truncate; no stage may introduce a
document the previous stage did not pass down.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import Query
from .duo import AggregationMethod, PairwiseScorer, rerank_duo
from .errors import StageError
from .lexical import Bm25Params, InvertedIndex, RankedList, retrieve_top_k
from .mono import PointwiseScorer, rerank_mono


@dataclass(frozen=True)
class StageBudget:
    """Per-stage cutoffs: k0 candidates out of retrieval, k1 kept by the
    pointwise stage and handed to the pairwise stage (k1 = 0 disables the
    pairwise stage and the pointwise stage keeps everything)."""

    k0: int
    k1: int = 0
    aggregation: AggregationMethod | None = None

    def __post_init__(self) -> None:
        if self.k0 < 1:
            raise ValueError(f"k0 must be positive, got {self.k0}")
        if self.k1 < 0:
            raise ValueError(f"k1 must be non-negative, got {self.k1}")
        if self.k1 > self.k0:
            raise ValueError(f"k1 ({self.k1}) must not exceed k0 ({self.k0})")
        if self.k1 > 0 and self.aggregation is None:
            raise ValueError("k1 > 0 requires an aggregation method")


@dataclass
class CostLedger:
    """Scorer invocations per stage for one query.  Postings traversal in
    H0 is not an inference and is never counted."""

    h0_candidates: int = 0
    mono_inferences: int = 0
    duo_inferences: int = 0

    @property
    def total(self) -> int:
        return self.mono_inferences + self.duo_inferences


@dataclass
class PipelineResult:
    r0: RankedList
    r1: RankedList
    r2: RankedList | None
    ledger: CostLedger = field(default_factory=CostLedger)

    def final_list(self) -> RankedList:
        return self.r2 if self.r2 is not None else self.r1


def truncate_list(ranked: RankedList, k: int) -> RankedList:
    """First min(k, len) entries, order preserved."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    return RankedList(ranked.query_id, ranked.entries[:k], ranked.stage_label)


def run_pipeline(
    query: Query,
    index: InvertedIndex,
    mono: PointwiseScorer,
    duo: PairwiseScorer | None,
    budget: StageBudget,
    params: Bm25Params | None = None,
) -> PipelineResult:
    """Run all stages for one query.

    A scorer failure raises StageError carrying the stage label and
    query_id, so batch drivers can drop that query and keep going.
    Fewer than two pointwise survivors makes the pairwise stage the
    identity (there are no pairs to score).
    """
    if (duo is not None) != (budget.k1 > 0):
        raise ValueError("pairwise scorer must be supplied exactly when k1 > 0")
    if index.store is None:
        raise ValueError("index has no document store attached")
    ledger = CostLedger()

    r0 = retrieve_top_k(index, query, budget.k0, params)
    ledger.h0_candidates = len(r0.entries)

    keep = budget.k1 if budget.k1 > 0 else len(r0.entries)
    truncate = not getattr(mono, "handles_truncation", False)
    try:
        r1 = rerank_mono(mono, query, r0, keep, index.store, truncate=truncate)
    except Exception as exc:
        raise StageError("H1", query.query_id, str(exc)) from exc
    ledger.mono_inferences = len(r0.entries)

    r2 = None
    if budget.k1 > 0:
        truncate = not getattr(duo, "handles_truncation", False)
        try:
            r2, pairs_scored = rerank_duo(
                duo, query, r1, budget.aggregation, index.store, truncate=truncate
            )
        except Exception as exc:
            raise StageError("H2", query.query_id, str(exc)) from exc
        ledger.duo_inferences = pairs_scored

    return PipelineResult(r0, r1, r2, ledger)


def run_query_set(
    queries: list[Query],
    index: InvertedIndex,
    mono: PointwiseScorer,
    duo: PairwiseScorer | None,
    budget: StageBudget,
    params: Bm25Params | None = None,
    threads: int = 1,
) -> tuple[list[PipelineResult], list[StageError]]:
    """Run the pipeline over a query set; queries are independent.

    Results come back in input order regardless of thread interleaving.
    A query whose stage failed is reported, not retried, and produces no
    result.
    """
    errors: list[StageError] = []
    results: list[PipelineResult] = []

    def one(query: Query) -> PipelineResult | StageError:
        try:
            return run_pipeline(query, index, mono, duo, budget, params)
        except StageError as exc:
            return exc

    if threads <= 1:
        outcomes = [one(q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, queries))
    for outcome in outcomes:
        if isinstance(outcome, StageError):
            print(f"warning: {outcome}", file=sys.stderr)
            errors.append(outcome)
        else:
            results.append(outcome)
    return results, errors
