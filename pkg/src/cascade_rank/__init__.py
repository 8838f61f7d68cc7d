"""Multi-stage document ranking with exact inference-cost accounting.

Three stages: BM25 retrieval over an inverted index (H0), independent
pointwise re-ranking of the survivors (H1), and pairwise preference
re-ranking with score aggregation (H2).  Cutoffs k0/k1 trade quality
against the number of scorer inferences per query, which a CostLedger
tracks exactly.
"""

from .corpus import Document, DocumentStore, Qrels, Query, ingest_collection, ingest_qrels, ingest_queries
from .duo import AggregationMethod, PairMatrix, aggregate, enumerate_pairs, pairwise_loss, rerank_duo
from .evaluation import mean_average_precision, mrr_at_10, read_run, recall_at_k, sweep, write_run
from .lexical import Bm25Params, Candidate, InvertedIndex, RankedList, bm25_score, build_index, retrieve_top_k, tokenize
from .mono import pointwise_loss, rerank_mono
from .pipeline import CostLedger, PipelineResult, StageBudget, run_pipeline, truncate_list

__version__ = "0.1.0"
