"""Lexical feature map backing the toy trainable scorers.

Four features per (query, doc) pair: unique-term overlap count, a BM25
score computed against frozen corpus statistics, doc/query length ratio,
and a bias term.  Deliberately small: the toy models exist to exercise
the training losses end to end, not to rank well.
"""

from __future__ import annotations

import numpy as np

from .corpus import DocumentStore
from .lexical import Bm25Params, idf_weight, tf_weight, tokenize

FEATURE_NAMES = ("overlap", "bm25", "length_ratio", "bias")
N_FEATURES = len(FEATURE_NAMES)


class FeatureMap:
    """Deterministic (query, doc) -> feature vector, given corpus stats.

    Statistics (document frequencies, doc count, average length) are frozen
    at construction so the map stays a pure function of its text inputs.
    Terms unseen in the background corpus get df = 0.
    """

    def __init__(
        self,
        doc_freqs: dict[str, int],
        doc_count: int,
        avg_doc_length: float,
        params: Bm25Params | None = None,
    ) -> None:
        if doc_count < 1 or avg_doc_length <= 0:
            raise ValueError("feature map needs a non-empty background corpus")
        self.doc_freqs = doc_freqs
        self.doc_count = doc_count
        self.avg_doc_length = avg_doc_length
        self.params = params or Bm25Params()

    @classmethod
    def from_store(cls, store: DocumentStore, params: Bm25Params | None = None) -> "FeatureMap":
        doc_freqs: dict[str, int] = {}
        total_tokens = 0
        if store.count == 0:
            raise ValueError("feature map needs a non-empty background corpus")
        for doc in store:
            tokens = tokenize(doc.text)
            total_tokens += len(tokens)
            for term in set(tokens):
                doc_freqs[term] = doc_freqs.get(term, 0) + 1
        avg = total_tokens / store.count if total_tokens else 1.0
        return cls(doc_freqs, store.count, avg, params)

    def features(self, query_text: str, doc_text: str) -> np.ndarray:
        q_tokens = tokenize(query_text)
        d_tokens = tokenize(doc_text)
        d_counts: dict[str, int] = {}
        for t in d_tokens:
            d_counts[t] = d_counts.get(t, 0) + 1

        overlap = float(sum(1 for t in set(q_tokens) if t in d_counts))
        bm25 = 0.0
        doc_len = len(d_tokens)
        if doc_len:
            for t in q_tokens:
                tf = d_counts.get(t, 0)
                if tf == 0:
                    continue
                idf = idf_weight(self.doc_freqs.get(t, 0), self.doc_count)
                bm25 += idf * tf_weight(tf, doc_len, self.avg_doc_length, self.params)
        length_ratio = doc_len / max(len(q_tokens), 1)
        return np.array([overlap, bm25, length_ratio, 1.0], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "doc_freqs": self.doc_freqs,
            "doc_count": self.doc_count,
            "avg_doc_length": self.avg_doc_length,
            "params": {
                "saturation": self.params.saturation,
                "length_norm": self.params.length_norm,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMap":
        p = data.get("params", {})
        return cls(
            doc_freqs=dict(data["doc_freqs"]),
            doc_count=int(data["doc_count"]),
            avg_doc_length=float(data["avg_doc_length"]),
            params=Bm25Params(p.get("saturation", 0.9), p.get("length_norm", 0.4)),
        )
