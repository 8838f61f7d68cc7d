"""First-stage retrieval: inverted index with BM25 scoring.

The index is a plain term -> postings map tuned for recall, not speed:
every returned candidate must share at least one token with the query,
and the top-k0 cut is what controls downstream latency.

BM25 variant: term-frequency saturation with the non-negative
``ln(1 + (N - df + 0.5) / (df + 0.5))`` document-frequency weight.
Defaults (saturation 0.9, length_norm 0.4) are overridable; tokenization,
stemming, and stopword choices measurably move absolute scores, so the
tokenizer applies no stemming or stopwords unless opted in.
"""

from __future__ import annotations

import heapq
import json
import math
import re
from array import array
from dataclasses import dataclass
from pathlib import Path

from .corpus import DocumentStore, Query, load_store, save_store
from .errors import ArtifactFormatError

INDEX_MAGIC = "cascade-rank-index"
INDEX_VERSION = 1

# Alphanumeric runs; underscore is a separator like any other punctuation.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(
    text: str,
    stem: bool = False,
    stopwords: frozenset[str] | None = None,
) -> list[str]:
    """Lowercase and split on any non-alphanumeric codepoint.

    Stemming (light plural stripping) and stopword removal are opt-in;
    stopwords are applied before stemming.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    if stem:
        tokens = [s_stem(t) for t in tokens]
    return tokens


def s_stem(token: str) -> str:
    """Harman S-stemmer: strips common English plural endings.

    Rules are applied first-match-only; tokens shorter than 3 characters
    pass through unchanged.
    """
    if len(token) > 4 and token.endswith("ies") and token[-4] not in ("a", "e"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("es") and token[-3] not in ("a", "e", "o"):
        return token[:-1]
    if len(token) > 2 and token.endswith("s") and token[-2] not in ("u", "s"):
        return token[:-1]
    return token


@dataclass(frozen=True)
class Bm25Params:
    """saturation: term-frequency saturation; length_norm in [0, 1]."""

    saturation: float = 0.9
    length_norm: float = 0.4

    def __post_init__(self) -> None:
        if self.saturation <= 0:
            raise ValueError(f"saturation must be > 0, got {self.saturation}")
        if not 0.0 <= self.length_norm <= 1.0:
            raise ValueError(f"length_norm must be in [0, 1], got {self.length_norm}")


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    score: float


@dataclass
class RankedList:
    """Ordered candidates produced by one pipeline stage."""

    query_id: str
    entries: list[Candidate]
    stage_label: str

    def doc_ids(self) -> list[str]:
        return [c.doc_id for c in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def idf_weight(doc_freq: int, doc_count: int) -> float:
    """Document-frequency weight; strictly positive for any df <= N."""
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


def tf_weight(tf: int, doc_len: int, avg_doc_len: float, params: Bm25Params) -> float:
    """Saturated, length-normalized term-frequency weight."""
    k, b = params.saturation, params.length_norm
    return tf * (k + 1.0) / (tf + k * (1.0 - b + b * doc_len / avg_doc_len))


class InvertedIndex:
    """Term postings plus the per-document statistics BM25 needs.

    Postings are interleaved (internal_id, tf) pairs sorted by internal id;
    internal ids follow store insertion order.  Immutable after build, so
    concurrent retrievals need no locking.  Keeps a reference to the source
    store so later stages can fetch candidate texts.
    """

    def __init__(
        self,
        store: DocumentStore | None,
        stem: bool = False,
        stopwords: frozenset[str] | None = None,
    ) -> None:
        self.postings: dict[str, array] = {}
        self.doc_lengths: array = array("q")
        self.avg_doc_length: float = 0.0
        self.doc_count: int = 0
        self.internal_to_doc: list[str] = []
        self.doc_to_internal: dict[str, int] = {}
        self.store = store
        self.stem = stem
        self.stopwords = stopwords

    def tokenize_query(self, text: str) -> list[str]:
        """Tokenize with the same settings the index was built with."""
        return tokenize(text, stem=self.stem, stopwords=self.stopwords)

    def doc_frequency(self, term: str) -> int:
        plist = self.postings.get(term)
        return len(plist) // 2 if plist is not None else 0

    def term_frequency(self, term: str, internal_id: int) -> int:
        plist = self.postings.get(term)
        if plist is None:
            return 0
        for i in range(0, len(plist), 2):
            if plist[i] == internal_id:
                return plist[i + 1]
        return 0


def build_index(
    store: DocumentStore,
    stem: bool = False,
    stopwords: frozenset[str] | None = None,
) -> InvertedIndex:
    """Build an inverted index over every document in the store."""
    if store.count == 0:
        raise ValueError("cannot index an empty store: avg_doc_length is undefined")
    index = InvertedIndex(store, stem=stem, stopwords=stopwords)
    total_tokens = 0
    for doc in store:
        internal = len(index.internal_to_doc)
        index.internal_to_doc.append(doc.doc_id)
        index.doc_to_internal[doc.doc_id] = internal
        tokens = tokenize(doc.text, stem=stem, stopwords=stopwords)
        index.doc_lengths.append(len(tokens))
        total_tokens += len(tokens)
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            index.postings.setdefault(term, array("q")).extend((internal, tf))
    index.doc_count = store.count
    index.avg_doc_length = total_tokens / store.count
    return index


def bm25_score(
    index: InvertedIndex,
    query_tokens: list[str],
    doc_internal_id: int,
    params: Bm25Params,
) -> float:
    """Score one document against query tokens.

    Repeated query tokens contribute once per occurrence; terms absent
    from the document contribute nothing.
    """
    if not 0 <= doc_internal_id < index.doc_count:
        raise ValueError(f"unknown internal doc id {doc_internal_id}")
    doc_len = index.doc_lengths[doc_internal_id]
    score = 0.0
    for term in query_tokens:
        tf = index.term_frequency(term, doc_internal_id)
        if tf == 0:
            continue
        idf = idf_weight(index.doc_frequency(term), index.doc_count)
        score += idf * tf_weight(tf, doc_len, index.avg_doc_length, params)
    return score


class _HeapEntry:
    """Min-heap ordering for bounded top-k: evict lowest score first,
    and among equal scores the lexicographically largest doc_id."""

    __slots__ = ("score", "doc_id")

    def __init__(self, score: float, doc_id: str):
        self.score = score
        self.doc_id = doc_id

    def __lt__(self, other: "_HeapEntry") -> bool:
        if self.score != other.score:
            return self.score < other.score
        return self.doc_id > other.doc_id


def retrieve_top_k(
    index: InvertedIndex,
    query: Query,
    k0: int,
    params: Bm25Params | None = None,
) -> RankedList:
    """Return up to k0 highest-BM25 documents that share a query term.

    Fewer than k0 entries means fewer matching documents exist.  A query
    that tokenizes to nothing yields an empty list, not an error.
    """
    if k0 < 1:
        raise ValueError(f"k0 must be positive, got {k0}")
    params = params or Bm25Params()
    tokens = index.tokenize_query(query.text)
    result = RankedList(query.query_id, [], "H0")
    if not tokens:
        return result

    # Term-at-a-time accumulation over matching docs only; query-token
    # multiplicity scales each term's contribution.
    qtf: dict[str, int] = {}
    for t in tokens:
        qtf[t] = qtf.get(t, 0) + 1
    accum: dict[int, float] = {}
    for term, mult in qtf.items():
        plist = index.postings.get(term)
        if plist is None:
            continue
        idf = idf_weight(len(plist) // 2, index.doc_count)
        for i in range(0, len(plist), 2):
            internal, tf = plist[i], plist[i + 1]
            w = idf * tf_weight(
                tf, index.doc_lengths[internal], index.avg_doc_length, params
            )
            accum[internal] = accum.get(internal, 0.0) + mult * w

    heap: list[_HeapEntry] = []
    for internal, score in accum.items():
        entry = _HeapEntry(score, index.internal_to_doc[internal])
        if len(heap) < k0:
            heapq.heappush(heap, entry)
        elif heap[0] < entry:
            heapq.heapreplace(heap, entry)
    ordered = sorted(heap, key=lambda e: (-e.score, e.doc_id))
    result.entries = [Candidate(e.doc_id, e.score) for e in ordered]
    return result


def save_index(index: InvertedIndex, out_dir: str | Path,
               default_params: Bm25Params | None = None) -> None:
    """Persist index + backing store to a versioned artifact directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "postings.txt", "w", encoding="utf-8") as f:
        for term in sorted(index.postings):
            plist = index.postings[term]
            pairs = " ".join(
                f"{plist[i]}:{plist[i + 1]}" for i in range(0, len(plist), 2)
            )
            f.write(f"{term}\t{pairs}\n")
    with open(out / "doclens.txt", "w", encoding="utf-8") as f:
        for internal, length in enumerate(index.doc_lengths):
            f.write(f"{internal}\t{length}\n")
    with open(out / "idmap.tsv", "w", encoding="utf-8") as f:
        for internal, doc_id in enumerate(index.internal_to_doc):
            f.write(f"{internal}\t{doc_id}\n")
    params = default_params or Bm25Params()
    manifest = {
        "magic": INDEX_MAGIC,
        "version": INDEX_VERSION,
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "stem": index.stem,
        "stopwords": sorted(index.stopwords) if index.stopwords else None,
        "default_params": {
            "saturation": params.saturation,
            "length_norm": params.length_norm,
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    if index.store is not None:
        save_store(index.store, out / "store")


def load_index(index_dir: str | Path) -> tuple[InvertedIndex, Bm25Params]:
    """Load a persisted index; returns it with its build-time default params."""
    root = Path(index_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ArtifactFormatError(f"{root}: not an index directory (no manifest.json)")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("magic") != INDEX_MAGIC:
        raise ArtifactFormatError(f"{root}: bad magic {manifest.get('magic')!r}")
    if manifest.get("version") != INDEX_VERSION:
        raise ArtifactFormatError(
            f"{root}: unsupported index version {manifest.get('version')!r}"
        )
    stopwords = manifest.get("stopwords")
    index = InvertedIndex(
        store=load_store(root / "store"),
        stem=bool(manifest.get("stem", False)),
        stopwords=frozenset(stopwords) if stopwords else None,
    )
    index.doc_count = manifest["doc_count"]
    index.avg_doc_length = manifest["avg_doc_length"]
    with open(root / "idmap.tsv", encoding="utf-8") as f:
        for line in f:
            internal_str, doc_id = line.rstrip("\n").split("\t")
            if int(internal_str) != len(index.internal_to_doc):
                raise ArtifactFormatError(f"{root}: idmap.tsv rows out of order")
            index.doc_to_internal[doc_id] = len(index.internal_to_doc)
            index.internal_to_doc.append(doc_id)
    with open(root / "doclens.txt", encoding="utf-8") as f:
        for line in f:
            _, length = line.rstrip("\n").split("\t")
            index.doc_lengths.append(int(length))
    with open(root / "postings.txt", encoding="utf-8") as f:
        for line in f:
            term, _, pairs = line.rstrip("\n").partition("\t")
            plist = array("q")
            for pair in pairs.split():
                internal, tf = pair.split(":")
                plist.extend((int(internal), int(tf)))
            index.postings[term] = plist
    p = manifest.get("default_params", {})
    params = Bm25Params(
        saturation=p.get("saturation", 0.9), length_norm=p.get("length_norm", 0.4)
    )
    return index, params
