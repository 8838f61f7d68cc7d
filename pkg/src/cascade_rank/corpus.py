"""Corpus ingestion and storage: documents, queries, relevance judgments.

Input formats are the tab-separated collection/query files and the
whitespace-separated qrels convention used by standard passage-ranking
datasets.  Text is stored verbatim; normalization is the tokenizer's job,
so downstream scorers always see the original text.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import ArtifactFormatError, IngestError

STORE_MAGIC = "cascade-rank-store"
STORE_VERSION = 1


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str


class Qrels:
    """Relevance judgments: query_id -> doc_id -> integer grade.

    A document counts as relevant when its grade is >= 1; graded judgments
    are binarized at that threshold everywhere in the package.
    """

    def __init__(self) -> None:
        self.judgments: dict[str, dict[str, int]] = {}

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise IngestError(f"negative relevance grade for ({query_id}, {doc_id})")
        by_doc = self.judgments.setdefault(query_id, {})
        if doc_id in by_doc:
            raise IngestError(f"duplicate judgment for ({query_id}, {doc_id})")
        by_doc[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int | None:
        return self.judgments.get(query_id, {}).get(doc_id)

    def is_relevant(self, query_id: str, doc_id: str) -> bool:
        return self.judgments.get(query_id, {}).get(doc_id, 0) >= 1

    def relevant_docs(self, query_id: str) -> set[str]:
        by_doc = self.judgments.get(query_id, {})
        return {d for d, g in by_doc.items() if g >= 1}

    def has_query(self, query_id: str) -> bool:
        return query_id in self.judgments

    def query_ids(self) -> list[str]:
        return list(self.judgments)


class DocumentStore:
    """Id-addressable document collection, immutable after ingest.

    Two backends share the interface: fully in-memory (built by
    ``ingest_collection``) and file-backed (built by ``load_store``, which
    reads texts on demand via positional reads, so concurrent lookups are
    safe without locking).
    """

    def __init__(self) -> None:
        self._texts: dict[str, str] | None = {}
        self._spans: dict[str, tuple[int, int]] | None = None
        self._fd: int | None = None

    @property
    def count(self) -> int:
        if self._texts is not None:
            return len(self._texts)
        return len(self._spans)

    def add(self, doc: Document) -> None:
        if self._texts is None:
            raise IngestError("file-backed store is read-only")
        if not doc.doc_id:
            raise IngestError("empty doc_id")
        if doc.doc_id in self._texts:
            raise IngestError(f"duplicate doc_id {doc.doc_id!r}")
        self._texts[doc.doc_id] = doc.text

    def get(self, doc_id: str) -> Document:
        """Look up a document; raises KeyError for unknown ids."""
        if self._texts is not None:
            if doc_id not in self._texts:
                raise KeyError(f"unknown doc_id {doc_id!r}")
            return Document(doc_id, self._texts[doc_id])
        if doc_id not in self._spans:
            raise KeyError(f"unknown doc_id {doc_id!r}")
        offset, length = self._spans[doc_id]
        line = os.pread(self._fd, length, offset).decode("utf-8")
        _, _, text = line.rstrip("\n").partition("\t")
        return Document(doc_id, text)

    def __contains__(self, doc_id: str) -> bool:
        table = self._texts if self._texts is not None else self._spans
        return doc_id in table

    def doc_ids(self) -> list[str]:
        table = self._texts if self._texts is not None else self._spans
        return list(table)

    def __iter__(self) -> Iterator[Document]:
        for doc_id in self.doc_ids():
            yield self.get(doc_id)

    def __len__(self) -> int:
        return self.count


def ingest_collection(path: str | Path, fmt: str = "tsv") -> DocumentStore:
    """Load a `doc_id<TAB>text` collection file into a DocumentStore.

    Rejects lines with the wrong field count and duplicate doc_ids,
    naming the offending line/id.
    """
    if fmt != "tsv":
        raise ValueError(f"unsupported collection format {fmt!r}")
    store = DocumentStore()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise IngestError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}"
                )
            doc_id, text = fields
            if not doc_id:
                raise IngestError(f"{path}:{lineno}: empty doc_id")
            try:
                store.add(Document(doc_id, text))
            except IngestError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    return store


def ingest_queries(path: str | Path) -> list[Query]:
    """Load a `query_id<TAB>text` file, preserving file order."""
    queries: list[Query] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise IngestError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}"
                )
            query_id, text = fields
            if not query_id:
                raise IngestError(f"{path}:{lineno}: empty query_id")
            if query_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate query_id {query_id!r}")
            seen.add(query_id)
            queries.append(Query(query_id, text))
    return queries


def ingest_qrels(path: str | Path) -> Qrels:
    """Load `qid 0 docid grade` judgments (whitespace-separated).

    The second column is ignored, per the usual qrels convention.
    """
    qrels = Qrels()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if len(fields) != 4:
                raise IngestError(
                    f"{path}:{lineno}: expected 4 whitespace-separated fields, got {len(fields)}"
                )
            query_id, _, doc_id, grade_str = fields
            try:
                grade = int(grade_str)
            except ValueError:
                raise IngestError(
                    f"{path}:{lineno}: non-integer relevance grade {grade_str!r}"
                ) from None
            try:
                qrels.add(query_id, doc_id, grade)
            except IngestError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    return qrels


def save_store(store: DocumentStore, out_dir: str | Path) -> None:
    """Persist a store as a rebuildable artifact directory.

    Layout: documents.tsv (verbatim rows), offsets.tsv (doc_id, byte
    offset, byte length), manifest.json with a magic header so stale or
    foreign directories are rejected on load instead of misread.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spans: list[tuple[str, int, int]] = []
    with open(out / "documents.tsv", "wb") as f:
        for doc in store:
            if "\t" in doc.text or "\n" in doc.text:
                raise IngestError(
                    f"doc {doc.doc_id!r} contains a tab/newline and cannot be "
                    "stored as TSV"
                )
            row = f"{doc.doc_id}\t{doc.text}\n".encode("utf-8")
            spans.append((doc.doc_id, f.tell(), len(row)))
            f.write(row)
    with open(out / "offsets.tsv", "w", encoding="utf-8") as f:
        for doc_id, offset, length in spans:
            f.write(f"{doc_id}\t{offset}\t{length}\n")
    manifest = {"magic": STORE_MAGIC, "version": STORE_VERSION, "count": store.count}
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True)
        f.write("\n")


def load_store(store_dir: str | Path) -> DocumentStore:
    """Open a persisted store; document texts are read lazily."""
    root = Path(store_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ArtifactFormatError(f"{root}: not a store directory (no manifest.json)")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("magic") != STORE_MAGIC:
        raise ArtifactFormatError(f"{root}: bad magic {manifest.get('magic')!r}")
    if manifest.get("version") != STORE_VERSION:
        raise ArtifactFormatError(
            f"{root}: unsupported store version {manifest.get('version')!r}"
        )
    store = DocumentStore()
    spans: dict[str, tuple[int, int]] = {}
    with open(root / "offsets.tsv", encoding="utf-8") as f:
        for line in f:
            doc_id, offset, length = line.rstrip("\n").split("\t")
            spans[doc_id] = (int(offset), int(length))
    store._texts = None
    store._spans = spans
    store._fd = os.open(root / "documents.tsv", os.O_RDONLY)
    return store
