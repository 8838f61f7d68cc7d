"""Shared fixtures: tiny corpora, scorers, and file builders."""

import random

import pytest

from cascade_rank.corpus import Document, DocumentStore, Qrels, Query


def make_store(texts: dict[str, str]) -> DocumentStore:
    store = DocumentStore()
    for doc_id, text in texts.items():
        store.add(Document(doc_id, text))
    return store


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")
    return path


class ConstantPointwise:
    """Scores every candidate the same; exposes tie-break behavior."""

    def __init__(self, value: float = 0.5):
        self.value = value

    def score_batch(self, query, items):
        return [self.value] * len(items)


class ConstantPairwise:
    def __init__(self, value: float = 0.5):
        self.value = value

    def score_pairs(self, query, pairs):
        return [self.value] * len(pairs)


class CountingPointwise:
    """Wraps a scorer and counts items actually sent to it."""

    def __init__(self, inner):
        self.inner = inner
        self.items_scored = 0
        self.calls = 0

    def score_batch(self, query, items):
        self.calls += 1
        self.items_scored += len(items)
        return self.inner.score_batch(query, items)


class CountingPairwise:
    def __init__(self, inner):
        self.inner = inner
        self.pairs_scored = 0
        self.calls = 0

    def score_pairs(self, query, pairs):
        self.calls += 1
        self.pairs_scored += len(pairs)
        return self.inner.score_pairs(query, pairs)


class SeededRandomPairwise:
    """Deterministic pseudo-random pair probabilities keyed by doc ids."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score_pairs(self, query, pairs):
        out = []
        for i_id, _, j_id, _ in pairs:
            rng = random.Random(f"{self.seed}|{query.query_id}|{i_id}|{j_id}")
            out.append(rng.random())
        return out


def random_corpus(rng: random.Random, n_docs: int, vocab: list[str],
                  min_len: int = 3, max_len: int = 12) -> DocumentStore:
    store = DocumentStore()
    for i in range(n_docs):
        length = rng.randint(min_len, max_len)
        words = [rng.choice(vocab) for _ in range(length)]
        store.add(Document(f"d{i:04d}", " ".join(words)))
    return store


def random_query(rng: random.Random, vocab: list[str], n_terms: int = 3) -> Query:
    return Query(f"q{rng.randrange(10**6)}", " ".join(rng.choice(vocab) for _ in range(n_terms)))


@pytest.fixture
def tiny_store() -> DocumentStore:
    return make_store(
        {
            "d1": "the quick brown fox",
            "d2": "the lazy dog sleeps",
            "d3": "quick quick foxes run",
            "d4": "a dog and a fox",
            "d5": "nothing in common here",
        }
    )


@pytest.fixture
def tiny_qrels() -> Qrels:
    qrels = Qrels()
    qrels.add("q1", "d1", 1)
    qrels.add("q1", "d5", 0)
    qrels.add("q2", "d4", 2)
    return qrels
