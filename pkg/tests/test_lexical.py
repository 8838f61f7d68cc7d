"""Tokenizer, index construction, BM25 scoring, and top-k retrieval.

The BM25 oracle here is an independent re-implementation working straight
from raw texts with collections.Counter; it never touches the package's
index structures.
"""

import math
import random
import re
from collections import Counter

import pytest

from cascade_rank.corpus import Query
from cascade_rank.errors import ArtifactFormatError
from cascade_rank.lexical import (
    Bm25Params,
    bm25_score,
    build_index,
    load_index,
    retrieve_top_k,
    s_stem,
    save_index,
    tokenize,
)

from conftest import make_store, random_corpus, random_query


def oracle_tokenize(text):
    return re.findall(r"[^\W_]+", text.lower())


def oracle_bm25(texts: dict[str, str], query_tokens, doc_id, saturation, length_norm):
    """Brute-force BM25 from first principles over raw texts."""
    docs = {d: oracle_tokenize(t) for d, t in texts.items()}
    n = len(docs)
    avgdl = sum(len(toks) for toks in docs.values()) / n
    doc_tokens = docs[doc_id]
    tf = Counter(doc_tokens)
    score = 0.0
    for term in query_tokens:
        if tf[term] == 0:
            continue
        df = sum(1 for toks in docs.values() if term in toks)
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        f = tf[term]
        norm = saturation * (1 - length_norm + length_norm * len(doc_tokens) / avgdl)
        score += idf * f * (saturation + 1) / (f + norm)
    return score


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("Killing The Blues") == ["killing", "the", "blues"]

    def test_empty(self):
        assert tokenize("") == []

    def test_separator_collapse(self):
        assert tokenize("low-liver  enzymes!") == ["low", "liver", "enzymes"]

    def test_underscore_is_separator(self):
        assert tokenize("foo_bar") == ["foo", "bar"]

    def test_digits_kept(self):
        assert tokenize("top-50 BERTs") == ["top", "50", "berts"]

    def test_stopwords_then_stem(self):
        assert tokenize("the foxes run", stopwords=frozenset({"the"}), stem=True) == [
            "foxe",
            "run",
        ]

    def test_s_stem_rules(self):
        assert s_stem("queries") == "query"
        assert s_stem("caches") == "cache"
        assert s_stem("dogs") == "dog"
        assert s_stem("corpus") == "corpus"  # -us kept
        assert s_stem("boss") == "boss"  # -ss kept
        assert s_stem("is") == "is"  # too short


class TestBuildIndex:
    def test_single_doc_counts(self):
        index = build_index(make_store({"d0": "a b a"}))
        assert dict(zip(index.postings["a"][::2], index.postings["a"][1::2])) == {0: 2}
        assert dict(zip(index.postings["b"][::2], index.postings["b"][1::2])) == {0: 1}
        assert index.avg_doc_length == 3
        assert index.doc_lengths[0] == 3

    def test_two_docs(self):
        index = build_index(make_store({"d1": "a", "d2": "b"}))
        assert index.doc_count == 2
        assert index.avg_doc_length == 1

    def test_empty_store_rejected(self):
        from cascade_rank.corpus import DocumentStore

        with pytest.raises(ValueError, match="empty"):
            build_index(DocumentStore())

    def test_postings_sorted_by_internal_id(self, tiny_store):
        index = build_index(tiny_store)
        for plist in index.postings.values():
            ids = plist[::2]
            assert list(ids) == sorted(ids)
            assert all(tf >= 1 for tf in plist[1::2])

    def test_avg_doc_length_is_mean(self, tiny_store):
        index = build_index(tiny_store)
        assert index.avg_doc_length == pytest.approx(
            sum(index.doc_lengths) / index.doc_count
        )


class TestBm25Score:
    def test_no_overlap_scores_zero(self, tiny_store):
        index = build_index(tiny_store)
        assert bm25_score(index, ["zebra"], 0, Bm25Params()) == 0.0

    def test_single_doc_hand_formula(self):
        # N=1, df=1, tf=1, doclen=avgdl=1: idf = ln(4/3), tf part = 1
        index = build_index(make_store({"d0": "a"}))
        got = bm25_score(index, ["a"], 0, Bm25Params(saturation=0.9, length_norm=0.4))
        idf = math.log(1 + (1 - 1 + 0.5) / (1 + 0.5))
        tf_part = 1 * (0.9 + 1) / (1 + 0.9 * (1 - 0.4 + 0.4 * 1 / 1))
        assert got == pytest.approx(idf * tf_part, abs=1e-12)
        assert got == pytest.approx(0.2876820724517809, abs=1e-12)

    def test_five_doc_fixture_matches_oracle(self):
        texts = {
            "d1": "apple banana apple",
            "d2": "banana cherry cherry cherry",
            "d3": "apple apple apple apple date",
            "d4": "elderberry fig",
            "d5": "apple banana cherry date elderberry fig grape",
        }
        index = build_index(make_store(texts))
        params = Bm25Params(saturation=0.9, length_norm=0.4)
        query = ["apple", "cherry", "grape"]
        for doc_id, internal in index.doc_to_internal.items():
            expected = oracle_bm25(texts, query, doc_id, 0.9, 0.4)
            assert bm25_score(index, query, internal, params) == pytest.approx(
                expected, abs=1e-6
            )

    def test_repeated_query_tokens_add_per_occurrence(self, tiny_store):
        index = build_index(tiny_store)
        params = Bm25Params()
        internal = index.doc_to_internal["d1"]
        single = bm25_score(index, ["fox"], internal, params)
        double = bm25_score(index, ["fox", "fox"], internal, params)
        assert double == pytest.approx(2 * single, rel=1e-12)

    def test_unknown_doc_rejected(self, tiny_store):
        index = build_index(tiny_store)
        with pytest.raises(ValueError, match="unknown"):
            bm25_score(index, ["fox"], 99, Bm25Params())

    def test_tf_monotonicity(self):
        # more occurrences of a query term never lower the score
        params = Bm25Params()
        scores = []
        for tf in range(1, 6):
            texts = {"dx": " ".join(["term"] * tf + ["pad"] * (8 - tf))}
            texts.update({f"bg{i}": "pad filler words" for i in range(4)})
            index = build_index(make_store(texts))
            scores.append(bm25_score(index, ["term"], 0, params))
        assert scores == sorted(scores)


class TestRetrieveTopK:
    def test_k0_five_pipeline_entry(self, tiny_store):
        # all five docs share a term with this query
        index = build_index(tiny_store)
        result = retrieve_top_k(index, Query("q", "the quick dog nothing a"), 5)
        assert len(result.entries) == 5
        assert result.stage_label == "H0"

    def test_admission_limits_results(self, tiny_store):
        index = build_index(tiny_store)
        result = retrieve_top_k(index, Query("q", "fox"), 1000)
        assert sorted(result.doc_ids()) == ["d1", "d4"]  # "foxes" does not match unstemmed

    def test_k0_one_returns_argmax(self, tiny_store):
        index = build_index(tiny_store)
        params = Bm25Params()
        result = retrieve_top_k(index, Query("q", "quick fox"), 1, params)
        ranked = sorted(
            (
                (doc_id, bm25_score(index, ["quick", "fox"], internal, params))
                for doc_id, internal in index.doc_to_internal.items()
            ),
            key=lambda kv: (-kv[1], kv[0]),
        )
        assert result.doc_ids() == [ranked[0][0]]

    def test_empty_query_empty_list(self, tiny_store):
        index = build_index(tiny_store)
        result = retrieve_top_k(index, Query("q", "!!!"), 10)
        assert result.entries == []

    def test_every_candidate_shares_a_token(self, tiny_store):
        index = build_index(tiny_store)
        q = Query("q", "fox dog")
        for cand in retrieve_top_k(index, q, 10).entries:
            doc_tokens = set(tokenize(tiny_store.get(cand.doc_id).text))
            assert doc_tokens & {"fox", "dog"}

    def test_sorted_descending_with_doc_id_ties(self, tiny_store):
        index = build_index(tiny_store)
        result = retrieve_top_k(index, Query("q", "the quick dog a"), 5)
        scores = [c.score for c in result.entries]
        assert scores == sorted(scores, reverse=True)
        for a, b in zip(result.entries, result.entries[1:]):
            if a.score == b.score:
                assert a.doc_id < b.doc_id

    def test_matches_exhaustive_sort_on_random_corpora(self):
        rng = random.Random(7)
        vocab = [f"w{i}" for i in range(40)]
        params = Bm25Params()
        for trial in range(20):
            store = random_corpus(rng, rng.randint(5, 60), vocab)
            index = build_index(store)
            query = random_query(rng, vocab, rng.randint(1, 4))
            k0 = rng.randint(1, 15)
            got = retrieve_top_k(index, query, k0, params)

            tokens = tokenize(query.text)
            matching = []
            for doc_id, internal in index.doc_to_internal.items():
                doc_tokens = set(tokenize(store.get(doc_id).text))
                if doc_tokens & set(tokens):
                    matching.append(
                        (doc_id, bm25_score(index, tokens, internal, params))
                    )
            matching.sort(key=lambda kv: (-kv[1], kv[0]))
            expected = matching[:k0]
            assert got.doc_ids() == [d for d, _ in expected]
            for cand, (_, score) in zip(got.entries, expected):
                assert cand.score == pytest.approx(score, abs=1e-12)


class TestIndexPersistence:
    def test_roundtrip(self, tiny_store, tmp_path):
        index = build_index(tiny_store)
        save_index(index, tmp_path / "idx", Bm25Params(1.2, 0.75))
        loaded, params = load_index(tmp_path / "idx")
        assert params == Bm25Params(1.2, 0.75)
        assert loaded.doc_count == index.doc_count
        assert loaded.avg_doc_length == pytest.approx(index.avg_doc_length)
        assert {t: list(p) for t, p in loaded.postings.items()} == {
            t: list(p) for t, p in index.postings.items()
        }
        q = Query("q", "quick fox")
        assert retrieve_top_k(loaded, q, 5).doc_ids() == retrieve_top_k(index, q, 5).doc_ids()

    def test_tokenizer_settings_persist(self, tmp_path):
        store = make_store({"d1": "the foxes run", "d2": "the dog walks"})
        index = build_index(store, stem=True, stopwords=frozenset({"the"}))
        save_index(index, tmp_path / "idx")
        loaded, _ = load_index(tmp_path / "idx")
        assert loaded.stem is True
        assert loaded.stopwords == frozenset({"the"})
        assert "the" not in loaded.postings
        assert "foxe" in loaded.postings

    def test_bad_magic_rejected(self, tiny_store, tmp_path):
        save_index(build_index(tiny_store), tmp_path / "idx")
        manifest = (tmp_path / "idx" / "manifest.json").read_text()
        (tmp_path / "idx" / "manifest.json").write_text(
            manifest.replace("cascade-rank-index", "other-tool")
        )
        with pytest.raises(ArtifactFormatError, match="magic"):
            load_index(tmp_path / "idx")
