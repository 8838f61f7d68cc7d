"""Metrics, run-file IO, and the sweep harness.

The reference evaluator below works from plain dicts of ranked doc ids
and relevant-id sets, written without reference to the package code.
"""

import random

import pytest

from cascade_rank.corpus import Qrels, Query
from cascade_rank.errors import RunFormatError
from cascade_rank.evaluation import (
    SWEEP_CSV_HEADER,
    RunFile,
    SweepGrid,
    evaluate_run,
    mean_average_precision,
    mrr_at_10,
    read_run,
    recall_at_k,
    sweep,
    write_run,
    write_sweep_csv,
)
from cascade_rank.lexical import build_index
from cascade_rank.mono import OraclePointwiseScorer

from conftest import ConstantPairwise
from test_mono import ranked
from test_pipeline import shared_term_corpus


def ref_mrr10(ranking: list[str], relevant: set[str]) -> float:
    for pos, doc in enumerate(ranking[:10], start=1):
        if doc in relevant:
            return 1.0 / pos
    return 0.0


def ref_ap(ranking: list[str], relevant: set[str]) -> float:
    hits, total = 0, 0.0
    for pos, doc in enumerate(ranking, start=1):
        if doc in relevant:
            hits += 1
            total += hits / pos
    return total / len(relevant)


def ref_recall(ranking: list[str], relevant: set[str], k: int) -> float:
    return len(set(ranking[:k]) & relevant) / len(relevant)


def build_run(rankings: dict[str, list[str]]) -> RunFile:
    lists = [ranked(qid, docs) for qid, docs in rankings.items()]
    return RunFile.from_ranked_lists(lists, "test")


def build_qrels(relevant: dict[str, set[str]]) -> Qrels:
    qrels = Qrels()
    for qid, docs in relevant.items():
        for doc in docs:
            qrels.add(qid, doc, 1)
    return qrels


class TestRunFileIO:
    def test_exact_row_format(self, tmp_path):
        lists = [ranked("q1", ["d9"], scores=[3.14159265])]
        path = tmp_path / "run.txt"
        write_run(lists, path, "cascade")
        assert path.read_text() == "q1 Q0 d9 1 3.141593 cascade\n"

    def test_write_read_roundtrip(self, tmp_path):
        lists = [
            ranked("q1", ["d2", "d7", "d1"], scores=[0.9, 0.5, 0.5]),
            ranked("q2", ["d3"], scores=[1.25]),
        ]
        path = tmp_path / "run.txt"
        write_run(lists, path, "tag1")
        run = read_run(path)
        assert run.query_ids() == ["q1", "q2"]
        assert [r.doc_id for r in run.queries["q1"]] == ["d2", "d7", "d1"]
        assert [r.rank for r in run.queries["q1"]] == [1, 2, 3]
        assert run.queries["q2"][0].score == pytest.approx(1.25)

    def test_non_contiguous_ranks_rejected(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.9 t\nq1 Q0 d2 3 0.5 t\n")
        with pytest.raises(RunFormatError, match="contiguous"):
            read_run(path)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.9 t\nq1 d2 2 0.5\n")
        with pytest.raises(RunFormatError, match=":2"):
            read_run(path)

    def test_increasing_score_rejected(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.5 t\nq1 Q0 d2 2 0.9 t\n")
        with pytest.raises(RunFormatError, match="score"):
            read_run(path)

    def test_duplicate_doc_rejected(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("q1 Q0 d1 1 0.9 t\nq1 Q0 d1 2 0.5 t\n")
        with pytest.raises(RunFormatError, match="duplicate"):
            read_run(path)

    def test_ungrouped_query_rejected(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text(
            "q1 Q0 d1 1 0.9 t\nq2 Q0 d2 1 0.9 t\nq1 Q0 d3 2 0.5 t\n"
        )
        with pytest.raises(RunFormatError, match="grouped"):
            read_run(path)


class TestMrrAt10:
    def test_rank_one(self):
        run = build_run({"q1": ["d1", "d2"]})
        qrels = build_qrels({"q1": {"d1"}})
        assert mrr_at_10(run, qrels).value == 1.0

    def test_rank_eleven_scores_zero(self):
        docs = [f"d{i}" for i in range(12)]  # relevant at position 11
        run = build_run({"q1": docs})
        qrels = build_qrels({"q1": {"d10"}})
        assert mrr_at_10(run, qrels).value == 0.0

    def test_four_query_fixture(self):
        run = build_run(
            {
                "q1": ["r1", "x1", "x2"],
                "q2": ["x1", "r2", "x2"],
                "q3": [f"x{i}" for i in range(11)] + ["r3"],
                "q4": ["x1", "x2"],
            }
        )
        qrels = build_qrels(
            {"q1": {"r1"}, "q2": {"r2"}, "q3": {"r3"}, "q4": {"r4"}}
        )
        assert mrr_at_10(run, qrels).value == pytest.approx((1 + 0.5 + 0 + 0) / 4)
        assert mrr_at_10(run, qrels).value == pytest.approx(0.375)

    def test_values_in_eleven_element_set(self):
        allowed = {0.0} | {1.0 / r for r in range(1, 11)}
        rng = random.Random(2)
        for _ in range(50):
            docs = [f"d{i}" for i in range(rng.randint(1, 30))]
            rng.shuffle(docs)
            run = build_run({"q": docs})
            qrels = build_qrels({"q": {rng.choice(docs)}})
            value = mrr_at_10(run, qrels).per_query["q"]
            assert value in allowed

    def test_unjudged_query_excluded_and_reported(self):
        run = build_run({"q1": ["d1"], "q2": ["d2"]})
        qrels = build_qrels({"q1": {"d1"}})
        result = mrr_at_10(run, qrels)
        assert result.value == 1.0
        assert result.skipped == ["q2"]
        assert "q2" not in result.per_query


class TestMeanAveragePrecision:
    def test_two_relevant_at_top(self):
        run = build_run({"q1": ["d1", "d2", "d3"]})
        qrels = build_qrels({"q1": {"d1", "d2"}})
        assert mean_average_precision(run, qrels).value == 1.0

    def test_single_relevant_at_rank_four(self):
        run = build_run({"q1": ["x1", "x2", "x3", "r", "x4"]})
        qrels = build_qrels({"q1": {"r"}})
        assert mean_average_precision(run, qrels).value == 0.25

    def test_unretrieved_relevant_counts_in_denominator(self):
        run = build_run({"q1": ["r1", "x1"]})
        qrels = build_qrels({"q1": {"r1", "r2"}})  # r2 never retrieved
        assert mean_average_precision(run, qrels).value == pytest.approx(0.5)

    def test_three_query_fixture_matches_reference(self):
        rankings = {
            "q1": ["a", "r1", "b", "r2"],
            "q2": ["r3", "c", "d"],
            "q3": ["e", "f", "g", "h", "r4"],
        }
        relevant = {"q1": {"r1", "r2"}, "q2": {"r3"}, "q3": {"r4", "zz"}}
        run = build_run(rankings)
        qrels = build_qrels(relevant)
        expected = sum(ref_ap(rankings[q], relevant[q]) for q in rankings) / 3
        assert mean_average_precision(run, qrels).value == pytest.approx(expected, abs=1e-10)


class TestRecallAtK:
    def test_all_within_k(self):
        run = build_run({"q1": ["r1", "r2", "x"]})
        qrels = build_qrels({"q1": {"r1", "r2"}})
        assert recall_at_k(run, qrels, 2).value == 1.0

    def test_none_retrieved(self):
        run = build_run({"q1": ["x1", "x2"]})
        qrels = build_qrels({"q1": {"r1"}})
        assert recall_at_k(run, qrels, 10).value == 0.0

    def test_partial(self):
        run = build_run({"q1": ["r1", "x1", "r2", "x2"]})
        qrels = build_qrels({"q1": {"r1", "r2", "r3"}})
        assert recall_at_k(run, qrels, 2).value == pytest.approx(1 / 3)


class TestAgainstReferenceEvaluator:
    def test_twenty_random_fixtures(self):
        rng = random.Random(77)
        for trial in range(25):
            n_queries = rng.randint(1, 15)
            rankings, relevant = {}, {}
            for qi in range(n_queries):
                qid = f"q{qi}"
                pool = [f"d{i}" for i in range(rng.randint(2, 60))]
                rng.shuffle(pool)
                rankings[qid] = pool
                relevant[qid] = set(rng.sample(pool, rng.randint(1, min(5, len(pool)))))
                if rng.random() < 0.3:
                    relevant[qid].add(f"missing{qi}")  # relevant but unretrieved
            run = build_run(rankings)
            qrels = build_qrels(relevant)
            k = rng.choice([1, 5, 10, 100])

            exp_mrr = sum(ref_mrr10(rankings[q], relevant[q]) for q in rankings) / n_queries
            exp_map = sum(ref_ap(rankings[q], relevant[q]) for q in rankings) / n_queries
            exp_rec = sum(ref_recall(rankings[q], relevant[q], k) for q in rankings) / n_queries

            assert mrr_at_10(run, qrels).value == pytest.approx(exp_mrr, abs=1e-10)
            assert mean_average_precision(run, qrels).value == pytest.approx(exp_map, abs=1e-10)
            assert recall_at_k(run, qrels, k).value == pytest.approx(exp_rec, abs=1e-10)

    def test_swapping_relevant_to_better_rank_never_hurts(self):
        rng = random.Random(5)
        for _ in range(30):
            pool = [f"d{i}" for i in range(rng.randint(4, 25))]
            rng.shuffle(pool)
            relevant = set(rng.sample(pool, 2))
            rel_positions = [i for i, d in enumerate(pool) if d in relevant]
            src = rng.choice(rel_positions)
            if src == 0:
                continue
            dst = rng.randrange(src)
            better = pool.copy()
            better[dst], better[src] = better[src], better[dst]

            for metric in (
                lambda r: mrr_at_10(r, build_qrels({"q": relevant})).value,
                lambda r: mean_average_precision(r, build_qrels({"q": relevant})).value,
                lambda r: recall_at_k(r, build_qrels({"q": relevant}), 5).value,
            ):
                assert metric(build_run({"q": better})) >= metric(build_run({"q": pool})) - 1e-12


class TestMetricReport:
    def test_report_shows_both_scales(self):
        run = build_run({"q1": ["r1", "x"]})
        qrels = build_qrels({"q1": {"r1"}})
        report = evaluate_run(run, qrels, recall_ks=(10,))
        assert report.mrr_at_10 == 1.0
        assert report.map == 1.0
        assert report.recall[10] == 1.0
        text = "\n".join(report.lines())
        assert "1.000000" in text and "100.00" in text


class TestSweep:
    @staticmethod
    def sweep_setup(n_docs=30, n_queries=4):
        store = shared_term_corpus(n_docs)
        index = build_index(store)
        qrels = Qrels()
        queries = []
        doc_ids = store.doc_ids()
        rng = random.Random(1)
        for qi in range(n_queries):
            qid = f"q{qi}"
            queries.append(Query(qid, "common alpha"))
            qrels.add(qid, rng.choice(doc_ids), 1)
        return index, queries, qrels

    def test_costs_follow_cutoffs(self):
        index, queries, qrels = self.sweep_setup()
        points, warnings = sweep(
            index, queries, qrels,
            OraclePointwiseScorer(qrels), ConstantPairwise(),
            SweepGrid(k0s=(10,), k1s=(0, 2, 4), methods=("sum",)),
            trials=3, seed=0,
        )
        assert not warnings
        by_k1 = {p.k1: p for p in points}
        assert by_k1[0].inferences_per_query == pytest.approx(10)
        assert by_k1[2].inferences_per_query == pytest.approx(10 + 2 * 1)
        assert by_k1[4].inferences_per_query == pytest.approx(10 + 4 * 3)

    def test_sample_cost_is_k1_times_m(self):
        index, queries, qrels = self.sweep_setup()
        points, _ = sweep(
            index, queries, qrels,
            OraclePointwiseScorer(qrels), ConstantPairwise(),
            SweepGrid(k0s=(10,), k1s=(4,), methods=("sample",), ms=(2,)),
            trials=2, seed=0,
        )
        (point,) = points
        assert point.trials == 2
        assert point.m == 2
        assert point.inferences_per_query == pytest.approx(10 + 4 * 2)

    def test_infeasible_cells_skipped_with_warning(self):
        index, queries, qrels = self.sweep_setup()
        points, warnings = sweep(
            index, queries, qrels,
            OraclePointwiseScorer(qrels), ConstantPairwise(),
            SweepGrid(k0s=(3,), k1s=(0, 5), methods=("sum",)),
            trials=1, seed=0,
        )
        assert len(points) == 1
        assert any("infeasible" in w and "k1=5" in w for w in warnings)

    def test_recall_at_k0_non_decreasing_in_k0(self):
        # deepening retrieval can only add candidates, never lose them
        rng = random.Random(23)
        store = shared_term_corpus(50)
        index = build_index(store)
        qrels = Qrels()
        queries = []
        for qi in range(8):
            qid = f"q{qi}"
            queries.append(Query(qid, "common alpha beta"))
            for doc in rng.sample(store.doc_ids(), 3):
                qrels.add(qid, doc, 1)
        from cascade_rank.lexical import retrieve_top_k

        recalls = []
        for k0 in (1, 2, 5, 10, 25, 50):
            run = RunFile.from_ranked_lists(
                [retrieve_top_k(index, q, k0) for q in queries], "bm25"
            )
            recalls.append(recall_at_k(run, qrels, k0).value)
        assert recalls == sorted(recalls)

    def test_metric_non_decreasing_in_k0_with_oracle(self):
        index, queries, qrels = self.sweep_setup(n_docs=40, n_queries=6)
        points, _ = sweep(
            index, queries, qrels,
            OraclePointwiseScorer(qrels), None,
            SweepGrid(k0s=(1, 2, 5, 10, 20, 40), k1s=(0,), methods=("sum",)),
            trials=1, seed=0,
        )
        values = [p.metric_value for p in sorted(points, key=lambda p: p.k0)]
        assert values == sorted(values)

    def test_csv_header_and_shape(self, tmp_path):
        index, queries, qrels = self.sweep_setup()
        points, _ = sweep(
            index, queries, qrels,
            OraclePointwiseScorer(qrels), ConstantPairwise(),
            SweepGrid(k0s=(5,), k1s=(0, 2), methods=("sum", "binary")),
            trials=1, seed=0,
        )
        path = tmp_path / "sweep.csv"
        write_sweep_csv(points, path)
        lines = path.read_text().splitlines()
        assert lines[0] == SWEEP_CSV_HEADER
        assert lines[0] == "k0,k1,method,m,trials,inferences_per_query,metric"
        assert len(lines) == 1 + len(points)
        for line in lines[1:]:
            assert len(line.split(",")) == 7
