"""End-to-end: the main package's remote scorers against a live instance.

Starts uvicorn on a free port in a background thread and drives it through
cascade_rank's client, proving both sides of the wire contract meet in the
middle.  Skipped when cascade_rank is not installed.
"""

import socket
import threading
import time

import pytest

pytest.importorskip("cascade_rank")
pytest.importorskip("scorer_service")

import uvicorn

from cascade_rank.corpus import Query
from cascade_rank.remote import (
    RemotePairwiseScorer,
    RemotePointwiseScorer,
    ScorerEndpoint,
    health_check,
)
from scorer_service.app import create_app
from scorer_service.config import ServiceConfig


@pytest.fixture(scope="module")
def live_service():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(
        create_app(ServiceConfig()), host="127.0.0.1", port=port, log_level="error"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    endpoint = ScorerEndpoint(f"http://127.0.0.1:{port}", timeout_ms=5000)
    while time.monotonic() < deadline:
        try:
            health_check(endpoint)
            break
        except Exception:
            time.sleep(0.05)
    else:
        raise RuntimeError("service did not come up")
    yield endpoint
    server.should_exit = True
    thread.join(timeout=5)


class TestClientAgainstLiveService:
    def test_health_advertises_truncation_delegation(self, live_service):
        descriptor = health_check(live_service)
        assert set(descriptor["modes"]) == {"mono", "duo"}
        scorer = RemotePointwiseScorer(live_service)
        assert scorer.handles_truncation is True

    def test_pointwise_scoring_round_trip(self, live_service):
        scorer = RemotePointwiseScorer(live_service)
        query = Query("q1", "low liver enzymes")
        items = [
            ("d1", "reduced production of liver enzymes explained"),
            ("d2", "a banana bread recipe with walnuts"),
            ("d3", "liver enzymes and what low values mean"),
        ]
        scores = scorer.score_batch(query, items)
        assert len(scores) == 3
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores[0] > scores[1]
        assert scores[2] > scores[1]

    def test_pairwise_scoring_round_trip(self, live_service):
        scorer = RemotePairwiseScorer(live_service)
        query = Query("q1", "low liver enzymes")
        pairs = [
            ("d1", "liver enzymes low", "d2", "banana bread"),
            ("d2", "banana bread", "d1", "liver enzymes low"),
        ]
        p = scorer.score_pairs(query, pairs)
        assert p[0] > 0.5 > p[1]

    def test_chunked_batches_preserve_order(self, live_service):
        endpoint = ScorerEndpoint(live_service.base_url, timeout_ms=5000, max_batch=7)
        scorer = RemotePointwiseScorer(endpoint)
        query = Query("q1", "alpha")
        items = [(f"d{i}", "alpha " * (i % 3) + "beta") for i in range(30)]
        chunked = scorer.score_batch(query, items)
        whole = RemotePointwiseScorer(live_service).score_batch(query, items)
        assert chunked == whole
