"""Third-stage pairwise re-ranking.

A pairwise scorer estimates, for each ordered candidate pair (i, j), the
probability that i should rank above j.  With n surviving candidates that
is n*(n-1) scorer calls, so this stage is the expensive one; the "sample"
aggregation exists purely to cut that cost, and only the sampled pairs
are ever sent to the scorer.

Aggregation turns the pair matrix into one score per candidate:

    sum     s_i = sum of p[i, j] over j in J_i
    binary  s_i = count of p[i, j] strictly above 0.5 (pairwise-wins rule)
    min     s_i = min over J_i
    max     s_i = max over J_i
    sample  s_i = sum over a per-row sample J_i(m), drawn without replacement

where J_i is every j != i for the full methods.  No p[i, j] + p[j, i] = 1
symmetry is assumed anywhere; the two directions are independent model
outputs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .corpus import DocumentStore, Qrels, Query
from .features import FeatureMap
from .lexical import Candidate, RankedList
from .mono import (
    PROB_CLAMP,
    ToyPointwiseModel,
    TrainConfig,
    _load_model_payload,
    logistic,
    logistic_loss_and_grad,
    truncate_text,
)
from .util import derive_seed

# Input budget: query 62 tokens, each candidate 223, plus 4 reserved
# positions (classification marker + three separators) = 512.
MAX_QUERY_TOKENS = 62
MAX_DOC_TOKENS = 223
RESERVED_TOKENS = 4

VARIANTS = ("sum", "binary", "min", "max", "sample")


class PairwiseScorer(Protocol):
    """Scores ordered candidate pairs; one probability per pair."""

    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[str, str, str, str]]
    ) -> list[float]:
        """pairs are (i_doc_id, i_text, j_doc_id, j_text); output aligns
        index-for-index, every value in [0, 1]."""
        ...


@dataclass(frozen=True)
class AggregationMethod:
    """Which rule converts the pair matrix into per-candidate scores.

    m and seed only apply to the "sample" variant; the seed makes each
    row's sampled comparison set reproducible.
    """

    variant: str
    m: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown aggregation variant {self.variant!r}")
        if self.variant == "sample":
            if self.m is None or self.m < 1:
                raise ValueError("sample aggregation requires m >= 1")


class PairMatrix:
    """Pairwise preference probabilities over n candidates.

    Cells are keyed (i, j) with i != j; full methods need all n*(n-1)
    cells, sampled matrices hold only the drawn ones.
    """

    def __init__(self, n: int, probs: dict[tuple[int, int], float] | None = None):
        if n < 0:
            raise ValueError("candidate count must be non-negative")
        self.n = n
        self.probs: dict[tuple[int, int], float] = {}
        if probs:
            for (i, j), p in probs.items():
                self.set(i, j, p)

    def set(self, i: int, j: int, p: float) -> None:
        if i == j:
            raise ValueError(f"diagonal cell ({i}, {j}) is not allowed")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"cell ({i}, {j}) out of range for n={self.n}")
        if not np.isfinite(p) or not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p!r} at ({i}, {j}) outside [0, 1]")
        self.probs[(i, j)] = float(p)

    def get(self, i: int, j: int) -> float:
        try:
            return self.probs[(i, j)]
        except KeyError:
            raise ValueError(f"pair matrix is missing required cell ({i}, {j})") from None


def enumerate_pairs(r1: RankedList) -> list[tuple[int, int]]:
    """All ordered index pairs (i, j), i != j, in row-major order.

    Fewer than two candidates means no pairs; the stage upstream then
    degenerates to the identity.
    """
    n = len(r1.entries)
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def sample_row_sets(n: int, m: int, seed: int) -> list[list[int]]:
    """Per-row comparison sets for sample aggregation.

    Row i gets m distinct opponents drawn without replacement from
    {0..n-1} \\ {i}, seeded per row so rows are independent but the whole
    draw is reproducible.
    """
    if not 1 <= m <= n - 1:
        raise ValueError(f"sample size m={m} must satisfy 1 <= m <= n-1={n - 1}")
    rows: list[list[int]] = []
    for i in range(n):
        rng = random.Random(derive_seed(seed, i))
        opponents = [j for j in range(n) if j != i]
        rows.append(sorted(rng.sample(opponents, m)))
    return rows


def aggregate(matrix: PairMatrix, method: AggregationMethod) -> list[float]:
    """Collapse the pair matrix into one score per candidate."""
    n = matrix.n
    if n == 0:
        return []
    if n < 2 and method.variant in ("min", "max", "sample"):
        raise ValueError(
            f"{method.variant} aggregation needs at least 2 candidates, got {n}"
        )
    if method.variant == "sample":
        row_sets = sample_row_sets(n, method.m, method.seed)
    else:
        row_sets = [[j for j in range(n) if j != i] for i in range(n)]

    scores: list[float] = []
    for i in range(n):
        row = [matrix.get(i, j) for j in row_sets[i]]
        if method.variant == "binary":
            scores.append(float(sum(1 for p in row if p > 0.5)))
        elif method.variant == "min":
            scores.append(min(row))
        elif method.variant == "max":
            scores.append(max(row))
        else:  # sum and sample
            scores.append(float(sum(row)))
    return scores


def rerank_duo(
    scorer: PairwiseScorer,
    query: Query,
    r1: RankedList,
    method: AggregationMethod,
    store: DocumentStore,
    truncate: bool = True,
) -> tuple[RankedList, int]:
    """Re-rank r1 by aggregated pairwise preferences.

    Returns the new list plus the number of scorer invocations (pairs
    actually sent).  Under "sample" only the sampled pairs are scored;
    m is capped at n-1 when the surviving list is shorter than the
    configured sample size.  With fewer than two candidates the stage is
    the identity.
    """
    n = len(r1.entries)
    if n < 2:
        return RankedList(query.query_id, list(r1.entries), "H2"), 0

    query_text = query.text
    texts = []
    for cand in r1.entries:
        text = store.get(cand.doc_id).text
        if truncate:
            text = truncate_text(text, MAX_DOC_TOKENS)
        texts.append(text)
    if truncate:
        query_text = truncate_text(query_text, MAX_QUERY_TOKENS)

    if method.variant == "sample":
        m_eff = min(method.m, n - 1)
        method = replace(method, m=m_eff, seed=derive_seed(method.seed, query.query_id))
        index_pairs = [
            (i, j)
            for i, row in enumerate(sample_row_sets(n, m_eff, method.seed))
            for j in row
        ]
    else:
        index_pairs = enumerate_pairs(r1)

    request = [
        (r1.entries[i].doc_id, texts[i], r1.entries[j].doc_id, texts[j])
        for i, j in index_pairs
    ]
    probs = scorer.score_pairs(Query(query.query_id, query_text), request)
    if len(probs) != len(request):
        raise ValueError(f"scorer returned {len(probs)} scores for {len(request)} pairs")

    matrix = PairMatrix(n)
    for (i, j), p in zip(index_pairs, probs):
        matrix.set(i, j, p)
    scores = aggregate(matrix, method)

    order = sorted(range(n), key=lambda i: (-scores[i], i))
    entries = [Candidate(r1.entries[i].doc_id, float(scores[i])) for i in order]
    return RankedList(query.query_id, entries, "H2"), len(index_pairs)


class OraclePairwiseScorer:
    """Perfect preferences from qrels: 1 when only i is relevant, 0 when
    only j is, 0.5 on equal relevance."""

    def __init__(self, qrels: Qrels):
        self.qrels = qrels

    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[str, str, str, str]]
    ) -> list[float]:
        out = []
        for i_id, _, j_id, _ in pairs:
            rel_i = self.qrels.is_relevant(query.query_id, i_id)
            rel_j = self.qrels.is_relevant(query.query_id, j_id)
            out.append(0.5 if rel_i == rel_j else (1.0 if rel_i else 0.0))
        return out


def pairwise_loss(matrix: PairMatrix, labels: Sequence[int]) -> float:
    """Cross-entropy over mixed-relevance ordered pairs:
    -sum(log p[i, j] | i relevant, j not) - sum(log(1 - p[i, j]) | j relevant, i not).

    Same-relevance pairs never enter the sum; if no mixed pair exists the
    loss is undefined and this raises.
    """
    if len(labels) != matrix.n:
        raise ValueError("labels length must equal matrix size")
    total = 0.0
    mixed = 0
    for i in range(matrix.n):
        for j in range(matrix.n):
            if i == j or labels[i] == labels[j]:
                continue
            mixed += 1
            p = min(max(matrix.get(i, j), PROB_CLAMP), 1.0 - PROB_CLAMP)
            total -= np.log(p) if labels[i] == 1 else np.log(1.0 - p)
    if mixed == 0:
        raise ValueError("no mixed-relevance pairs: pairwise loss is undefined")
    return float(total)


class ToyPairwiseModel:
    """Logistic preference over feature differences.

    p[i, j] = logistic(w . (phi(q, d_i) - phi(q, d_j))), which makes
    p[i, j] + p[j, i] = 1 by construction; that symmetry is a property of
    this toy model only and nothing downstream relies on it.
    """

    kind = "pairwise"

    def __init__(self, feature_map: FeatureMap, weights: np.ndarray | None = None):
        self._point = ToyPointwiseModel(feature_map, weights)

    @property
    def feature_map(self) -> FeatureMap:
        return self._point.feature_map

    @property
    def weights(self) -> np.ndarray:
        return self._point.weights

    @weights.setter
    def weights(self, value: np.ndarray) -> None:
        self._point.weights = np.asarray(value, float)

    def set_standardization(self, means, stds) -> None:
        self._point.set_standardization(means, stds)

    def phi(self, query_text: str, doc_text: str) -> np.ndarray:
        return self._point.phi(query_text, doc_text)

    def score_pair(self, query_text: str, i_text: str, j_text: str) -> float:
        diff = self.phi(query_text, i_text) - self.phi(query_text, j_text)
        return float(logistic(diff @ self.weights))

    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[str, str, str, str]]
    ) -> list[float]:
        return [
            self.score_pair(query.text, i_text, j_text)
            for _, i_text, _, j_text in pairs
        ]

    def save(self, path) -> None:
        point = self._point
        payload_model = ToyPointwiseModel(point.feature_map, point.weights)
        payload_model.means, payload_model.stds = point.means, point.stds
        payload_model.kind = self.kind
        payload_model.save(path)

    @classmethod
    def load(cls, path) -> "ToyPairwiseModel":
        payload = _load_model_payload(path, expected_kind=cls.kind)
        model = cls(FeatureMap.from_dict(payload["feature_map"]),
                    np.array(payload["weights"], float))
        model._point.means = np.array(payload["means"], float)
        model._point.stds = np.array(payload["stds"], float)
        return model


def train_toy_pairwise(
    model: ToyPairwiseModel,
    data: Sequence[tuple[str, str, int]],
    config: TrainConfig,
) -> ToyPairwiseModel:
    """SGD on the pairwise cross-entropy over balanced batches.

    data rows are (query_text, doc_text, label); within each query the
    relevant docs are crossed with the non-relevant ones, and every
    sampled pair contributes both orientations so batches stay balanced.
    """
    if config.iterations == 0:
        return model
    data = list(data)
    by_query: dict[str, tuple[list[str], list[str]]] = {}
    for query_text, doc_text, label in data:
        pos, neg = by_query.setdefault(query_text, ([], []))
        (pos if label == 1 else neg).append(doc_text)
    mixed_pairs = [
        (q, p_text, n_text)
        for q, (pos, neg) in by_query.items()
        for p_text in pos
        for n_text in neg
    ]
    if not mixed_pairs:
        raise ValueError("no query has both labels: cannot build training pairs")

    raw = np.stack([model.feature_map.features(q, d) for q, d, _ in data])
    model.set_standardization(raw.mean(axis=0), raw.std(axis=0))
    diffs = np.stack(
        [model.phi(q, p_text) - model.phi(q, n_text) for q, p_text, n_text in mixed_pairs]
    )

    rng = random.Random(config.seed)
    half = max(config.batch_size // 2, 1)
    for _ in range(config.iterations):
        rows = [rng.randrange(len(mixed_pairs)) for _ in range(half)]
        # Both orientations of each sampled pair: diff with label 1,
        # negated diff with label 0.
        x = np.concatenate([diffs[rows], -diffs[rows]])
        y = np.concatenate([np.ones(len(rows)), np.zeros(len(rows))])
        _, grad = logistic_loss_and_grad(model.weights, x, y)
        model.weights = model.weights - config.lr * grad
    return model
