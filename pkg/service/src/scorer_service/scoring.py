"""Scoring backends.

Two kinds of backend sit behind the same interface:

* BuiltinLexicalScorer — a deterministic token-overlap scorer with no model
  downloads.  Its quality is intentionally modest; it exists so the wire
  protocol can be exercised (and conformance-tested) fully offline.
* CrossEncoderScorer — wraps any sentence-transformers cross-encoder
  checkpoint.  Pointwise inputs are encoded as (query, candidate) sentence
  pairs.  Pairwise inputs approximate a three-segment encoding with stock
  two-segment checkpoints: the second candidate is appended to the second
  segment after an extra separator.  The health endpoint declares this
  approximation so clients can tell what they are getting.

Both apply the standard input budgets in their own token space: pointwise
query <= 64 tokens with the pair capped at 512 including 3 reserved
positions; pairwise 62 query + 223 + 223 candidate tokens + 4 reserved.
"""

from __future__ import annotations

import math
import re
from functools import lru_cache

from .config import BUILTIN_LEXICAL

MONO_MAX_QUERY = 64
MONO_MAX_TOTAL = 512
MONO_RESERVED = 3
DUO_MAX_QUERY = 62
DUO_MAX_DOC = 223

PAIR_ENCODING_NOTE = (
    "pairwise inputs are encoded with the second candidate appended to the "
    "second segment after an extra separator; the backbone has no dedicated "
    "third segment-type embedding"
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class BuiltinLexicalScorer:
    """Deterministic overlap-based probabilities; no external weights."""

    name = BUILTIN_LEXICAL
    # Overlap fraction is squashed through a logistic centered at 0.5.
    GAIN = 6.0

    def _tokens(self, text: str, limit: int) -> set[str]:
        return set(_TOKEN_RE.findall(text.lower())[:limit])

    def _overlap(self, query_tokens: set[str], doc_text: str, limit: int) -> float:
        if not query_tokens:
            return 0.0
        doc_tokens = self._tokens(doc_text, limit)
        return len(query_tokens & doc_tokens) / len(query_tokens)

    def score_mono(self, query: str, texts: list[str]) -> list[float]:
        q = self._tokens(query, MONO_MAX_QUERY)
        doc_limit = MONO_MAX_TOTAL - MONO_RESERVED - min(len(q), MONO_MAX_QUERY)
        return [
            _sigmoid(self.GAIN * (self._overlap(q, text, doc_limit) - 0.5))
            for text in texts
        ]

    def score_duo(self, query: str, pairs: list[tuple[str, str]]) -> list[float]:
        q = self._tokens(query, DUO_MAX_QUERY)
        out = []
        for i_text, j_text in pairs:
            delta = self._overlap(q, i_text, DUO_MAX_DOC) - self._overlap(
                q, j_text, DUO_MAX_DOC
            )
            out.append(_sigmoid(self.GAIN * delta))
        return out


class CrossEncoderScorer:
    """sentence-transformers cross-encoder behind the same interface."""

    def __init__(self, model_name: str, device: str = "cpu", max_seq_len: int = 512):
        from sentence_transformers import CrossEncoder  # deferred; heavy import

        self.name = model_name
        self.model = CrossEncoder(model_name, device=device, max_length=max_seq_len)
        self.tokenizer = self.model.tokenizer
        self.sep = self.tokenizer.sep_token or "[SEP]"

    def _clip(self, text: str, max_tokens: int) -> str:
        ids = self.tokenizer.encode(text, add_special_tokens=False)
        if len(ids) <= max_tokens:
            return text
        return self.tokenizer.decode(ids[:max_tokens], skip_special_tokens=True)

    def _predict(self, sentence_pairs: list[tuple[str, str]]) -> list[float]:
        logits = self.model.predict(
            sentence_pairs, convert_to_numpy=True, show_progress_bar=False
        )
        # Some checkpoints emit probabilities already; squash only logits.
        return [
            float(v) if 0.0 <= float(v) <= 1.0 else _sigmoid(float(v))
            for v in logits
        ]

    def score_mono(self, query: str, texts: list[str]) -> list[float]:
        query = self._clip(query, MONO_MAX_QUERY)
        q_len = len(self.tokenizer.encode(query, add_special_tokens=False))
        budget = MONO_MAX_TOTAL - MONO_RESERVED - q_len
        return self._predict([(query, self._clip(t, budget)) for t in texts])

    def score_duo(self, query: str, pairs: list[tuple[str, str]]) -> list[float]:
        query = self._clip(query, DUO_MAX_QUERY)
        joined = [
            (
                query,
                f"{self._clip(i_text, DUO_MAX_DOC)} {self.sep} "
                f"{self._clip(j_text, DUO_MAX_DOC)}",
            )
            for i_text, j_text in pairs
        ]
        return self._predict(joined)


@lru_cache(maxsize=4)
def load_scorer(model_name: str, device: str, max_seq_len: int):
    if model_name == BUILTIN_LEXICAL:
        return BuiltinLexicalScorer()
    return CrossEncoderScorer(model_name, device=device, max_seq_len=max_seq_len)
