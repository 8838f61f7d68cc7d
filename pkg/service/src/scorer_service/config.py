"""Service configuration from flags and environment variables.

Environment: PORT, HOST, MODEL_MONO, MODEL_DUO, DEVICE, MAX_BATCH,
MAX_SEQ_LEN.  A model identifier is either the builtin deterministic
scorer ("builtin:lexical", no downloads, useful for tests and demos) or
any sentence-transformers cross-encoder checkpoint name/path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

BUILTIN_LEXICAL = "builtin:lexical"


@dataclass(frozen=True)
class ServiceConfig:
    model_mono: str = BUILTIN_LEXICAL
    model_duo: str | None = BUILTIN_LEXICAL
    device: str = "cpu"
    max_seq_len: int = 512
    max_batch: int = 1024
    host: str = "127.0.0.1"
    port: int = 8671

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.max_seq_len < 16:
            raise ValueError("max_seq_len too small to fit any input")

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        env = {
            "model_mono": os.environ.get("MODEL_MONO"),
            "model_duo": os.environ.get("MODEL_DUO"),
            "device": os.environ.get("DEVICE"),
            "max_batch": _int_env("MAX_BATCH"),
            "max_seq_len": _int_env("MAX_SEQ_LEN"),
            "host": os.environ.get("HOST"),
            "port": _int_env("PORT"),
        }
        values = {k: v for k, v in env.items() if v is not None}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _int_env(name: str) -> int | None:
    raw = os.environ.get(name)
    return int(raw) if raw else None
