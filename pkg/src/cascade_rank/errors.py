"""Exception types shared across the package."""


class CascadeRankError(Exception):
    """Base class for all errors raised by cascade-rank."""


class IngestError(CascadeRankError):
    """Malformed or inconsistent input data (collection, queries, qrels)."""


class ArtifactFormatError(CascadeRankError):
    """On-disk artifact (index dir, store dir, model file) is missing,
    stale, or has an unrecognized format version."""


class StageError(CascadeRankError):
    """A pipeline stage failed for one query; carries the stage label so
    callers can abort that query without killing the whole run."""

    def __init__(self, stage: str, query_id: str, message: str):
        super().__init__(f"stage {stage} failed for query {query_id}: {message}")
        self.stage = stage
        self.query_id = query_id


class ProtocolError(CascadeRankError):
    """Remote scorer service violated the wire contract."""


class RunFormatError(CascadeRankError):
    """Run file failed validation (bad field count, non-contiguous ranks, ...)."""
