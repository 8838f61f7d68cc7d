"""HTTP layer: POST /v1/score and GET /v1/health.

Status codes follow the wire contract: 400 for malformed JSON or a body
that does not match the declared schema, 413 for batches above the
configured limit.  Scoring is deterministic for a fixed model and input,
and |scores| always equals |items|.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .scoring import PAIR_ENCODING_NOTE, load_scorer

MONO_ITEM_FIELDS = {"doc_id", "text"}
DUO_ITEM_FIELDS = {"i_doc_id", "i_text", "j_doc_id", "j_text"}


class RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _validate_body(body: object, max_batch: int, modes: list[str]) -> tuple[str, str, list]:
    if not isinstance(body, dict):
        raise RequestError(400, "request body must be a JSON object")
    mode = body.get("mode")
    if mode not in ("mono", "duo"):
        raise RequestError(400, f"unknown mode {mode!r}")
    if mode not in modes:
        raise RequestError(400, f"mode {mode!r} is not enabled on this service")
    query_text = body.get("query_text")
    if not isinstance(query_text, str):
        raise RequestError(400, "query_text must be a string")
    items = body.get("items")
    if not isinstance(items, list):
        raise RequestError(400, "items must be a list")
    if len(items) > max_batch:
        raise RequestError(413, f"batch of {len(items)} exceeds max_batch {max_batch}")
    required = MONO_ITEM_FIELDS if mode == "mono" else DUO_ITEM_FIELDS
    for pos, item in enumerate(items):
        if not isinstance(item, dict) or not required.issubset(item):
            raise RequestError(400, f"item {pos} must carry fields {sorted(required)}")
        if not all(isinstance(item[f], str) for f in required):
            raise RequestError(400, f"item {pos} fields must be strings")
    return mode, query_text, items


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig.from_env()
    app = FastAPI(title="scorer-service", docs_url=None, redoc_url=None)

    scorers = {"mono": load_scorer(config.model_mono, config.device, config.max_seq_len)}
    if config.model_duo:
        scorers["duo"] = load_scorer(config.model_duo, config.device, config.max_seq_len)
    modes = [m for m in ("mono", "duo") if m in scorers]

    @app.get("/v1/health")
    async def health() -> JSONResponse:
        return JSONResponse(
            {
                "modes": modes,
                "token_budget": config.max_seq_len,
                "models": {mode: scorers[mode].name for mode in modes},
                "pair_encoding": PAIR_ENCODING_NOTE if "duo" in modes else None,
            }
        )

    @app.post("/v1/score")
    async def score(request: Request) -> JSONResponse:
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return JSONResponse({"error": "malformed JSON body"}, status_code=400)
        try:
            mode, query_text, items = _validate_body(body, config.max_batch, modes)
        except RequestError as exc:
            return JSONResponse({"error": exc.message}, status_code=exc.status)

        scorer = scorers[mode]
        if mode == "mono":
            scores = scorer.score_mono(query_text, [item["text"] for item in items])
        else:
            scores = scorer.score_duo(
                query_text, [(item["i_text"], item["j_text"]) for item in items]
            )
        return JSONResponse({"scores": scores})

    return app
