"""Run the service: `python -m scorer_service` or the scorer-service script."""

from __future__ import annotations

import argparse
from dataclasses import replace

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="scorer-service",
        description="HTTP scoring service for the cascade-rank wire protocol. "
        "Flags override PORT/HOST/MODEL_MONO/MODEL_DUO/DEVICE/MAX_BATCH env vars.",
    )
    parser.add_argument("--port", type=int)
    parser.add_argument("--host")
    parser.add_argument("--model-mono", dest="model_mono",
                        help='checkpoint name or "builtin:lexical"')
    parser.add_argument("--model-duo", dest="model_duo",
                        help='checkpoint name, "builtin:lexical", or "none"')
    parser.add_argument("--device")
    parser.add_argument("--max-batch", dest="max_batch", type=int)
    args = parser.parse_args(argv)

    overrides = {k: v for k, v in vars(args).items() if v is not None}
    disable_duo = overrides.pop("model_duo", None) == "none"
    if not disable_duo and args.model_duo is not None:
        overrides["model_duo"] = args.model_duo
    config = ServiceConfig.from_env(**overrides)
    if disable_duo:
        config = replace(config, model_duo=None)

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
