"""FastAPI app implementing the logit wire protocol.

Success and error bodies are rendered with sorted keys and compact
separators so recorded golden responses stay byte-comparable.
"""

from __future__ import annotations

import json
import threading
import time

from fastapi import FastAPI, Request, Response

from .adapters import ModelAdapter, load_adapter, render_prompt
from .config import BridgeConfig
from .tables import StubTable, load_stub_table

_REQUIRED_FIELDS = ("query", "contexts", "tokens", "masked", "conditioned", "vocab_size")


def _canonical(payload: dict, status_code: int = 200) -> Response:
    return Response(
        content=json.dumps(payload, sort_keys=True, separators=(",", ":")),
        status_code=status_code,
        media_type="application/json",
    )


def _bad_request(message: str) -> Response:
    return _canonical({"error": message}, status_code=400)


class RequestError(ValueError):
    pass


class AdapterFaultError(RuntimeError):
    """The backing adapter broke its contract; reported as a server fault."""


def _validate_request(raw: object, vocab_size: int) -> dict:
    if not isinstance(raw, dict):
        raise RequestError("request body must be a JSON object")
    missing = [f for f in _REQUIRED_FIELDS if f not in raw]
    if missing:
        raise RequestError(f"missing field {missing[0]!r}")

    query = raw["query"]
    if not isinstance(query, str):
        raise RequestError("field 'query' must be a string")
    contexts = raw["contexts"]
    if not isinstance(contexts, list) or not all(isinstance(c, str) for c in contexts):
        raise RequestError("field 'contexts' must be a list of strings")
    tokens = raw["tokens"]
    if not isinstance(tokens, list) or not all(
        isinstance(t, int) and not isinstance(t, bool) for t in tokens
    ):
        raise RequestError("field 'tokens' must be a list of integers")
    masked = raw["masked"]
    if not isinstance(masked, list) or not all(isinstance(m, bool) for m in masked):
        raise RequestError("field 'masked' must be a list of booleans")
    conditioned = raw["conditioned"]
    if not isinstance(conditioned, bool):
        raise RequestError("field 'conditioned' must be a boolean")
    requested_vocab = raw["vocab_size"]
    if not isinstance(requested_vocab, int) or isinstance(requested_vocab, bool):
        raise RequestError("field 'vocab_size' must be an integer")

    if len(tokens) != len(masked):
        raise RequestError(
            f"tokens/masked length mismatch: {len(tokens)} != {len(masked)}"
        )
    if not tokens:
        raise RequestError("empty answer region")
    if not any(masked):
        raise RequestError("no masked positions to serve")
    if requested_vocab != vocab_size:
        raise RequestError(
            f"request vocab size {requested_vocab} != serving vocab {vocab_size}"
        )
    return {
        "query": query,
        "contexts": contexts,
        "tokens": tokens,
        "masked": masked,
        "conditioned": conditioned,
    }


class StubService:
    def __init__(self, table: StubTable):
        self.table = table
        self.model_id = table.model_id
        self.vocab_size = table.vocab_size
        self.logit_kind = table.logit_kind

    def logits(self, request: dict) -> tuple[list[list[float]], float]:
        rows = self.table.logits_for(
            request["tokens"], request["masked"], request["conditioned"]
        )
        return rows, 0.0


class AdapterService:
    """Wraps a real model; forward passes run one at a time."""

    def __init__(self, adapter: ModelAdapter, config: BridgeConfig):
        self.adapter = adapter
        self.config = config
        self.model_id = adapter.model_id
        self.vocab_size = adapter.vocab_size
        self.logit_kind = adapter.logit_kind
        self._forward_lock = threading.Lock()

    def logits(self, request: dict) -> tuple[list[list[float]], float]:
        prompt = render_prompt(
            self.config, request["query"], request["contexts"], request["conditioned"]
        )
        started = time.perf_counter()
        with self._forward_lock:
            rows = self.adapter.forward(prompt, request["tokens"], request["masked"])
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        expected = sum(request["masked"])
        if len(rows) != expected:
            raise AdapterFaultError(
                f"adapter returned {len(rows)} rows for {expected} masked positions"
            )
        if any(len(row) != self.vocab_size for row in rows):
            raise AdapterFaultError("adapter returned a row of the wrong width")
        return [list(map(float, row)) for row in rows], elapsed_ms


def build_service(config: BridgeConfig):
    if config.mode == "stub":
        return StubService(load_stub_table(config.table_path))
    return AdapterService(load_adapter(config.model_ref), config)


def create_app(config: BridgeConfig) -> FastAPI:
    service = build_service(config)
    app = FastAPI(title="logit-bridge", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.get("/v1/health")
    def health() -> Response:
        return _canonical(
            {
                "status": "ok",
                "model_id": service.model_id,
                "vocab_size": service.vocab_size,
                "logit_kind": service.logit_kind,
            }
        )

    @app.post("/v1/logits")
    async def logits(request: Request) -> Response:
        body = await request.body()
        try:
            raw = json.loads(body)
        except json.JSONDecodeError as exc:
            return _bad_request(f"request body is not valid JSON: {exc.msg}")
        try:
            validated = _validate_request(raw, service.vocab_size)
            rows, latency_ms = service.logits(validated)
        except RequestError as exc:
            return _bad_request(str(exc))
        except AdapterFaultError as exc:
            return _canonical({"error": str(exc)}, status_code=500)
        return _canonical(
            {"logits": rows, "model_id": service.model_id, "latency_ms": latency_ms}
        )

    return app


def serve(config: BridgeConfig) -> None:
    import uvicorn

    app = create_app(config)  # table/adapter load failures raise before binding
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
