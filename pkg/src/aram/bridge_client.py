"""HTTP client for the remote logit bridge.

The engine stays model-free: anything that can answer POST /v1/logits with
per-masked-position logit vectors can back a decode. The client owns request
canonicalization (byte-stable serialization for golden request logs),
transport retries, and response validation; all failures surface as typed
errors before the engine commits anything.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import IdentityError, InvalidInputError, ProtocolError, TransportError
from .dists import LogitVector
from .engine import BackendRequest, BackendResponse, validate_response


@dataclass(frozen=True)
class BridgeEndpoint:
    base_url: str
    timeout_ms: int = 30_000
    max_retries: int = 2
    expected_model_id: str | None = None
    backoff_s: float = 0.1  # doubled per retry

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise InvalidInputError(f"timeout_ms must be > 0, got {self.timeout_ms}")
        if self.max_retries < 0:
            raise InvalidInputError(f"max_retries must be >= 0, got {self.max_retries}")

    @property
    def logits_url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/logits"

    @property
    def health_url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/health"


def encode_request(request: BackendRequest) -> bytes:
    """Canonical wire form: sorted keys, no whitespace; equal requests give
    equal bytes."""
    body = {
        "query": request.query_text,
        "contexts": list(request.context_texts),
        "tokens": list(request.tokens),
        "masked": list(request.masked),
        "conditioned": request.conditioned,
        "vocab_size": request.vocab_size,
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _parse_response(endpoint: BridgeEndpoint, request: BackendRequest, payload) -> BackendResponse:
    if not isinstance(payload, dict):
        raise ProtocolError("response body is not a JSON object")
    for key in ("logits", "model_id", "latency_ms"):
        if key not in payload:
            raise ProtocolError(f"response missing field {key!r}")
    raw_logits = payload["logits"]
    if not isinstance(raw_logits, list) or not all(isinstance(row, list) for row in raw_logits):
        raise ProtocolError("response field 'logits' must be a list of lists")
    vectors = []
    for row in raw_logits:
        try:
            vectors.append(LogitVector(np.asarray(row, dtype=float)))
        except (InvalidInputError, ValueError) as exc:
            raise ProtocolError(f"non-finite or malformed logit vector: {exc}") from exc
    response = BackendResponse(
        logits=tuple(vectors),
        model_id=str(payload["model_id"]),
        latency_ms=float(payload["latency_ms"]),
    )
    try:
        validate_response(request, response)
    except ProtocolError:
        raise
    if endpoint.expected_model_id is not None and response.model_id != endpoint.expected_model_id:
        raise IdentityError(
            f"bridge identifies as {response.model_id!r}, expected {endpoint.expected_model_id!r}"
        )
    return response


def fetch_logits(
    endpoint: BridgeEndpoint,
    request: BackendRequest,
    session: requests.Session | None = None,
) -> BackendResponse:
    """POST one logit request, retrying transport failures and 503s with
    exponential backoff. Protocol and identity violations never retry."""
    own_session = session is None
    if own_session:
        session = requests.Session()
    body = encode_request(request)
    timeout = endpoint.timeout_ms / 1000.0
    last_failure = None
    try:
        for attempt in range(endpoint.max_retries + 1):
            if attempt > 0:
                time.sleep(endpoint.backoff_s * 2 ** (attempt - 1))
            try:
                http = session.post(
                    endpoint.logits_url,
                    data=body,
                    headers={"Content-Type": "application/json"},
                    timeout=timeout,
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_failure = f"transport failure: {exc}"
                continue
            if http.status_code == 503:
                last_failure = "bridge busy (503)"
                continue
            if http.status_code == 400:
                try:
                    message = http.json().get("error", http.text)
                except ValueError:
                    message = http.text
                raise ProtocolError(f"bridge rejected request: {message}")
            if http.status_code != 200:
                raise TransportError(f"unexpected status {http.status_code}: {http.text[:200]}")
            try:
                payload = http.json()
            except ValueError as exc:
                raise ProtocolError(f"response is not valid JSON: {exc}") from exc
            return _parse_response(endpoint, request, payload)
        raise TransportError(
            f"no response after {endpoint.max_retries + 1} attempts; last: {last_failure}"
        )
    finally:
        if own_session:
            session.close()


def fetch_health(endpoint: BridgeEndpoint, session: requests.Session | None = None) -> dict:
    own_session = session is None
    if own_session:
        session = requests.Session()
    try:
        try:
            http = session.get(endpoint.health_url, timeout=endpoint.timeout_ms / 1000.0)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"health check failed: {exc}") from exc
        if http.status_code != 200:
            raise TransportError(f"health check returned status {http.status_code}")
        payload = http.json()
        for key in ("status", "model_id", "vocab_size"):
            if key not in payload:
                raise ProtocolError(f"health response missing field {key!r}")
        if payload["status"] != "ok":
            raise TransportError(f"bridge status {payload['status']!r}")
        return payload
    finally:
        if own_session:
            session.close()


class BridgeBackend:
    """Engine-facing backend speaking the wire protocol.

    Identity and vocabulary come from the health endpoint at construction;
    a shared pooled session serves the per-step requests. Each request is
    independent, so concurrent decodes may share one backend.
    """

    def __init__(self, endpoint: BridgeEndpoint):
        self.endpoint = endpoint
        self._session = requests.Session()
        health = fetch_health(endpoint, self._session)
        self.model_id = str(health["model_id"])
        self.vocab_size = int(health["vocab_size"])
        self.logit_kind = str(health.get("logit_kind", "raw"))
        if endpoint.expected_model_id is not None and self.model_id != endpoint.expected_model_id:
            raise IdentityError(
                f"bridge identifies as {self.model_id!r}, "
                f"expected {endpoint.expected_model_id!r}"
            )

    def fetch_logits(self, request: BackendRequest) -> BackendResponse:
        return fetch_logits(self.endpoint, request, self._session)

    def close(self) -> None:
        self._session.close()
