"""Deterministic logit backends for tests and desk-scale studies.

Two families: a table-driven backend that looks logit vectors up by position
(or by position plus remaining-mask pattern), and a count-based language
backend built from unigram/bigram statistics of a whitespace-tokenized corpus
whose conditional branch mixes in a context-restricted distribution. Both are
immutable after construction, so concurrent requests are safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, ProtocolError
from .dists import LogitVector
from .engine import BackendRequest, BackendResponse

_CONDITIONS = ("cond", "prior")


def mask_pattern(masked: tuple[bool, ...] | list[bool]) -> str:
    """Render mask flags as a compact key fragment, M for masked."""
    return "".join("M" if m else "." for m in masked)


@dataclass(frozen=True)
class ToyModelSpec:
    """Declarative logit tables.

    ``tables`` maps condition ("cond" / "prior") to rows keyed either by
    position ("0", "1", ...) in position mode or by "<position>|<pattern>"
    in pattern mode, where the pattern marks masked slots with M and
    committed slots with a dot. Unkeyed states fall back to default_logits.
    """

    vocab: tuple[str, ...]
    mode: str  # "position" or "pattern"
    tables: dict = field(default_factory=dict)
    default_logits: tuple[float, ...] = ()

    def __post_init__(self):
        if self.mode not in ("position", "pattern"):
            raise InvalidConfigError(f"mode must be 'position' or 'pattern', got {self.mode!r}")
        if len(self.vocab) < 2:
            raise InvalidConfigError("vocab needs at least 2 tokens")
        v = len(self.vocab)
        if len(self.default_logits) != v:
            raise InvalidConfigError(
                f"default_logits has length {len(self.default_logits)}, expected {v}"
            )
        if not np.all(np.isfinite(self.default_logits)):
            raise InvalidConfigError("default_logits must be finite")
        for condition, rows in self.tables.items():
            if condition not in _CONDITIONS:
                raise InvalidConfigError(f"unknown table condition {condition!r}")
            for key, row in rows.items():
                if len(row) != v:
                    raise InvalidConfigError(
                        f"table row {condition}/{key} has length {len(row)}, expected {v}"
                    )
                if not np.all(np.isfinite(row)):
                    raise InvalidConfigError(f"table row {condition}/{key} must be finite")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def load_toy_spec(path) -> ToyModelSpec:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return ToyModelSpec(
            vocab=tuple(raw["vocab"]),
            mode=raw["mode"],
            tables={c: dict(rows) for c, rows in raw.get("tables", {}).items()},
            default_logits=tuple(raw["default_logits"]),
        )
    except KeyError as exc:
        raise InvalidConfigError(f"toy model spec missing field {exc}") from exc


def save_toy_spec(spec: ToyModelSpec, path) -> None:
    doc = {
        "vocab": list(spec.vocab),
        "mode": spec.mode,
        "tables": {c: {k: list(row) for k, row in rows.items()} for c, rows in spec.tables.items()},
        "default_logits": list(spec.default_logits),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


class TableBackend:
    """Serves logits by table lookup; fully deterministic."""

    logit_kind = "raw"

    def __init__(self, spec: ToyModelSpec, model_id: str = "toy-table"):
        self.spec = spec
        self.model_id = model_id
        self.vocab_size = spec.vocab_size

    def decode_tokens(self, token_ids) -> list[str]:
        return [self.spec.vocab[t] for t in token_ids]

    def _row(self, condition: str, position: int, masked) -> tuple[float, ...]:
        rows = self.spec.tables.get(condition, {})
        if self.spec.mode == "position":
            key = str(position)
        else:
            key = f"{position}|{mask_pattern(masked)}"
        row = rows.get(key)
        return tuple(row) if row is not None else self.spec.default_logits

    def fetch_logits(self, request: BackendRequest) -> BackendResponse:
        if request.vocab_size != self.vocab_size:
            raise ProtocolError(
                f"request vocab size {request.vocab_size} != backend vocab {self.vocab_size}"
            )
        condition = "cond" if request.conditioned else "prior"
        vectors = tuple(
            LogitVector(np.asarray(self._row(condition, pos, request.masked), dtype=float))
            for pos, m in enumerate(request.masked)
            if m
        )
        return BackendResponse(logits=vectors, model_id=self.model_id, latency_ms=0.0)


def table_backend(spec: ToyModelSpec) -> TableBackend:
    return TableBackend(spec)


class CountBackend:
    """Unigram/bigram language backend over a whitespace-tokenized corpus.

    The prior at a position is the add-one-smoothed bigram distribution given
    a committed left neighbor, falling back to the smoothed unigram. The
    conditional branch mixes the prior with the smoothed unigram counts
    restricted to tokens that appear in the supplied contexts:

        p_cond = (1 - w) * p_prior + w * restricted

    where the restriction zeroes corpus counts outside the context token set
    before smoothing, so contexts disjoint from the corpus leave only the
    uniform smoothing floor. Logits are log-probabilities.
    """

    logit_kind = "log_prob"

    def __init__(self, corpus, context_weight: float = 0.7, model_id: str = "toy-count"):
        if not (0 <= context_weight <= 1):
            raise InvalidConfigError(f"context_weight must be in [0, 1], got {context_weight!r}")
        sequences = [seq.split() if isinstance(seq, str) else list(seq) for seq in corpus]
        sequences = [s for s in sequences if s]
        if not sequences:
            raise InvalidConfigError("corpus must contain at least one non-empty sequence")
        vocab = sorted({tok for seq in sequences for tok in seq})
        if len(vocab) < 2:
            raise InvalidConfigError("corpus must contain at least 2 distinct tokens")
        self.vocab = tuple(vocab)
        self.vocab_size = len(vocab)
        self.token_ids = {tok: i for i, tok in enumerate(vocab)}
        self.context_weight = float(context_weight)
        self.model_id = model_id

        v = self.vocab_size
        unigram = np.zeros(v)
        bigram = np.zeros((v, v))
        for seq in sequences:
            ids = [self.token_ids[t] for t in seq]
            for i, t in enumerate(ids):
                unigram[t] += 1
                if i > 0:
                    bigram[ids[i - 1], t] += 1
        self._unigram_counts = unigram
        self._prior_unigram = (unigram + 1) / (unigram + 1).sum()
        self._prior_bigram = (bigram + 1) / (bigram + 1).sum(axis=1, keepdims=True)

    def token_id(self, token: str) -> int:
        try:
            return self.token_ids[token]
        except KeyError:
            raise InvalidConfigError(f"token {token!r} not in backend vocabulary") from None

    def decode_tokens(self, token_ids) -> list[str]:
        return [self.vocab[t] for t in token_ids]

    def _context_restricted(self, contexts) -> np.ndarray:
        in_context = np.zeros(self.vocab_size, dtype=bool)
        for passage in contexts:
            for tok in passage.split():
                idx = self.token_ids.get(tok)
                if idx is not None:
                    in_context[idx] = True
        restricted = np.where(in_context, self._unigram_counts, 0.0) + 1
        return restricted / restricted.sum()

    def _prior_at(self, position: int, tokens, masked) -> np.ndarray:
        if position > 0 and not masked[position - 1] and tokens[position - 1] >= 0:
            return self._prior_bigram[tokens[position - 1]]
        return self._prior_unigram

    def fetch_logits(self, request: BackendRequest) -> BackendResponse:
        if request.vocab_size != self.vocab_size:
            raise ProtocolError(
                f"request vocab size {request.vocab_size} != backend vocab {self.vocab_size}"
            )
        restricted = self._context_restricted(request.context_texts) if request.conditioned else None
        vectors = []
        for pos, m in enumerate(request.masked):
            if not m:
                continue
            p = self._prior_at(pos, request.tokens, request.masked)
            if restricted is not None:
                w = self.context_weight
                p = (1 - w) * p + w * restricted
            vectors.append(LogitVector(np.log(p)))
        return BackendResponse(logits=tuple(vectors), model_id=self.model_id, latency_ms=0.0)


def count_backend(corpus, context_weight: float = 0.7) -> CountBackend:
    return CountBackend(corpus, context_weight)


class CallCountingBackend:
    """Wrapper counting fetch_logits calls, split by the conditioned flag."""

    def __init__(self, inner):
        self.inner = inner
        self.total_calls = 0
        self.conditioned_calls = 0
        self.prior_calls = 0

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def logit_kind(self) -> str:
        return self.inner.logit_kind

    def fetch_logits(self, request: BackendRequest) -> BackendResponse:
        self.total_calls += 1
        if request.conditioned:
            self.conditioned_calls += 1
        else:
            self.prior_calls += 1
        return self.inner.fetch_logits(request)
