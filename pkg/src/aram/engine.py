"""Iterative denoising loop for masked-sequence decoding with per-token guidance.

One decode maintains a partially masked token sequence and walks the step
counter from T down to 0. Every executed step queries the backend once for
context-conditioned logits and (for guided policies) once for prior logits
covering all currently masked positions, computes per-position guidance
diagnostics and guided logits, samples a candidate token per position, and
commits the top-k positions according to the unmasking policy, where
k = ceil(masked / remaining steps) guarantees completion by step 0.

Committed tokens are never re-masked. A decode is strictly sequential over
steps; distinct decodes are independent and may run concurrently.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.special import softmax, xlogy

from .errors import InvalidConfigError, InvalidInputError, ProtocolError
from .dists import LogitVector
from .guidance import GuidanceConfig, GuidanceDiagnostics, Policy, policy_lambda_and_logits

MASK_TOKEN = -1

NO_CONTEXT_SENTINEL = "No relevant context available."


def format_context_block(contexts: Sequence[str]) -> str:
    """Join retrieved passages as numbered "Passage k: <text>" lines."""
    return "\n".join(f"Passage {k}: {text}" for k, text in enumerate(contexts, start=1))


def build_prompt(query: str, contexts: Sequence[str], conditioned: bool) -> str:
    """Standard prompt layout shared by text backends and the remote bridge.

    The prior prompt (and any prompt with an empty context list) carries the
    literal no-context sentinel so conditional and prior prompts coincide
    exactly when nothing was retrieved.
    """
    block = format_context_block(contexts) if (conditioned and contexts) else NO_CONTEXT_SENTINEL
    return f"Context:\n{block}\n\nQuestion: {query}\n\nAnswer:"


# ---------------------------------------------------------------------------
# State and configuration types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SequenceState:
    """Partially masked token sequence at step ``step`` of ``total_steps``."""

    tokens: tuple[int, ...]
    masked: tuple[bool, ...]
    step: int
    total_steps: int

    def __post_init__(self):
        if len(self.tokens) != len(self.masked):
            raise InvalidInputError("tokens and masked flags must have equal length")
        if not (0 <= self.step <= self.total_steps):
            raise InvalidInputError(
                f"step {self.step} outside [0, {self.total_steps}]"
            )

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def masked_count(self) -> int:
        return sum(self.masked)

    def masked_positions(self) -> tuple[int, ...]:
        return tuple(i for i, m in enumerate(self.masked) if m)


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling knobs; temperature 0 means deterministic argmax."""

    temperature: float = 0.0
    top_p: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not (self.temperature >= 0):
            raise InvalidConfigError(f"temperature must be >= 0, got {self.temperature!r}")
        if not (0 < self.top_p <= 1):
            raise InvalidConfigError(f"top_p must be in (0, 1], got {self.top_p!r}")


class UnmaskPolicy(str, enum.Enum):
    """Rule choosing which masked positions commit their candidate token."""

    LOW_CONFIDENCE = "low_confidence"
    ENTROPY = "entropy"
    RANDOM = "random"


@dataclass(frozen=True)
class PositionTrace:
    """Per-position record within one step."""

    position: int
    was_masked: bool
    diagnostics: GuidanceDiagnostics
    chosen_token: int | None
    confidence: float


@dataclass(frozen=True)
class StepTrace:
    """All per-position records emitted by one executed step."""

    step: int
    records: tuple[PositionTrace, ...]


@dataclass(frozen=True)
class BackendRequest:
    """One logit query covering every masked position of a state.

    Masked slots in ``tokens`` carry MASK_TOKEN (-1). ``conditioned`` selects
    the context-conditioned branch; backends must ignore ``context_texts``
    when it is false.
    """

    query_text: str
    context_texts: tuple[str, ...]
    tokens: tuple[int, ...]
    masked: tuple[bool, ...]
    conditioned: bool
    vocab_size: int


@dataclass(frozen=True)
class BackendResponse:
    """Per-masked-position logit vectors in ascending position order."""

    logits: tuple[LogitVector, ...]
    model_id: str
    latency_ms: float


class Backend(Protocol):
    """Contract shared by toy backends and the remote bridge client."""

    model_id: str
    vocab_size: int
    logit_kind: str  # "raw" for arbitrary logits, "log_prob" for log-probabilities

    def fetch_logits(self, request: BackendRequest) -> BackendResponse: ...


def validate_response(request: BackendRequest, response: BackendResponse) -> None:
    """Check a response covers exactly the request's masked positions."""
    expected = [i for i, m in enumerate(request.masked) if m]
    if len(response.logits) != len(expected):
        if len(response.logits) < len(expected):
            missing = expected[len(response.logits)]
            raise ProtocolError(
                f"response covers {len(response.logits)} of {len(expected)} masked "
                f"positions; first missing position is {missing}"
            )
        raise ProtocolError(
            f"response has {len(response.logits)} vectors for {len(expected)} masked positions"
        )
    for pos, vec in zip(expected, response.logits):
        if len(vec) != request.vocab_size:
            raise ProtocolError(
                f"logit vector for position {pos} has length {len(vec)}, "
                f"expected vocab size {request.vocab_size}"
            )


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def init_state(length: int, steps: int) -> SequenceState:
    """All-masked sequence of ``length`` tokens at step ``steps``."""
    if length < 1:
        raise InvalidConfigError(f"length must be >= 1, got {length}")
    if steps < 1:
        raise InvalidConfigError(f"steps must be >= 1, got {steps}")
    if steps > length:
        raise InvalidConfigError(
            f"steps ({steps}) must not exceed length ({length}); "
            "every executed step must unmask at least one token"
        )
    return SequenceState(
        tokens=(MASK_TOKEN,) * length,
        masked=(True,) * length,
        step=steps,
        total_steps=steps,
    )


def plan_unmask_count(state: SequenceState) -> int:
    """Tokens to commit this step: ceil(masked / remaining steps)."""
    remaining = state.masked_count
    if remaining < 1:
        raise InvalidInputError("no masked positions remain")
    if state.step < 1:
        raise InvalidInputError("no steps remain")
    return -(-remaining // state.step)


def sample_token(l: LogitVector, sampler: SamplerConfig, rng: np.random.Generator | None = None) -> int:
    """Draw one token from a logit vector.

    Temperature 0 is argmax with lowest-index tie-break. Otherwise logits are
    divided by the temperature and nucleus truncation keeps the smallest
    descending-probability prefix whose mass reaches top_p (with a 1e-12
    slack absorbing cumulative-sum rounding) before renormalizing and
    sampling.
    """
    if sampler.temperature == 0.0:
        return int(np.argmax(l.logits))
    if rng is None:
        rng = np.random.default_rng(sampler.seed)
    probs = softmax(l.logits / sampler.temperature)
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cutoff = int(np.searchsorted(cumulative, min(sampler.top_p, cumulative[-1]) - 1e-12))
    kept = order[: cutoff + 1]
    kept_probs = probs[kept]
    kept_probs = kept_probs / kept_probs.sum()
    return int(rng.choice(kept, p=kept_probs))


def select_positions(
    scores: Mapping[int, float],
    policy: UnmaskPolicy,
    k: int,
    rng: np.random.Generator | None = None,
) -> tuple[int, ...]:
    """Pick the k positions that commit this step.

    Score semantics depend on the policy: candidate-token probability for
    LOW_CONFIDENCE (highest commit), guided-distribution entropy for ENTROPY
    (lowest commit). RANDOM ignores the scores. Ties always break toward the
    lowest position index.
    """
    positions = sorted(scores)
    if k > len(positions):
        raise InvalidInputError(f"cannot select {k} of {len(positions)} positions")
    if policy is UnmaskPolicy.LOW_CONFIDENCE:
        ranked = sorted(positions, key=lambda p: (-scores[p], p))
    elif policy is UnmaskPolicy.ENTROPY:
        ranked = sorted(positions, key=lambda p: (scores[p], p))
    elif policy is UnmaskPolicy.RANDOM:
        if rng is None:
            rng = np.random.default_rng(0)
        ranked = list(rng.permutation(positions))
    else:
        raise InvalidConfigError(f"unknown unmask policy {policy!r}")
    return tuple(sorted(int(p) for p in ranked[:k]))


def _request_for(
    state: SequenceState,
    query: str,
    contexts: Sequence[str],
    conditioned: bool,
    vocab_size: int,
) -> BackendRequest:
    # An empty context list makes the conditional prompt identical to the
    # prior prompt, so the conditioned flag is dropped in that case.
    return BackendRequest(
        query_text=query,
        context_texts=tuple(contexts),
        tokens=tuple(MASK_TOKEN if m else t for t, m in zip(state.tokens, state.masked)),
        masked=tuple(state.masked),
        conditioned=conditioned and bool(contexts),
        vocab_size=vocab_size,
    )


def denoise_step(
    state: SequenceState,
    backend: Backend,
    query: str,
    contexts: Sequence[str],
    guidance_cfg: GuidanceConfig,
    sampler: SamplerConfig,
    unmask_policy: UnmaskPolicy,
    rng: np.random.Generator,
) -> tuple[SequenceState, StepTrace]:
    """Execute one denoising step; returns the new state and its trace.

    Backend failures propagate before any commit, leaving ``state`` usable.
    """
    if state.step < 1:
        raise InvalidInputError("state has no steps remaining")
    masked_positions = state.masked_positions()
    if not masked_positions:
        raise InvalidInputError("state has no masked positions")

    k = plan_unmask_count(state)

    cond_request = _request_for(state, query, contexts, True, backend.vocab_size)
    cond_response = backend.fetch_logits(cond_request)
    validate_response(cond_request, cond_response)

    if guidance_cfg.policy is Policy.NO_GUIDANCE:
        prior_response = None
    else:
        prior_request = replace(cond_request, conditioned=False)
        prior_response = backend.fetch_logits(prior_request)
        validate_response(prior_request, prior_response)

    records: list[PositionTrace] = []
    candidates: dict[int, int] = {}
    selection_scores: dict[int, float] = {}
    for idx, pos in enumerate(masked_positions):
        l_cond = cond_response.logits[idx]
        l_prior = prior_response.logits[idx] if prior_response is not None else l_cond
        guided, diag = policy_lambda_and_logits(l_cond, l_prior, guidance_cfg)

        guided_probs = softmax(guided.logits)
        candidate = sample_token(guided, sampler, rng)
        confidence = float(guided_probs[candidate])

        candidates[pos] = candidate
        if unmask_policy is UnmaskPolicy.ENTROPY:
            selection_scores[pos] = float(-np.sum(xlogy(guided_probs, guided_probs)))
        else:
            selection_scores[pos] = confidence
        records.append(
            PositionTrace(
                position=pos,
                was_masked=True,
                diagnostics=diag,
                chosen_token=None,
                confidence=confidence,
            )
        )

    committed = set(select_positions(selection_scores, unmask_policy, k, rng))

    new_tokens = list(state.tokens)
    new_masked = list(state.masked)
    for pos in committed:
        new_tokens[pos] = candidates[pos]
        new_masked[pos] = False
    records = [
        replace(r, chosen_token=candidates[r.position]) if r.position in committed else r
        for r in records
    ]

    new_state = SequenceState(
        tokens=tuple(new_tokens),
        masked=tuple(new_masked),
        step=state.step - 1,
        total_steps=state.total_steps,
    )
    return new_state, StepTrace(step=state.step, records=tuple(records))


@dataclass(frozen=True)
class DecodeResult:
    """Final sequence plus the full step-by-step trace and cost accounting."""

    tokens: tuple[int, ...]
    steps: tuple[StepTrace, ...]
    nfe_count: int
    wall_time_s: float
    logit_kind: str

    @property
    def executed_steps(self) -> int:
        return len(self.steps)


def decode(
    query: str,
    contexts: Sequence[str],
    backend: Backend,
    guidance_cfg: GuidanceConfig,
    sampler: SamplerConfig,
    unmask_policy: UnmaskPolicy,
    length: int,
    steps: int,
) -> DecodeResult:
    """Run the full denoising loop until no masked position remains.

    Guided policies cost 2 backend calls per executed step, NO_GUIDANCE
    costs 1. Steps left over after everything is unmasked are skipped.
    """
    state = init_state(length, steps)
    rng = np.random.default_rng(sampler.seed)
    nfe_per_step = 1 if guidance_cfg.policy is Policy.NO_GUIDANCE else 2

    traces: list[StepTrace] = []
    nfe = 0
    started = time.perf_counter()
    while state.step >= 1 and state.masked_count > 0:
        state, trace = denoise_step(
            state, backend, query, contexts, guidance_cfg, sampler, unmask_policy, rng
        )
        traces.append(trace)
        nfe += nfe_per_step
    wall = time.perf_counter() - started

    return DecodeResult(
        tokens=state.tokens,
        steps=tuple(traces),
        nfe_count=nfe,
        wall_time_s=wall,
        logit_kind=getattr(backend, "logit_kind", "raw"),
    )


# ---------------------------------------------------------------------------
# Trace serialization (JSONL, one row per masked position per step)
# ---------------------------------------------------------------------------


def _sig9(x: float) -> float:
    """Round to 9 significant digits for stable serialization."""
    return float(f"{x:.9g}")


def trace_rows(run_id: str, steps: Iterable[StepTrace]) -> list[dict]:
    rows = []
    for step_trace in steps:
        for r in step_trace.records:
            rows.append(
                {
                    "run_id": run_id,
                    "step": step_trace.step,
                    "position": r.position,
                    "signal": _sig9(r.diagnostics.signal),
                    "noise": _sig9(r.diagnostics.noise),
                    "snr": _sig9(r.diagnostics.snr),
                    "lambda": _sig9(r.diagnostics.lam),
                    "unmasked": r.chosen_token is not None,
                    "token": r.chosen_token,
                }
            )
    return rows


def write_trace(path, run_id: str, steps: Iterable[StepTrace]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in trace_rows(run_id, steps):
            fh.write(json.dumps(row) + "\n")
