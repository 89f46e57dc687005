"""Seeded generators for the three retrieval-context regimes.

Reliable contexts concentrate the conditional distribution on the gold token
and shift it far from the prior; irrelevant contexts leave the conditional
within a small total-variation ball of the prior; conflicting contexts
flatten the conditional and move its argmax away from the gold token that
the prior prefers. Instances are drawn as Dirichlet-like normalized vectors
post-processed by rejection (the generator keeps drawing from the same
seeded stream until the kind constraints hold), so equal seeds give equal
instances.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .dists import ProbVector, entropy
from .engine import BackendRequest, BackendResponse
from .dists import LogitVector
from .guidance import signal as symmetric_kl


class ScenarioKind(str, enum.Enum):
    RELIABLE = "reliable"
    IRRELEVANT = "irrelevant"
    CONFLICTING = "conflicting"


@dataclass(frozen=True)
class ScenarioInstance:
    """One answer-position distribution pair realizing a context regime."""

    kind: ScenarioKind
    gold_token: int
    p_prior: ProbVector
    p_cond: ProbVector
    seed: int


def _normalize(raw: np.ndarray) -> ProbVector:
    # Tiny floor keeps later log-prob serving finite.
    raw = np.maximum(raw, 1e-9)
    return ProbVector(raw / raw.sum())


def total_variation(p: ProbVector, q: ProbVector) -> float:
    return float(0.5 * np.abs(p.probs - q.probs).sum())


_MAX_DRAWS = 10_000


def generate_scenario(kind: ScenarioKind, vocab_size: int, seed: int) -> ScenarioInstance:
    """Draw one instance satisfying the invariants of ``kind``.

    Constraints enforced by rejection:
      Reliable:    p_cond mass on gold >= 0.85, H(p_cond) <= 0.5 ln V,
                   symmetric KL >= 1.05
      Irrelevant:  TV(p_cond, p_prior) <= 0.02
      Conflicting: H(p_cond) >= 0.8 ln V, argmax(p_cond) != gold,
                   symmetric KL >= 1.2 (keeps the adaptive scale clear of
                   the irrelevant regime)
    """
    if vocab_size < 4:
        raise InvalidInputError(f"vocab_size must be >= 4, got {vocab_size}")
    rng = np.random.default_rng(seed)
    v = vocab_size
    log_v = np.log(v)

    for _ in range(_MAX_DRAWS):
        if kind is ScenarioKind.RELIABLE:
            gold = int(rng.integers(v))
            mass = rng.uniform(0.85, 0.98)
            rest = rng.dirichlet(np.ones(v - 1)) * (1 - mass)
            cond = np.insert(rest, gold, mass)
            p_cond = _normalize(cond)
            p_prior = _normalize(rng.dirichlet(np.ones(v)))
            if (
                p_cond.probs[gold] >= 0.85
                and entropy(p_cond) <= 0.5 * log_v
                and symmetric_kl(p_cond, p_prior) >= 1.05
            ):
                return ScenarioInstance(kind, gold, p_prior, p_cond, seed)

        elif kind is ScenarioKind.IRRELEVANT:
            p_prior = _normalize(rng.dirichlet(np.ones(v)))
            wiggle = 1 + 0.015 * rng.uniform(-1, 1, size=v)
            p_cond = _normalize(p_prior.probs * wiggle)
            if total_variation(p_cond, p_prior) <= 0.02:
                gold = int(np.argmax(p_prior.probs))
                return ScenarioInstance(kind, gold, p_prior, p_cond, seed)

        else:
            gold = int(rng.integers(v))
            gold_mass = rng.uniform(0.7, 0.9)
            rest = rng.dirichlet(np.ones(v - 1)) * (1 - gold_mass)
            p_prior = _normalize(np.insert(rest, gold, gold_mass))
            base = 0.7 / v + 0.3 * rng.dirichlet(np.ones(v))
            base[gold] *= rng.uniform(0.05, 0.15)
            conflict = int(rng.integers(v))
            if conflict != gold:
                base[conflict] += 0.05
            p_cond = _normalize(base)
            if (
                entropy(p_cond) >= 0.8 * log_v
                and int(np.argmax(p_cond.probs)) != gold
                and symmetric_kl(p_cond, p_prior) >= 1.2
            ):
                return ScenarioInstance(kind, gold, p_prior, p_cond, seed)

    raise RuntimeError(f"no {kind.value} draw satisfied its constraints after {_MAX_DRAWS} tries")


class ScenarioBackend:
    """Serves a scenario's distribution pair at every masked position."""

    logit_kind = "log_prob"

    def __init__(self, instance: ScenarioInstance):
        self.instance = instance
        self.vocab_size = instance.p_cond.vocab_size
        self.model_id = f"scenario-{instance.kind.value}"
        self._cond = LogitVector(np.log(instance.p_cond.floored().probs))
        self._prior = LogitVector(np.log(instance.p_prior.floored().probs))

    def fetch_logits(self, request: BackendRequest) -> BackendResponse:
        vec = self._cond if request.conditioned else self._prior
        vectors = tuple(vec for m in request.masked if m)
        return BackendResponse(logits=vectors, model_id=self.model_id, latency_ms=0.0)


def scenario_backend(instance: ScenarioInstance) -> ScenarioBackend:
    return ScenarioBackend(instance)
