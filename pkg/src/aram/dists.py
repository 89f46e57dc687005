"""Categorical distributions over a vocabulary and the divergences between them.

Everything here is a pure float64 function of its inputs. The one global
convention is the probability floor: before any log-ratio is taken, both
distributions are clipped below at ``PROB_FLOOR`` and renormalized, because
softmax outputs of real models routinely underflow to exact zeros and the
log-likelihood ratio is undefined there. Plain entropy does not need the
floor (x*log(x) -> 0 as x -> 0) and uses the 0*log(0) = 0 convention so that
one-hot vectors have exactly zero entropy.

All divergences and entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .errors import InvalidInputError

PROB_FLOOR = 1e-12


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ProbVector:
    """A categorical distribution over vocabulary indices 0..V-1.

    Entries must be non-negative and sum to 1 within 1e-9; V >= 2.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.probs, "probs")
        object.__setattr__(self, "probs", arr)
        if arr.size < 2:
            raise InvalidInputError(f"vocabulary must have at least 2 entries, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("probabilities must be finite")
        if np.any(arr < 0):
            raise InvalidInputError("probabilities must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"probabilities must sum to 1 within 1e-9, got {total!r}")

    @property
    def vocab_size(self) -> int:
        return int(self.probs.size)

    def floored(self) -> "ProbVector":
        """Entries clipped below at PROB_FLOOR and renormalized."""
        clipped = np.maximum(self.probs, PROB_FLOOR)
        return ProbVector(clipped / clipped.sum())


@dataclass(frozen=True)
class LogitVector:
    """Unnormalized log-odds over a vocabulary; every entry must be finite."""

    logits: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.logits, "logits")
        object.__setattr__(self, "logits", arr)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("logits must be finite (no NaN or infinities)")

    def __len__(self) -> int:
        return int(self.logits.size)


@dataclass(frozen=True)
class ContextScore:
    """Per-token log-likelihood ratio log(p_cond/p_prior) after flooring.

    ``finite_mask`` marks entries where both raw probabilities exceeded the
    floor, i.e. where the score did not depend on the clipping.
    """

    scores: np.ndarray
    finite_mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "scores", _as_float_array(self.scores, "scores"))
        object.__setattr__(self, "finite_mask", np.asarray(self.finite_mask, dtype=bool))
        if self.scores.shape != self.finite_mask.shape:
            raise InvalidInputError("scores and finite_mask must have the same shape")


def _check_same_vocab(p: ProbVector, q: ProbVector) -> None:
    if p.vocab_size != q.vocab_size:
        raise InvalidInputError(
            f"vocabulary sizes differ: {p.vocab_size} vs {q.vocab_size}"
        )


def normalize_logits(l: LogitVector) -> ProbVector:
    """Softmax of a logit vector (max-subtracted, overflow-free)."""
    return ProbVector(softmax(l.logits))


def kl_divergence(p: ProbVector, q: ProbVector) -> float:
    """KL(p || q) = sum_x p(x) ln(p(x)/q(x)) on the floored distributions."""
    _check_same_vocab(p, q)
    fp, fq = p.floored().probs, q.floored().probs
    return float(np.sum(fp * (np.log(fp) - np.log(fq))))


def entropy(p: ProbVector) -> float:
    """Shannon entropy -sum p ln p with the 0*ln(0) = 0 convention."""
    return float(-np.sum(xlogy(p.probs, p.probs)))


def context_score(p_cond: ProbVector, p_prior: ProbVector) -> ContextScore:
    """Elementwise log(p_cond/p_prior) after flooring both distributions."""
    _check_same_vocab(p_cond, p_prior)
    fc, fp = p_cond.floored().probs, p_prior.floored().probs
    mask = (p_cond.probs > PROB_FLOOR) & (p_prior.probs > PROB_FLOOR)
    return ContextScore(scores=np.log(fc) - np.log(fp), finite_mask=mask)


def tilted_distribution(
    p_prior: ProbVector, s: ContextScore, lam: float
) -> tuple[ProbVector, float]:
    """Exponentially tilt the prior by exp(lam * s) and renormalize.

    Returns the tilted distribution and ln Z_lam, evaluated in log space so
    arbitrarily large |lam * s| cannot overflow.
    """
    if not np.isfinite(lam):
        raise InvalidInputError(f"lambda must be finite, got {lam!r}")
    if s.scores.size != p_prior.vocab_size:
        raise InvalidInputError("score vector length does not match the vocabulary")
    if not np.all(np.isfinite(s.scores)):
        raise InvalidInputError("scores must be finite")
    log_w = np.log(p_prior.floored().probs) + lam * s.scores
    log_z = float(logsumexp(log_w))
    return ProbVector(np.exp(log_w - log_z)), log_z


def dv_bound(p_cond: ProbVector, p_prior: ProbVector, lam: float) -> float:
    """Variational lower bound L(lam) = lam * E_cond[s] - ln Z_lam.

    For every finite lam this is <= KL(p_cond || p_prior); equality at lam=1.
    """
    s = context_score(p_cond, p_prior)
    expected_score = float(np.sum(p_cond.floored().probs * s.scores))
    _, log_z = tilted_distribution(p_prior, s, lam)
    return lam * expected_score - log_z


def jensen_shannon_divergence(p: ProbVector, q: ProbVector) -> float:
    """JSD(p, q) = (KL(p||m) + KL(q||m)) / 2 with m the floored midpoint; in [0, ln 2]."""
    _check_same_vocab(p, q)
    fp, fq = p.floored(), q.floored()
    m = ProbVector((fp.probs + fq.probs) / 2.0)
    return 0.5 * kl_divergence(fp, m) + 0.5 * kl_divergence(fq, m)
