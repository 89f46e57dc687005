"""Guidance-scale rules: the adaptive SNR rule, its ideal analogue, and baselines.

The central quantity is the signal-to-noise ratio of the belief shift the
retrieved context induces at one token position:

    signal = KL(p_cond || p_prior) + KL(p_prior || p_cond)
    noise  = a dispersion proxy, conditional entropy H(p_cond) by default
    snr    = signal / (noise + epsilon)

The applied scale is lambda = lambda_max * tanh(beta * snr) (or the raw SNR
clamped to [0, lambda_max]). lambda interpolates logits as
prior + lambda * (cond - prior): 0 trusts the parametric prior, 1 trusts the
context-conditioned prediction, values in between hedge.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dists import (
    ContextScore,
    LogitVector,
    ProbVector,
    context_score,
    entropy,
    jensen_shannon_divergence,
    kl_divergence,
    normalize_logits,
)
from .errors import DegenerateDenominatorError, InvalidConfigError, InvalidInputError

VARIANCE_FLOOR = 1e-12


class NoiseProxy(str, enum.Enum):
    """Dispersion estimate used in the SNR denominator."""

    COND_ENTROPY = "cond_entropy"
    PRIOR_SCORE_VARIANCE = "prior_score_variance"
    PRIOR_ENTROPY = "prior_entropy"
    ABS_ENTROPY_DIFF = "abs_entropy_diff"


class Stability(str, enum.Enum):
    """Squashing applied to beta * snr before scaling by lambda_max."""

    TANH = "tanh"
    RAW_CLAMPED = "raw"


class Policy(str, enum.Enum):
    """Which rule produces the guided logits."""

    ARAM = "aram"
    STATIC_CFG = "static"
    CAD = "cad"
    ADACAD_JSD = "adacad"
    NO_GUIDANCE = "none"


@dataclass(frozen=True)
class GuidanceConfig:
    """Knobs for the per-token guidance computation.

    ``static_lambda`` is the fixed scale for the STATIC_CFG policy;
    ``cad_weight`` is the contrast weight w in cond + w * (cond - prior).
    Defaults follow the reference decoding setup (lambda_max=1, beta=0.1).
    """

    policy: Policy = Policy.ARAM
    lambda_max: float = 1.0
    beta: float = 0.1
    epsilon: float = 1e-6
    noise_proxy: NoiseProxy = NoiseProxy.COND_ENTROPY
    stability: Stability = Stability.TANH
    static_lambda: float = 1.0
    cad_weight: float = 1.0  # effective guided scale 1 + w = 2, the reference setting

    def __post_init__(self):
        if not (self.lambda_max >= 0):
            raise InvalidConfigError(f"lambda_max must be >= 0, got {self.lambda_max!r}")
        if not (self.beta > 0):
            raise InvalidConfigError(f"beta must be > 0, got {self.beta!r}")
        if not (self.epsilon > 0):
            raise InvalidConfigError(f"epsilon must be > 0, got {self.epsilon!r}")
        if not isinstance(self.policy, Policy):
            raise InvalidConfigError(f"unknown policy {self.policy!r}")
        if not isinstance(self.noise_proxy, NoiseProxy):
            raise InvalidConfigError(f"unknown noise proxy {self.noise_proxy!r}")
        if not isinstance(self.stability, Stability):
            raise InvalidConfigError(f"unknown stability transform {self.stability!r}")


@dataclass(frozen=True)
class GuidanceDiagnostics:
    """Per-token record of (signal, noise, snr, lambda).

    Static policies fill signal/noise/snr with a 0 sentinel so every trace
    row has the same schema.
    """

    signal: float
    noise: float
    snr: float
    lam: float


def signal(p_cond: ProbVector, p_prior: ProbVector) -> float:
    """Symmetric KL divergence between conditional and prior; >= 0.

    Equals the first derivative of the variational bound at lambda = 0.
    """
    return kl_divergence(p_cond, p_prior) + kl_divergence(p_prior, p_cond)


def prior_score_variance(p_cond: ProbVector, p_prior: ProbVector) -> float:
    """Variance of the context score under the (floored) prior."""
    s = context_score(p_cond, p_prior).scores
    fp = p_prior.floored().probs
    mean = float(np.sum(fp * s))
    second = float(np.sum(fp * s * s))
    return max(second - mean * mean, 0.0)


def noise(p_cond: ProbVector, p_prior: ProbVector, kind: NoiseProxy) -> float:
    """Dispersion proxy for the SNR denominator; always >= 0."""
    if kind is NoiseProxy.COND_ENTROPY:
        return entropy(p_cond)
    if kind is NoiseProxy.PRIOR_SCORE_VARIANCE:
        return prior_score_variance(p_cond, p_prior)
    if kind is NoiseProxy.PRIOR_ENTROPY:
        return entropy(p_prior)
    if kind is NoiseProxy.ABS_ENTROPY_DIFF:
        return abs(entropy(p_prior) - entropy(p_cond))
    raise InvalidConfigError(f"unknown noise proxy {kind!r}")


def ideal_lambda_star(p_cond: ProbVector, p_prior: ProbVector) -> float:
    """Maximizer of the quadratic model of the variational bound around 0.

    Equals signal / Var_prior(score). Raises DegenerateDenominatorError when
    the variance sits below the numerical floor (e.g. identical inputs).
    """
    var = prior_score_variance(p_cond, p_prior)
    if var <= VARIANCE_FLOOR:
        raise DegenerateDenominatorError(
            f"prior score variance {var!r} is below the {VARIANCE_FLOOR} floor", var
        )
    return signal(p_cond, p_prior) / var


def lambda_from_snr(snr: float, cfg: GuidanceConfig) -> float:
    """Map a non-negative SNR to a guidance scale in [0, lambda_max]."""
    if cfg.stability is Stability.TANH:
        lam = cfg.lambda_max * math.tanh(cfg.beta * snr)
    else:
        lam = min(cfg.lambda_max, cfg.lambda_max * cfg.beta * snr)
    return min(max(lam, 0.0), cfg.lambda_max)


def adaptive_lambda(
    p_cond: ProbVector, p_prior: ProbVector, cfg: GuidanceConfig
) -> GuidanceDiagnostics:
    """Compute (signal, noise, snr, lambda) for one token position.

    Degenerate inputs stay well defined: zero signal gives lambda = 0 and a
    vanishing noise denominator saturates toward lambda_max via epsilon.
    """
    sig = signal(p_cond, p_prior)
    n = noise(p_cond, p_prior, cfg.noise_proxy)
    snr = sig / (n + cfg.epsilon)
    return GuidanceDiagnostics(signal=sig, noise=n, snr=snr, lam=lambda_from_snr(snr, cfg))


def guided_logits(l_cond: LogitVector, l_prior: LogitVector, lam: float) -> LogitVector:
    """Interpolate/extrapolate logits: prior + lam * (cond - prior).

    lam = 0 and lam = 1 return bit-identical copies of the respective input
    so degenerate-guidance decodes are exactly equivalent to single-branch
    decoding.
    """
    if len(l_cond) != len(l_prior):
        raise InvalidInputError(
            f"logit lengths differ: {len(l_cond)} vs {len(l_prior)}"
        )
    if not np.isfinite(lam):
        raise InvalidInputError(f"lambda must be finite, got {lam!r}")
    if lam == 0.0:
        return LogitVector(l_prior.logits.copy())
    if lam == 1.0:
        return LogitVector(l_cond.logits.copy())
    return LogitVector(l_prior.logits + lam * (l_cond.logits - l_prior.logits))


def policy_lambda_and_logits(
    l_cond: LogitVector, l_prior: LogitVector, cfg: GuidanceConfig
) -> tuple[LogitVector, GuidanceDiagnostics]:
    """Dispatch to the configured guidance rule for one token position."""
    if cfg.policy is Policy.NO_GUIDANCE:
        diag = GuidanceDiagnostics(signal=0.0, noise=0.0, snr=0.0, lam=1.0)
        return LogitVector(l_cond.logits.copy()), diag

    if cfg.policy is Policy.STATIC_CFG:
        diag = GuidanceDiagnostics(signal=0.0, noise=0.0, snr=0.0, lam=cfg.static_lambda)
        return guided_logits(l_cond, l_prior, cfg.static_lambda), diag

    if cfg.policy is Policy.CAD:
        lam = 1.0 + cfg.cad_weight
        diag = GuidanceDiagnostics(signal=0.0, noise=0.0, snr=0.0, lam=lam)
        return guided_logits(l_cond, l_prior, lam), diag

    if cfg.policy is Policy.ADACAD_JSD:
        p_cond, p_prior = normalize_logits(l_cond), normalize_logits(l_prior)
        lam = jensen_shannon_divergence(p_cond, p_prior) / math.log(2.0)
        lam = min(max(lam, 0.0), 1.0)
        diag = GuidanceDiagnostics(signal=0.0, noise=0.0, snr=0.0, lam=lam)
        return guided_logits(l_cond, l_prior, lam), diag

    if cfg.policy is Policy.ARAM:
        p_cond, p_prior = normalize_logits(l_cond), normalize_logits(l_prior)
        diag = adaptive_lambda(p_cond, p_prior, cfg)
        return guided_logits(l_cond, l_prior, diag.lam), diag

    raise InvalidConfigError(f"unknown policy {cfg.policy!r}")
