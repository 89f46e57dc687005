"""Adaptive retrieval-augmented guidance for masked-diffusion decoding.

The package splits into a numerics core (dists, guidance), the denoising
engine with its backend contract (engine), deterministic toy backends and
scenario generators (backends, scenarios), the evaluation and analysis
harnesses (evaluation, analysis), the property suite behind `aram verify`
(verify), and the HTTP client for remote logit bridges (bridge_client).
"""

from .dists import (
    PROB_FLOOR,
    ContextScore,
    LogitVector,
    ProbVector,
    context_score,
    dv_bound,
    entropy,
    jensen_shannon_divergence,
    kl_divergence,
    normalize_logits,
    tilted_distribution,
)
from .engine import (
    MASK_TOKEN,
    Backend,
    BackendRequest,
    BackendResponse,
    DecodeResult,
    SamplerConfig,
    SequenceState,
    StepTrace,
    UnmaskPolicy,
    decode,
    denoise_step,
    init_state,
    plan_unmask_count,
    sample_token,
    select_positions,
)
from .errors import (
    AramError,
    DegenerateDenominatorError,
    IdentityError,
    InvalidConfigError,
    InvalidInputError,
    PairingError,
    ProtocolError,
    TraceError,
    TransportError,
)
from .guidance import (
    GuidanceConfig,
    GuidanceDiagnostics,
    NoiseProxy,
    Policy,
    Stability,
    adaptive_lambda,
    guided_logits,
    ideal_lambda_star,
    lambda_from_snr,
    noise,
    policy_lambda_and_logits,
    prior_score_variance,
    signal,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
