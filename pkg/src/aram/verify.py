"""Self-contained property suite for the variational guidance math.

Each property draws its own seeded random inputs, checks a documented bound
or identity at a documented tolerance, and reports the worst residual seen.
The suite is the executable form of the guarantees the guidance rule rests
on: the tilted-family lower bound never exceeds the KL it bounds, its value
at 1 recovers the KL exactly, its derivatives at 0 are the signal and the
negative prior score variance, and the closed-form optimal scale agrees with
brute-force search.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dists import (
    LogitVector,
    ProbVector,
    context_score,
    dv_bound,
    kl_divergence,
    tilted_distribution,
)
from .errors import InvalidInputError
from .guidance import (
    GuidanceConfig,
    NoiseProxy,
    Stability,
    adaptive_lambda,
    guided_logits,
    ideal_lambda_star,
    lambda_from_snr,
    prior_score_variance,
    signal,
)

DV_GRID = (-2.0, -1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    checks: int
    max_residual: float
    tolerance: float
    failing_seed: int | None
    elapsed_s: float
    detail: str


def _pair(rng: np.random.Generator, vocab_size: int | None = None) -> tuple[ProbVector, ProbVector]:
    v = int(rng.integers(2, 65)) if vocab_size is None else vocab_size
    draw = lambda: ProbVector(rng.dirichlet(np.ones(v))).floored()
    return draw(), draw()


def _separated_pair(rng: np.random.Generator) -> tuple[ProbVector, ProbVector]:
    # Derivative and optimum checks are relative-tolerance checks; pairs with
    # vanishing signal or score variance make relative error meaningless.
    while True:
        p_cond, p_prior = _pair(rng)
        if signal(p_cond, p_prior) >= 0.05 and prior_score_variance(p_cond, p_prior) >= 0.05:
            return p_cond, p_prior


def check_dv_bound(seed: int = 0, pairs: int = 1000) -> PropertyResult:
    """L(lambda) <= KL(p_cond || p_prior) + 1e-9 on a fixed 10-point grid."""
    started = time.perf_counter()
    tol = 1e-9
    worst, failing = -np.inf, None
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        p_cond, p_prior = _pair(rng)
        kl = kl_divergence(p_cond, p_prior)
        for lam in DV_GRID:
            residual = dv_bound(p_cond, p_prior, lam) - kl
            if residual > worst:
                worst, failing = residual, seed + i
    passed = worst <= tol
    return PropertyResult(
        "dv-bound", passed, pairs * len(DV_GRID), worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "max over pairs and grid of L(lambda) - KL",
    )


def check_corollary(seed: int = 0, pairs: int = 1000) -> PropertyResult:
    """L(1) = KL and ln Z_1 = 0, each within 1e-9."""
    started = time.perf_counter()
    tol = 1e-9
    worst, failing = -np.inf, None
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        p_cond, p_prior = _pair(rng)
        kl = kl_divergence(p_cond, p_prior)
        s = context_score(p_cond, p_prior)
        _, log_z1 = tilted_distribution(p_prior, s, 1.0)
        residual = max(abs(dv_bound(p_cond, p_prior, 1.0) - kl), abs(log_z1))
        if residual > worst:
            worst, failing = residual, seed + i
    passed = worst <= tol
    return PropertyResult(
        "corollary", passed, pairs, worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "max of |L(1) - KL| and |ln Z_1|",
    )


def check_derivatives(seed: int = 0, pairs: int = 200) -> PropertyResult:
    """Central differences of L at 0 match signal (rel 1e-4) and
    -Var_prior(s) (rel 1e-3)."""
    started = time.perf_counter()
    h = 1e-4
    worst, failing = -np.inf, None
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        p_cond, p_prior = _separated_pair(rng)
        up = dv_bound(p_cond, p_prior, h)
        down = dv_bound(p_cond, p_prior, -h)
        middle = dv_bound(p_cond, p_prior, 0.0)

        sig = signal(p_cond, p_prior)
        first_rel = abs((up - down) / (2 * h) - sig) / abs(sig) / 1e-4

        var = prior_score_variance(p_cond, p_prior)
        second_rel = abs((up - 2 * middle + down) / h**2 - (-var)) / abs(var) / 1e-3

        # Residuals are normalized by their own tolerance so one bound serves both.
        residual = max(first_rel, second_rel)
        if residual > worst:
            worst, failing = residual, seed + i
    passed = worst <= 1.0
    return PropertyResult(
        "derivatives", passed, pairs * 2, worst, 1.0,
        None if passed else failing, time.perf_counter() - started,
        "max tolerance-normalized error of L'(0) vs signal and L''(0) vs -variance",
    )


def _grid_argmax_quadratic(sig: float, var: float) -> float:
    """Locate argmax of g(x) = x*sig - x^2/2*var by bracketing + refinement."""
    hi = 1.0
    while hi * sig - hi**2 / 2 * var > (hi / 2) * sig - (hi / 2) ** 2 / 2 * var and hi < 2**40:
        hi *= 2
    lo = 0.0
    for _ in range(6):
        grid = np.linspace(lo, hi, 1001)
        values = grid * sig - grid**2 / 2 * var
        at = int(np.argmax(values))
        lo = grid[max(at - 1, 0)]
        hi = grid[min(at + 1, len(grid) - 1)]
    return float((lo + hi) / 2)


def check_lambda_star(seed: int = 0, pairs: int = 200) -> PropertyResult:
    """Closed-form optimal scale matches grid argmax of the quadratic model."""
    started = time.perf_counter()
    tol = 1e-6
    worst, failing = -np.inf, None
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        p_cond, p_prior = _separated_pair(rng)
        sig = signal(p_cond, p_prior)
        var = prior_score_variance(p_cond, p_prior)
        residual = abs(ideal_lambda_star(p_cond, p_prior) - _grid_argmax_quadratic(sig, var))
        if residual > worst:
            worst, failing = residual, seed + i
    passed = worst <= tol
    return PropertyResult(
        "lambda-star", passed, pairs, worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "max |closed form - grid argmax|",
    )


def check_guidance_range(seed: int = 0, pairs: int = 300) -> PropertyResult:
    """lambda in [0, lambda_max]; exactly 0 on equal pairs; tanh saturates by
    beta*snr = 20; monotone in signal (up) and noise (down) on sweeps."""
    started = time.perf_counter()
    tol = 1e-9
    worst, failing = -np.inf, None

    proxies = list(NoiseProxy)
    stabilities = list(Stability)
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        p_cond, p_prior = _pair(rng)
        cfg = GuidanceConfig(
            lambda_max=float(rng.uniform(0, 3)),
            beta=float(rng.uniform(0.01, 2)),
            noise_proxy=proxies[int(rng.integers(len(proxies)))],
            stability=stabilities[int(rng.integers(len(stabilities)))],
        )
        lam = adaptive_lambda(p_cond, p_prior, cfg).lam
        residual = max(-lam, lam - cfg.lambda_max)
        if residual > worst:
            worst, failing = residual, seed + i

        equal = adaptive_lambda(p_cond, p_cond, cfg).lam
        if abs(equal) > worst:
            worst, failing = abs(equal), seed + i

    saturation_cfg = GuidanceConfig(lambda_max=1.0, beta=1.0)
    for snr in (20.0, 50.0, 1e6):
        residual = abs(lambda_from_snr(snr, saturation_cfg) - 1.0)
        if residual > worst:
            worst, failing = residual, seed

    cfg = GuidanceConfig()
    sweep = [lambda_from_snr(x, cfg) for x in np.linspace(0, 50, 200)]
    if any(b < a for a, b in zip(sweep, sweep[1:])):
        worst, failing = max(worst, 1.0), seed
    fixed_signal = 2.0
    noise_sweep = [
        lambda_from_snr(fixed_signal / (n + cfg.epsilon), cfg) for n in np.linspace(0.01, 10, 200)
    ]
    if any(b > a for a, b in zip(noise_sweep, noise_sweep[1:])):
        worst, failing = max(worst, 1.0), seed

    passed = worst <= tol
    return PropertyResult(
        "guidance-range", passed, pairs * 2 + 3 + 2, worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "range violations, equal-pair lambda, saturation gap, monotonicity",
    )


def check_shift_invariance(seed: int = 0, pairs: int = 300) -> PropertyResult:
    """Per-vector constant shifts leave the guided softmax (1e-9) and the
    guided argmax (exactly) unchanged."""
    started = time.perf_counter()
    tol = 1e-9
    worst, failing = -np.inf, None
    from scipy.special import softmax

    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        v = int(rng.integers(2, 65))
        l_cond = LogitVector(rng.normal(0, 3, v))
        l_prior = LogitVector(rng.normal(0, 3, v))
        lam = float(rng.uniform(-2, 3))
        a, b = float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50))

        base = guided_logits(l_cond, l_prior, lam)
        shifted = guided_logits(
            LogitVector(l_cond.logits + a), LogitVector(l_prior.logits + b), lam
        )
        residual = float(np.max(np.abs(softmax(base.logits) - softmax(shifted.logits))))
        if int(np.argmax(base.logits)) != int(np.argmax(shifted.logits)):
            residual = max(residual, 1.0)
        if residual > worst:
            worst, failing = residual, seed + i
    passed = worst <= tol
    return PropertyResult(
        "shift-invariance", passed, pairs, worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "max softmax deviation under per-vector shifts (argmax flips count as 1)",
    )


def check_tilting_closure(seed: int = 0, pairs: int = 300) -> PropertyResult:
    """context_score(p_lambda, p_prior) = lambda*s - ln Z_lambda within 1e-8."""
    started = time.perf_counter()
    tol = 1e-8
    worst, failing = -np.inf, None
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        v = int(rng.integers(2, 65))
        # Mix toward uniform so every entry stays far above the probability
        # floor; the identity is exact only when flooring never bites.
        mix = lambda: ProbVector(0.9 * rng.dirichlet(np.ones(v)) + 0.1 / v)
        p_cond, p_prior = mix(), mix()
        s = context_score(p_cond, p_prior)
        for lam in (-1.0, -0.5, 0.25, 0.5, 1.0):
            p_lam, log_z = tilted_distribution(p_prior, s, lam)
            got = context_score(p_lam, p_prior).scores
            want = lam * s.scores - log_z
            residual = float(np.max(np.abs(got - want)))
            if residual > worst:
                worst, failing = residual, seed + i
    passed = worst <= tol
    return PropertyResult(
        "tilting-closure", passed, pairs * 5, worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "max |score(p_lambda, p_prior) - (lambda*s - ln Z)|",
    )


def check_kl_nonneg(seed: int = 0, pairs: int = 1000) -> PropertyResult:
    """KL >= -1e-12 on random floored pairs; exactly 0 on equal pairs."""
    started = time.perf_counter()
    tol = 1e-12
    worst, failing = -np.inf, None
    for i in range(pairs):
        rng = np.random.default_rng(seed + i)
        p_cond, p_prior = _pair(rng)
        residual = max(-kl_divergence(p_cond, p_prior), abs(kl_divergence(p_cond, p_cond)))
        if residual > worst:
            worst, failing = residual, seed + i
    passed = worst <= tol
    return PropertyResult(
        "kl-nonneg", passed, pairs * 2, worst, tol,
        None if passed else failing, time.perf_counter() - started,
        "max of -KL(p,q) and |KL(p,p)|",
    )


def check_cmi(seed: int = 0, samples: int = 100_000) -> PropertyResult:
    """A mixture retriever's expected information gain matches its
    Monte-Carlo estimate within 3 standard errors."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    v, n_contexts = 16, 5
    p_prior = ProbVector(rng.dirichlet(np.ones(v))).floored()
    conditionals = [ProbVector(rng.dirichlet(np.ones(v))).floored() for _ in range(n_contexts)]
    weights = rng.dirichlet(np.full(n_contexts, 5.0))

    gains = np.array([kl_divergence(p, p_prior) for p in conditionals])
    exact = float(np.dot(weights, gains))

    draws = rng.choice(n_contexts, size=samples, p=weights)
    observed = gains[draws]
    estimate = float(observed.mean())
    se = float(observed.std(ddof=1) / np.sqrt(samples))
    residual = abs(estimate - exact)
    tol = 3 * se
    passed = residual <= tol
    return PropertyResult(
        "cmi", passed, samples, residual, tol,
        None if passed else seed, time.perf_counter() - started,
        f"|MC estimate - sum_i w_i KL_i| vs 3*SE (SE={se:.3g})",
    )


PROPERTIES: dict[str, Callable[[int], PropertyResult]] = {
    "dv-bound": check_dv_bound,
    "corollary": check_corollary,
    "derivatives": check_derivatives,
    "lambda-star": check_lambda_star,
    "guidance-range": check_guidance_range,
    "shift-invariance": check_shift_invariance,
    "tilting-closure": check_tilting_closure,
    "kl-nonneg": check_kl_nonneg,
    "cmi": check_cmi,
}


def run_suite(names=None, seed: int = 0) -> list[PropertyResult]:
    if names is None:
        names = list(PROPERTIES)
    unknown = [n for n in names if n not in PROPERTIES]
    if unknown:
        raise InvalidInputError(
            f"unknown properties: {unknown}; available: {sorted(PROPERTIES)}"
        )
    return [PROPERTIES[name](seed) for name in names]
