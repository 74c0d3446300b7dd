"""Distance-calibrated noise for query embeddings.

The mechanism draws a radius from Gamma(shape=n, scale=1/epsilon) and a
direction uniform on the unit sphere, so the density of the offset decays as
r^{n-1} e^{-eps r}: the log-likelihood ratio between any two candidate query
points is bounded by eps times their L2 distance.  The perturbed point is
renormalized before transmission (ranking is direction-only, and the store
assumes unit vectors).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SphereParams, alpha_from_k, k_from_alpha, expanded_k_prime

# Practical guidance for the budget given unit-norm embeddings: mean radius
# n/eps should land in roughly [0.02, 0.1].
EPSILON_GUIDANCE_LOW = 10.0
EPSILON_GUIDANCE_HIGH = 50.0


@dataclass(frozen=True)
class PrivacyBudget:
    """Leakage multiplier epsilon, in units of inverse L2 distance."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon}")

    def mean_radius(self, n: int) -> float:
        return n / self.epsilon

    def check_guidance(self, n: int) -> None:
        """Warn when the budget falls outside the recommended [10n, 50n] band."""
        if not EPSILON_GUIDANCE_LOW * n <= self.epsilon <= EPSILON_GUIDANCE_HIGH * n:
            warnings.warn(
                f"epsilon={self.epsilon:g} is outside the recommended range "
                f"[{EPSILON_GUIDANCE_LOW * n:g}, {EPSILON_GUIDANCE_HIGH * n:g}] "
                f"for dimension {n} (mean perturbation radius {self.mean_radius(n):.4g})",
                stacklevel=2,
            )


@dataclass(frozen=True)
class PerturbationSample:
    """One realized noise draw and the angle it actually produced."""

    radius: float
    direction: np.ndarray
    realized_delta_alpha: float


def default_rng(seed: int | None = None) -> np.random.Generator:
    """Deterministic generator when seeded, OS entropy otherwise."""
    return np.random.default_rng(seed)


def sample_radius(n: int, budget: PrivacyBudget, rng: np.random.Generator) -> float:
    """One radial draw from Gamma(shape=n, scale=1/epsilon)."""
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    return float(rng.gamma(shape=n, scale=1.0 / budget.epsilon))


def sample_direction(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector: normalized i.i.d. standard Gaussians."""
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    while True:
        t = rng.standard_normal(n)
        norm = np.linalg.norm(t)
        if norm > 0.0:
            return t / norm


def perturb(
    e_k: np.ndarray, budget: PrivacyBudget, rng: np.random.Generator
) -> tuple[np.ndarray, PerturbationSample]:
    """Perturb a unit query embedding; returns the new unit vector and the draw.

    The realized angle is recorded from the actual sample, not the budget's
    mean radius: the candidate-range guarantee is per-realization.
    """
    e_k = np.asarray(e_k, dtype=np.float64)
    if abs(np.linalg.norm(e_k) - 1.0) > 1e-9:
        raise ValueError("query embedding must be unit norm")
    r = sample_radius(e_k.size, budget, rng)
    v = sample_direction(e_k.size, rng)
    shifted = e_k + r * v
    e_kp = shifted / np.linalg.norm(shifted)
    cos_angle = float(np.clip(np.dot(e_k, e_kp), -1.0, 1.0))
    delta_alpha = math.acos(cos_angle)
    return e_kp, PerturbationSample(radius=r, direction=v, realized_delta_alpha=delta_alpha)


def calibrate_epsilon(params: SphereParams, k: int, k_prime_target: int) -> PrivacyBudget:
    """Budget whose mean perturbation angle expands top-k to the target range.

    Inverts the range-expansion map using the mean radius n/epsilon as the
    perturbation angle; round-trips through expanded_k_prime within +/-1.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k_prime_target < k:
        raise ValueError(f"target range {k_prime_target} is below k={k}")
    if k_prime_target == k:
        raise ValueError(
            "a zero-width expansion has no finite budget; use the privacy-ignorant mode"
        )
    if k_prime_target > params.N:
        raise ValueError(f"target range {k_prime_target} exceeds corpus size {params.N}")

    alpha_k = alpha_from_k(params, k)
    lo, hi = 0.0, math.pi - alpha_k
    if k_from_alpha(params, alpha_k + hi) < k_prime_target:
        # target only reachable by covering the whole sphere
        return PrivacyBudget(params.n / hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if k_from_alpha(params, alpha_k + mid) < k_prime_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    delta_alpha = 0.5 * (lo + hi)
    budget = PrivacyBudget(params.n / delta_alpha)
    # the inverse is well-conditioned; assert the round trip promised to callers
    realized = expanded_k_prime(params, k, budget.mean_radius(params.n))
    if abs(realized - k_prime_target) > 1:
        raise RuntimeError(
            f"calibration failed to round-trip: target {k_prime_target}, got {realized}"
        )
    return budget
