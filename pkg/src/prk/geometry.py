"""Geometry of uniform points on the unit n-sphere.

Everything here is driven by the cap-area integral I(n, a) = int_0^a sin^{n-2}t dt:
the expected number of corpus points within polar angle a of a fixed direction,
the inverse map from a count back to an angle, the candidate-range expansion for
a perturbed query direction, and the mean-angle bound that decides whether
plaintext result indices leak more than the noise already allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy import special


class Route(Enum):
    """How the client fetches its chosen documents from the server."""

    DIRECT = "direct"
    OBLIVIOUS_TRANSFER = "ot"


@dataclass(frozen=True)
class SphereParams:
    """Corpus geometry: embedding dimension n and corpus size N."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension must be >= 2, got {self.n}")
        if self.N < 1:
            raise ValueError(f"corpus size must be >= 1, got {self.N}")


def _check_angle(alpha: float) -> None:
    if not 0.0 <= alpha <= math.pi:
        raise ValueError(f"polar angle must lie in [0, pi], got {alpha}")


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n: 2 pi^{n/2} / Gamma(n/2)."""
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    return 2.0 * math.exp(0.5 * n * math.log(math.pi) - special.gammaln(0.5 * n))


def cap_integral(n: int, alpha: float) -> float:
    """int_0^alpha sin^{n-2} t dt, stable for large n.

    Uses the regularized incomplete beta identity
    int_0^a sin^{n-2} = B((n-1)/2, 1/2) * I_{sin^2 a}((n-1)/2, 1/2) / 2
    for a <= pi/2, extended by symmetry about pi/2.  Direct quadrature of
    sin^{n-2} underflows once n reaches the hundreds; the beta form does not.
    """
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    _check_angle(alpha)
    a, b = 0.5 * (n - 1), 0.5
    full = special.beta(a, b)
    if alpha <= 0.5 * math.pi:
        return 0.5 * full * special.betainc(a, b, math.sin(alpha) ** 2)
    return full - 0.5 * full * special.betainc(a, b, math.sin(math.pi - alpha) ** 2)


def _area_ratio(n: int) -> float:
    # area(S^{n-1} in R^{n-1}) / area(S^{n-1} in R^n) = Gamma(n/2) / (sqrt(pi) Gamma((n-1)/2))
    return math.exp(special.gammaln(0.5 * n) - special.gammaln(0.5 * (n - 1))) / math.sqrt(math.pi)


def k_from_alpha(params: SphereParams, alpha: float) -> float:
    """Expected number of uniform corpus points within polar angle alpha.

    Returns a real-valued count; callers round as appropriate.
    """
    _check_angle(alpha)
    return params.N * _area_ratio(params.n) * cap_integral(params.n, alpha)


_BISECT_TOL = 1e-12
_BISECT_MAX_ITER = 200


def alpha_from_k(params: SphereParams, k: float) -> float:
    """Polar angle whose cap is expected to hold k uniform points.

    Inverse of k_from_alpha by bisection; the forward map is strictly
    increasing on [0, pi].
    """
    if not 0.0 < k <= params.N:
        raise ValueError(f"k must lie in (0, N={params.N}], got {k}")
    lo, hi = 0.0, math.pi
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if k_from_alpha(params, mid) < k:
            lo = mid
        else:
            hi = mid
        if hi - lo < _BISECT_TOL:
            break
    return 0.5 * (lo + hi)


def expanded_k_prime(
    params: SphereParams, k: int, delta_alpha: float, safety: float = 1.0
) -> int:
    """Candidate-range size k' that covers the true top-k cap.

    Grows the cap angle of the top-k region by the perturbation angle
    delta_alpha and returns the expected count in the grown cap, rounded up.
    ``safety`` >= 1 scales the expansion increment for non-uniform corpora.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if delta_alpha < 0.0:
        raise ValueError(f"perturbation angle must be >= 0, got {delta_alpha}")
    if safety <= 0.0:
        # < 1.0 is allowed deliberately: benchmarks inject under-covered ranges
        raise ValueError(f"safety factor must be > 0, got {safety}")
    k = min(k, params.N)
    if delta_alpha == 0.0:
        return k
    alpha_k = alpha_from_k(params, k)
    target = alpha_k + delta_alpha
    if target >= math.pi:
        return params.N
    delta_k = k_from_alpha(params, target) - k
    k_prime = math.ceil(k + safety * delta_k)
    return max(k, min(k_prime, params.N))


def mean_angle(k: int, alpha_k: float) -> float:
    """Expected angle between a query direction and the centroid of its top-k cap.

    tan(omega) = tan(alpha_k) / sqrt(k); only defined for acute caps.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0.0 <= alpha_k < 0.5 * math.pi:
        raise ValueError(f"cap angle must lie in [0, pi/2), got {alpha_k}")
    return math.atan(math.tan(alpha_k) / math.sqrt(k))


def leakage_route(omega: float, delta_alpha: float) -> Route:
    """Pick the fetch route: plaintext indices are safe iff omega >= delta_alpha.

    When the centroid of the top-k results sits at least as far from the query
    as the noise already pushed it, revealing indices adds nothing; otherwise
    the fetch must go through oblivious transfer.
    """
    _check_angle(omega)
    _check_angle(delta_alpha)
    return Route.DIRECT if omega >= delta_alpha else Route.OBLIVIOUS_TRANSFER
