"""Private retrieval kit.

Privacy-preserving nearest-neighbor retrieval: distance-calibrated query
perturbation to bound leakage, additively homomorphic cosine ranking over a
reduced candidate range, and leakage-gated document fetch (plaintext positions
or k-out-of-k' oblivious transfer).
"""

from .geometry import (
    Route,
    SphereParams,
    alpha_from_k,
    cap_integral,
    expanded_k_prime,
    k_from_alpha,
    leakage_route,
    mean_angle,
    unit_sphere_area,
)
from .perturb import (
    PerturbationSample,
    PrivacyBudget,
    calibrate_epsilon,
    default_rng,
    perturb,
    sample_direction,
    sample_radius,
)
from .protocol import (
    ClientConfig,
    ClientSession,
    Cloud,
    CloudServer,
    CostReport,
    LoopbackTransport,
    ProtocolError,
    RetrievalPlan,
    ServiceMode,
    TcpTransport,
    audit_transcript,
    run_session,
    unit_counts,
)
from .store import Candidate, DocumentRecord, VectorStore

__all__ = [
    "Candidate",
    "ClientConfig",
    "ClientSession",
    "Cloud",
    "CloudServer",
    "CostReport",
    "DocumentRecord",
    "LoopbackTransport",
    "PerturbationSample",
    "PrivacyBudget",
    "ProtocolError",
    "RetrievalPlan",
    "Route",
    "ServiceMode",
    "SphereParams",
    "TcpTransport",
    "VectorStore",
    "alpha_from_k",
    "audit_transcript",
    "calibrate_epsilon",
    "cap_integral",
    "default_rng",
    "expanded_k_prime",
    "k_from_alpha",
    "leakage_route",
    "mean_angle",
    "perturb",
    "run_session",
    "sample_direction",
    "sample_radius",
    "unit_counts",
    "unit_sphere_area",
]

__version__ = "0.1.0"
