"""Client/server orchestration of the two-phase private retrieval protocol.

Phase 1 (merged): the client sends the perturbed embedding, the candidate-range
size k', and its encrypted query in one message; the server returns the
candidates' encrypted dot products, speculatively opening an OT session
alongside.  Phase 2: the client ranks locally and fetches its k winners either
by plaintext candidate positions (when the mean-angle bound says indices leak
nothing extra) or through k-out-of-k' oblivious transfer.

Candidates are referenced by their 1-based position within the candidate list
in both routes; global document ids never travel client-bound.
"""

from __future__ import annotations

import math
import random
import socket
import socketserver
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import ot as ot_mod
from . import paillier, wire
from .geometry import (
    Route,
    SphereParams,
    alpha_from_k,
    expanded_k_prime,
    leakage_route,
    mean_angle,
)
from .perturb import PerturbationSample, PrivacyBudget, calibrate_epsilon, perturb
from .store import VectorStore

DEFAULT_SCALE_BITS = 40


class ProtocolError(Exception):
    pass


class ServiceMode(Enum):
    STANDARD = "standard"
    PRIVACY_IGNORANT = "ignorant"
    PRIVACY_CONSCIOUS = "conscious"


@dataclass
class RetrievalPlan:
    """Per-query derived quantities fixed at session open."""

    mode: ServiceMode
    k: int
    k_prime: int
    realized_delta_alpha: float | None
    alpha_k: float | None
    omega: float | None
    route: Route | None


@dataclass
class CostReport:
    rounds: float
    beta_units: int  # transmitted numbers, one per serialized scalar/ciphertext/element
    eta_units: int  # transmitted documents
    bytes_by_phase: dict[str, int]

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_by_phase.values())


def unit_counts(
    mode: ServiceMode, route: Route | None, n: int, k: int, k_prime: int, N: int, merged: bool = True
) -> tuple[float, int, int]:
    """Closed-form (rounds, number-units, document-units) per mode and route."""
    if mode is ServiceMode.PRIVACY_IGNORANT:
        return 1.0, n, k
    if mode is ServiceMode.PRIVACY_CONSCIOUS:
        return 2.0, n + 2 * N + 1, N
    if route is Route.DIRECT:
        return (2.0 if merged else 2.5), 2 * n + k + k_prime + 1, k
    if route is Route.OBLIVIOUS_TRANSFER:
        return (2.0 if merged else 3.0), 2 * (n + k_prime + 1), k_prime
    raise ValueError("standard mode requires a fetch route")


@dataclass
class ClientConfig:
    """Everything the client fixes before opening a session."""

    sphere: SphereParams
    k: int
    mode: ServiceMode = ServiceMode.STANDARD
    budget: PrivacyBudget | None = None
    k_prime_target: int | None = None
    keypair: paillier.HEKeyPair | None = None
    scale_bits: int = DEFAULT_SCALE_BITS
    ot_group: ot_mod.OtGroup = field(default_factory=ot_mod.default_group)
    range_safety: float = 1.0
    merge_rounds: bool = True

    def __post_init__(self):
        if not 1 <= self.k <= self.sphere.N:
            raise ValueError(f"k={self.k} must lie in [1, N={self.sphere.N}]")
        if self.mode is ServiceMode.STANDARD:
            if self.budget is None and self.k_prime_target is None:
                raise ValueError("standard mode needs a privacy budget or a k' target")
            if self.budget is not None and self.k_prime_target is not None:
                raise ValueError("give either a privacy budget or a k' target, not both")
        if self.mode is not ServiceMode.PRIVACY_IGNORANT and self.keypair is None:
            raise ValueError(f"{self.mode.value} mode requires an encryption keypair")

    def resolved_budget(self) -> PrivacyBudget:
        if self.budget is not None:
            return self.budget
        return calibrate_epsilon(self.sphere, self.k, self.k_prime_target)


class ClientSession:
    """Single-query client state: plan, keys, decrypted ranking, transcript."""

    def __init__(self, config: ClientConfig, query: np.ndarray):
        self.config = config
        self.query = query
        self.plan: RetrievalPlan | None = None
        self.sample: PerturbationSample | None = None
        self.codec: paillier.FixedPointCodec | None = None
        self.ot_a = None
        self.ot_receiver_state = None
        self.chosen_positions: list[int] | None = None
        self.documents: list[bytes] | None = None


def client_open(
    query: np.ndarray,
    config: ClientConfig,
    rng: np.random.Generator,
    crypto_rng: random.Random | None = None,
) -> tuple[ClientSession, wire.Phase1]:
    """Build the phase-1 message and the session that can interpret replies."""
    query = np.asarray(query, dtype=np.float64)
    n, N = config.sphere.n, config.sphere.N
    if query.shape != (n,):
        raise ValueError(f"query dimension {query.shape} does not match n={n}")
    if abs(np.linalg.norm(query) - 1.0) > 1e-9:
        raise ValueError("query embedding must be unit norm")
    session = ClientSession(config, query)

    if config.mode is ServiceMode.PRIVACY_IGNORANT:
        session.plan = RetrievalPlan(
            mode=config.mode, k=config.k, k_prime=config.k,
            realized_delta_alpha=None, alpha_k=None, omega=None, route=Route.DIRECT,
        )
        return session, wire.Phase1(
            n=n, embedding=query.tolist(), k_prime=config.k, k=config.k
        )

    pk = config.keypair.public
    session.codec = paillier.FixedPointCodec(pk.modulus, config.scale_bits, dim=n)
    ciphertexts = [
        paillier.encrypt(pk, session.codec.encode(float(x)), crypto_rng).value for x in query
    ]

    if config.mode is ServiceMode.PRIVACY_CONSCIOUS:
        session.plan = RetrievalPlan(
            mode=config.mode, k=config.k, k_prime=N,
            realized_delta_alpha=None, alpha_k=None, omega=None,
            route=Route.OBLIVIOUS_TRANSFER,
        )
        return session, wire.Phase1(
            n=n, embedding=None, k_prime=N, k=config.k,
            public_modulus=pk.modulus, ciphertexts=ciphertexts,
        )

    budget = config.resolved_budget()
    budget.check_guidance(n)
    perturbed, sample = perturb(query, budget, rng)
    session.sample = sample
    alpha_k = alpha_from_k(config.sphere, config.k)
    k_prime = expanded_k_prime(
        config.sphere, config.k, sample.realized_delta_alpha, config.range_safety
    )
    if alpha_k < 0.5 * math.pi:
        omega = mean_angle(config.k, alpha_k)
        route = leakage_route(omega, sample.realized_delta_alpha)
    else:
        # mean-angle bound undefined for non-acute caps; take the safe route
        omega = None
        route = Route.OBLIVIOUS_TRANSFER
    session.plan = RetrievalPlan(
        mode=config.mode, k=config.k, k_prime=k_prime,
        realized_delta_alpha=sample.realized_delta_alpha, alpha_k=alpha_k,
        omega=omega, route=route,
    )
    return session, wire.Phase1(
        n=n, embedding=perturbed.tolist(), k_prime=k_prime, k=config.k,
        public_modulus=pk.modulus, ciphertexts=ciphertexts,
    )


def client_rank(session: ClientSession, reply: wire.Phase1Reply) -> list[int]:
    """Decrypt candidate dots and return the k best positions, rank order."""
    plan = session.plan
    if plan.mode is ServiceMode.PRIVACY_IGNORANT:
        raise ProtocolError("privacy-ignorant sessions receive documents directly")
    expected = min(plan.k_prime, session.config.sphere.N)
    if len(reply.ciphertexts) != expected:
        raise ProtocolError(
            f"expected {expected} encrypted distances, got {len(reply.ciphertexts)}"
        )
    keys = session.config.keypair
    codec = session.codec
    distances = []
    for pos0, value in enumerate(reply.ciphertexts):
        dot = codec.decode(
            paillier.decrypt(keys, paillier.HECiphertext(value)),
            scale_bits=2 * codec.scale_bits,
        )
        distances.append((1.0 - dot, pos0 + 1))
    distances.sort()
    chosen = [pos for _, pos in distances[: plan.k]]
    session.ot_a = reply.ot_a
    session.chosen_positions = chosen
    return chosen


def client_fetch_direct(session: ClientSession) -> wire.FetchDirect:
    if session.plan.route is not Route.DIRECT:
        raise ProtocolError("direct fetch requested on an OT-routed session")
    return wire.FetchDirect(list(session.chosen_positions))


def client_ot_request(
    session: ClientSession, crypto_rng: random.Random | None = None
) -> wire.OtB:
    if session.plan.route is not Route.OBLIVIOUS_TRANSFER:
        raise ProtocolError("OT fetch requested on a direct-routed session")
    if session.ot_a is None:
        raise ProtocolError("server did not open an OT session")
    expected = min(session.plan.k_prime, session.config.sphere.N)
    state, elements = ot_mod.ot_receiver_choose(
        session.config.ot_group, session.ot_a, set(session.chosen_positions),
        expected, crypto_rng,
    )
    session.ot_receiver_state = state
    return wire.OtB(elements)


def client_ot_finish(session: ClientSession, msg: wire.OtWrapped) -> list[bytes]:
    recovered = dict(
        ot_mod.ot_receiver_decrypt(
            session.config.ot_group, session.ot_receiver_state, session.ot_a, msg.wrapped
        )
    )
    return [recovered[pos] for pos in session.chosen_positions]


# --- server side ---


@dataclass
class CloudSession:
    """Per-connection server state between phase 1 and the fetch."""

    candidate_ids: list[int]
    candidate_texts: list[bytes]
    ot_sender_state: ot_mod.OtSenderState | None = None


class Cloud:
    """Server role over an immutable store; one instance serves many sessions."""

    def __init__(
        self,
        store: VectorStore,
        scale_bits: int = DEFAULT_SCALE_BITS,
        ot_group: ot_mod.OtGroup | None = None,
        crypto_rng: random.Random | None = None,
    ):
        self.store = store
        self.scale_bits = scale_bits
        self.ot_group = ot_group if ot_group is not None else ot_mod.default_group()
        self.crypto_rng = crypto_rng

    def handle_phase1(self, msg: wire.Phase1):
        """Returns (reply message, CloudSession or None)."""
        if msg.n != self.store.dim:
            raise ProtocolError(
                f"query dimension {msg.n} does not match store dimension {self.store.dim}"
            )
        k_prime = min(msg.k_prime, len(self.store))

        if msg.ciphertexts is None:
            # query in the clear: answer with documents immediately
            if msg.embedding is None:
                raise ProtocolError("phase 1 carries neither an embedding nor ciphertexts")
            hits = self.store.top_k(np.array(msg.embedding), msg.k)
            records = self.store.fetch([c.id for c in hits])
            return wire.Documents([r.text for r in records]), None

        if msg.embedding is not None:
            candidates = self.store.top_k(np.array(msg.embedding), k_prime)
            candidate_ids = [c.id for c in candidates]
        else:
            # full-corpus mode: deterministic candidate order by ascending id
            candidate_ids = sorted(int(i) for i in self.store.ids)

        pk = paillier.PaillierPublicKey(msg.public_modulus)
        codec = paillier.FixedPointCodec(pk.modulus, self.scale_bits, dim=msg.n)
        enc_query = [paillier.HECiphertext(c) for c in msg.ciphertexts]
        records = self.store.fetch(candidate_ids)
        if len(records) >= 48:
            # fixed-base tables pay for themselves past a few dozen candidates
            ctx = paillier.EncDotContext(pk, codec, enc_query)
            ciphertexts = [ctx.dot(record.embedding).value for record in records]
        else:
            ciphertexts = [
                paillier.enc_dot(pk, codec, enc_query, record.embedding).value
                for record in records
            ]
        sender_state, ot_a = ot_mod.ot_sender_init(self.ot_group, self.crypto_rng)
        session = CloudSession(
            candidate_ids=candidate_ids,
            candidate_texts=[r.text for r in records],
            ot_sender_state=sender_state,
        )
        return wire.Phase1Reply(ciphertexts, ot_a=ot_a), session

    def handle_fetch_direct(self, session: CloudSession, msg: wire.FetchDirect) -> wire.Documents:
        count = len(session.candidate_ids)
        for pos in msg.positions:
            if not 1 <= pos <= count:
                raise ProtocolError(f"position {pos} outside candidate range [1, {count}]")
        return wire.Documents([session.candidate_texts[pos - 1] for pos in msg.positions])

    def handle_ot_b(self, session: CloudSession, msg: wire.OtB) -> wire.OtWrapped:
        if len(msg.elements) != len(session.candidate_ids):
            raise ProtocolError(
                f"expected {len(session.candidate_ids)} blinded elements, got {len(msg.elements)}"
            )
        wrapped = ot_mod.ot_sender_encrypt(
            self.ot_group, session.ot_sender_state, msg.elements, session.candidate_texts
        )
        return wire.OtWrapped(wrapped)

    def dispatch(self, session: CloudSession | None, msg):
        """Tag-based dispatch used by transports; returns (reply, new session)."""
        if isinstance(msg, wire.Phase1):
            return self.handle_phase1(msg)
        if session is None:
            raise ProtocolError("fetch message before phase 1")
        if isinstance(msg, wire.FetchDirect):
            return self.handle_fetch_direct(session, msg), session
        if isinstance(msg, wire.OtB):
            return self.handle_ot_b(session, msg), session
        raise ProtocolError(f"unexpected client message {type(msg).__name__}")


# --- transports ---


@dataclass
class TranscriptEntry:
    direction: str  # "c2s" or "s2c"
    message: object
    nbytes: int


_PHASE_NAMES = {
    wire.TAG_PHASE1: "phase1",
    wire.TAG_PHASE1_REPLY: "phase1_reply",
    wire.TAG_FETCH_DIRECT: "fetch_direct",
    wire.TAG_DOCUMENTS: "documents",
    wire.TAG_OT_B: "ot_b",
    wire.TAG_OT_WRAPPED: "ot_wrapped",
    wire.TAG_ERROR: "error",
}


class Transport:
    """Round-trip messenger that records a byte-accurate transcript."""

    def __init__(self):
        self.transcript: list[TranscriptEntry] = []

    def _record(self, direction: str, msg) -> None:
        self.transcript.append(TranscriptEntry(direction, msg, len(wire.encode_frame(msg))))

    def bytes_by_phase(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for entry in self.transcript:
            name = _PHASE_NAMES[entry.message.tag]
            out[name] = out.get(name, 0) + entry.nbytes
        return out

    def round_trip(self, msg):
        raise NotImplementedError


class LoopbackTransport(Transport):
    """In-process client/server pairing; frames are encoded and re-decoded so the
    transcript carries real wire bytes."""

    def __init__(self, cloud: Cloud):
        super().__init__()
        self.cloud = cloud
        self._session: CloudSession | None = None

    def round_trip(self, msg):
        self._record("c2s", msg)
        received = wire.decode_frame(wire.encode_frame(msg))
        reply, self._session = self.cloud.dispatch(self._session, received)
        self._record("s2c", reply)
        return wire.decode_frame(wire.encode_frame(reply))


class TcpTransport(Transport):
    def __init__(self, host: str, port: int):
        super().__init__()
        self._sock = socket.create_connection((host, port))
        self._file = self._sock.makefile("rwb")

    def round_trip(self, msg):
        self._record("c2s", msg)
        wire.write_frame(self._file, msg)
        self._file.flush()
        reply = wire.read_frame(self._file)
        if reply is None:
            raise ProtocolError("server closed the connection")
        if isinstance(reply, wire.ErrorMessage):
            raise ProtocolError(f"server error {reply.code}: {reply.message}")
        self._record("s2c", reply)
        return reply

    def close(self):
        self._file.close()
        self._sock.close()


class _CloudRequestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        cloud: Cloud = self.server.cloud
        session = None
        while True:
            try:
                msg = wire.read_frame(self.rfile)
            except wire.WireError:
                break
            if msg is None:
                break
            try:
                reply, session = cloud.dispatch(session, msg)
            except (ProtocolError, ValueError) as exc:
                wire.write_frame(self.wfile, wire.ErrorMessage(1, str(exc)))
                self.wfile.flush()
                continue
            wire.write_frame(self.wfile, reply)
            self.wfile.flush()


class CloudServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], cloud: Cloud):
        super().__init__(address, _CloudRequestHandler)
        self.cloud = cloud


# --- full session driver ---


def run_session(
    query: np.ndarray,
    config: ClientConfig,
    transport: Transport,
    rng: np.random.Generator,
    crypto_rng: random.Random | None = None,
) -> tuple[list[bytes], CostReport, ClientSession]:
    """Execute one complete retrieval; returns documents, costs and the session."""
    session, phase1 = client_open(query, config, rng, crypto_rng)
    reply = transport.round_trip(phase1)

    if isinstance(reply, wire.Documents):
        if config.mode is not ServiceMode.PRIVACY_IGNORANT:
            raise ProtocolError("unexpected direct documents reply")
        docs = reply.texts
    else:
        client_rank(session, reply)
        if session.plan.route is Route.DIRECT:
            documents = transport.round_trip(client_fetch_direct(session))
            docs = documents.texts
        else:
            wrapped = transport.round_trip(client_ot_request(session, crypto_rng))
            docs = client_ot_finish(session, wrapped)

    session.documents = docs
    plan = session.plan
    effective_k_prime = min(plan.k_prime, config.sphere.N)
    rounds, beta, eta = unit_counts(
        plan.mode, plan.route, config.sphere.n, plan.k, effective_k_prime,
        config.sphere.N, merged=config.merge_rounds,
    )
    report = CostReport(rounds, beta, eta, transport.bytes_by_phase())
    return docs, report, session


# --- transcript auditing ---

_ALLOWED_CLIENT_TAGS = {wire.TAG_PHASE1, wire.TAG_FETCH_DIRECT, wire.TAG_OT_B}


def audit_transcript(session: ClientSession, transcript: list[TranscriptEntry]) -> list[str]:
    """Check that nothing beyond the whitelisted surface reached the server.

    The server may see: the perturbed embedding, k', k, the public modulus and
    query ciphertexts, chosen positions (direct route only) and blinded OT
    elements.  Returns a list of violations; empty means the audit passed.
    """
    violations: list[str] = []
    plan = session.plan
    for entry in transcript:
        if entry.direction != "c2s":
            continue
        msg = entry.message
        if msg.tag not in _ALLOWED_CLIENT_TAGS:
            violations.append(f"unexpected client-to-server message {type(msg).__name__}")
            continue
        if isinstance(msg, wire.Phase1):
            if plan.mode is ServiceMode.STANDARD and msg.embedding is not None:
                sent = np.array(msg.embedding)
                if float(np.linalg.norm(sent - session.query)) < 1e-12:
                    violations.append("phase 1 carries the raw query embedding")
            if plan.mode is ServiceMode.PRIVACY_CONSCIOUS and msg.embedding is not None:
                violations.append("full-corpus mode must not transmit any embedding")
        elif isinstance(msg, wire.FetchDirect):
            if plan.route is not Route.DIRECT:
                violations.append("plaintext positions sent on an OT-routed session")
        elif isinstance(msg, wire.OtB):
            if plan.route is not Route.OBLIVIOUS_TRANSFER:
                violations.append("OT elements sent on a direct-routed session")
    return violations
