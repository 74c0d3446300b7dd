"""k-out-of-k' oblivious transfer via discrete-log blinding.

The sender publishes A = g^a.  For each of the k' slots the receiver sends
B_i = g^{b_i} (slot wanted) or A * g^{b_i} (slot not wanted).  The sender keys
slot i with Hash(B_i^a); the receiver can only reproduce Hash(A^{b_i}) = Hash(g^{a b_i}),
which matches exactly for wanted slots.  The sender sees only uniformly blinded
group elements and learns nothing about which slots were chosen.

Security holds against a semi-honest receiver: a receiver that marks every slot
as wanted decrypts everything, and nothing here prevents that (the threat model
only protects against a curious sender).
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from gmpy2 import mpz, powmod

# RFC 3526 group 14: 2048-bit safe-prime MODP group, generator 2.
RFC3526_GROUP14_P = mpz(int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
))

# 256-bit safe prime with 2 generating the prime-order subgroup (p = 7 mod 8);
# for tests only.
TEST_PRIME_256 = mpz(0xABCD85D3009BFFD11701FA75CD6C245EDB2ACAC686C18CD49B354D2C6988239F)

TAG_BYTES = 16
_HASHES = {"sha256": hashlib.sha256}


@dataclass(frozen=True)
class OtGroup:
    prime_modulus: mpz
    generator: mpz = mpz(2)
    hash_id: str = "sha256"

    def __post_init__(self):
        if self.hash_id not in _HASHES:
            raise ValueError(f"unsupported hash {self.hash_id!r}")

    @property
    def exponent_bound(self) -> mpz:
        # stay inside the prime-order subgroup of the safe prime
        return (self.prime_modulus - 1) // 2

    def hash_element(self, x: mpz) -> bytes:
        return _HASHES[self.hash_id](_minimal_be(x)).digest()


def default_group() -> OtGroup:
    return OtGroup(RFC3526_GROUP14_P)


def test_group() -> OtGroup:
    return OtGroup(TEST_PRIME_256)


@dataclass(frozen=True)
class OtSenderState:
    a: mpz
    A: mpz


@dataclass(frozen=True)
class OtReceiverState:
    chosen_positions: frozenset[int]  # 1-based positions within [1, k']
    blinding: tuple[mpz, ...]  # b_i for every slot, chosen or not
    k_prime: int


def _minimal_be(x: mpz) -> bytes:
    return int(x).to_bytes(max(1, (int(x).bit_length() + 7) // 8), "big")


def _rand_exponent(group: OtGroup, rng: random.Random) -> mpz:
    return mpz(rng.randrange(1, int(group.exponent_bound)))


def ot_sender_init(group: OtGroup, rng: random.Random | None = None) -> tuple[OtSenderState, mpz]:
    if rng is None:
        rng = random.SystemRandom()
    a = _rand_exponent(group, rng)
    A = powmod(group.generator, a, group.prime_modulus)
    return OtSenderState(a=a, A=A), A


def ot_receiver_choose(
    group: OtGroup,
    A: int,
    chosen: set[int],
    k_prime: int,
    rng: random.Random | None = None,
) -> tuple[OtReceiverState, list[mpz]]:
    """Blind every slot; chosen slots omit the sender's A factor.

    Returns B_i = g^{b_i} for chosen positions and A * g^{b_i} otherwise, both
    distributions identical from the sender's side.
    """
    if rng is None:
        rng = random.SystemRandom()
    chosen = set(chosen)
    if any(not 1 <= i <= k_prime for i in chosen):
        raise ValueError(f"positions must lie in [1, {k_prime}]")
    A = mpz(A)
    p = group.prime_modulus
    blinding = []
    b_values = []
    for i in range(1, k_prime + 1):
        b = _rand_exponent(group, rng)
        blinding.append(b)
        elem = powmod(group.generator, b, p)
        if i not in chosen:
            elem = (A * elem) % p
        b_values.append(elem)
    state = OtReceiverState(
        chosen_positions=frozenset(chosen), blinding=tuple(blinding), k_prime=k_prime
    )
    return state, b_values


def _keystream_xor(key: bytes, data: bytes) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < len(data):
        out.extend(hashlib.sha256(key + counter.to_bytes(4, "big")).digest())
        counter += 1
    return bytes(a ^ b for a, b in zip(data, out))


def _tag(key: bytes, ciphertext: bytes) -> bytes:
    return hashlib.sha256(key + b"\xff" + ciphertext).digest()[:TAG_BYTES]


def wrap_message(key: bytes, message: bytes) -> bytes:
    """4-byte length || keystream ciphertext || 16-byte verification tag."""
    ciphertext = _keystream_xor(key, message)
    return len(ciphertext).to_bytes(4, "big") + ciphertext + _tag(key, ciphertext)


def unwrap_message(key: bytes, wrapped: bytes) -> bytes | None:
    """Message bytes, or None when the tag rejects the key."""
    if len(wrapped) < 4 + TAG_BYTES:
        return None
    length = int.from_bytes(wrapped[:4], "big")
    if len(wrapped) != 4 + length + TAG_BYTES:
        return None
    ciphertext = wrapped[4 : 4 + length]
    if _tag(key, ciphertext) != wrapped[4 + length :]:
        return None
    return _keystream_xor(key, ciphertext)


def ot_sender_encrypt(
    group: OtGroup, sender_state: OtSenderState, B: list, messages: list[bytes]
) -> list[bytes]:
    """Wrap each message under the key derived from its blinded element."""
    if len(B) != len(messages):
        raise ValueError(f"length mismatch: {len(B)} elements vs {len(messages)} messages")
    p = group.prime_modulus
    out = []
    for elem, msg in zip(B, messages):
        key = group.hash_element(powmod(mpz(elem), sender_state.a, p))
        out.append(wrap_message(key, msg))
    return out


class OtCorruptionError(Exception):
    """A chosen slot failed its verification tag: transcript mismatch."""


def ot_receiver_decrypt(
    group: OtGroup, receiver_state: OtReceiverState, A: int, wrapped: list[bytes]
) -> list[tuple[int, bytes]]:
    """Recover the chosen messages; unchosen slots are undecryptable by design."""
    if len(wrapped) != receiver_state.k_prime:
        raise ValueError(
            f"expected {receiver_state.k_prime} wrapped messages, got {len(wrapped)}"
        )
    A = mpz(A)
    p = group.prime_modulus
    out = []
    for pos in sorted(receiver_state.chosen_positions):
        b = receiver_state.blinding[pos - 1]
        key = group.hash_element(powmod(A, b, p))
        message = unwrap_message(key, wrapped[pos - 1])
        if message is None:
            raise OtCorruptionError(f"verification failed for chosen position {pos}")
        out.append((pos, message))
    return out
