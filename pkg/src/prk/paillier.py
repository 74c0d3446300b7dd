"""Additively homomorphic encryption (Paillier) over a fixed-point encoding.

Plaintexts live in Z_modulus, ciphertexts in Z_modulus^2, generator = modulus+1.
Supports ciphertext addition and plaintext-scalar multiplication, which is all
an encrypted dot product needs: the client encrypts its query coordinates, the
server exponentiates by its own plaintext coordinates and multiplies.

Reals enter the plaintext space through FixedPointCodec: round(x * 2^scale_bits)
with negatives as modular complements, so integer homomorphism is exact and
decoding a product uses twice the scale.
"""

from __future__ import annotations

import functools
import math
import random
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpz, powmod, invert

TEST_KEYBITS = 1024
ALLOWED_KEYBITS = (1024, 2048, 3072)


@dataclass(frozen=True)
class PaillierPublicKey:
    modulus: mpz  # product of two equal-size primes
    # generator is fixed at modulus + 1

    @property
    def generator(self) -> mpz:
        return self.modulus + 1

    @property
    def modulus_sq(self) -> mpz:
        return self.modulus * self.modulus


@dataclass(frozen=True)
class PaillierSecretKey:
    lam: mpz  # Euler totient of the modulus
    mu: mpz  # lam^{-1} mod modulus
    # prime factors enable fast CRT decryption; decryption works without them
    p: mpz | None = None
    q: mpz | None = None


@dataclass(frozen=True)
class HEKeyPair:
    public: PaillierPublicKey
    secret: PaillierSecretKey


@dataclass(frozen=True)
class HECiphertext:
    value: mpz


def _random_prime(bits: int, rng: random.Random) -> mpz:
    for _ in range(10_000):
        candidate = mpz(rng.getrandbits(bits) | (1 << (bits - 1)) | 1)
        p = gmpy2.next_prime(candidate)
        if p.bit_length() == bits:
            return p
    raise RuntimeError(f"failed to generate a {bits}-bit prime")


def keygen(keybits: int, rng: random.Random | None = None, test_mode: bool = False) -> HEKeyPair:
    """Generate a keypair with a modulus of roughly ``keybits`` bits.

    1024-bit keys are far too small for deployment and are only accepted with
    test_mode=True.
    """
    if keybits not in ALLOWED_KEYBITS:
        raise ValueError(f"keybits must be one of {ALLOWED_KEYBITS}, got {keybits}")
    if keybits == TEST_KEYBITS and not test_mode:
        raise ValueError("1024-bit keys are only permitted in test mode")
    if rng is None:
        rng = random.SystemRandom()
    half = keybits // 2
    while True:
        p = _random_prime(half, rng)
        q = _random_prime(half, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != keybits:
            continue
        lam = (p - 1) * (q - 1)
        mu = invert(lam, n)
        return HEKeyPair(PaillierPublicKey(n), PaillierSecretKey(lam, mu, p, q))


def encrypt(pk: PaillierPublicKey, m: int, rng: random.Random | None = None) -> HECiphertext:
    """Encrypt m in [0, modulus) with fresh randomness per call."""
    n = pk.modulus
    m = mpz(m)
    if not 0 <= m < n:
        raise ValueError("plaintext out of range")
    if rng is None:
        rng = random.SystemRandom()
    nsq = pk.modulus_sq
    while True:
        r = mpz(rng.randrange(1, int(n)))
        if gmpy2.gcd(r, n) == 1:
            break
    # (1 + m*n) * r^n mod n^2; g = n+1 makes g^m = 1 + m*n
    c = ((1 + m * n) % nsq) * powmod(r, n, nsq) % nsq
    return HECiphertext(c)


@functools.lru_cache(maxsize=8)
def _crt_context(p: mpz, q: mpz) -> tuple:
    n = p * q
    psq, qsq = p * p, q * q
    g = n + 1
    hp = invert((powmod(g, p - 1, psq) - 1) // p, p)
    hq = invert((powmod(g, q - 1, qsq) - 1) // q, q)
    return psq, qsq, hp, hq, invert(p, q)


def decrypt(keys: HEKeyPair, c: HECiphertext) -> mpz:
    n = keys.public.modulus
    sk = keys.secret
    if sk.p is not None and sk.q is not None:
        # CRT: two half-width exponentiations instead of one full-width
        psq, qsq, hp, hq, p_inv = _crt_context(sk.p, sk.q)
        mp = ((powmod(c.value, sk.p - 1, psq) - 1) // sk.p) * hp % sk.p
        mq = ((powmod(c.value, sk.q - 1, qsq) - 1) // sk.q) * hq % sk.q
        return (mp + sk.p * ((mq - mp) * p_inv % sk.q)) % n
    nsq = keys.public.modulus_sq
    u = powmod(c.value, sk.lam, nsq)
    return ((u - 1) // n) * sk.mu % n


def add(pk: PaillierPublicKey, c1: HECiphertext, c2: HECiphertext) -> HECiphertext:
    return HECiphertext((c1.value * c2.value) % pk.modulus_sq)


def scalar_mul(pk: PaillierPublicKey, c: HECiphertext, s: int) -> HECiphertext:
    """Ciphertext of m*s mod modulus.

    Scalars in the upper half of the plaintext range (modular negatives) are
    handled as c^{-(modulus-s)}: a small exponent plus one inversion instead of
    a full-width exponentiation.
    """
    n = pk.modulus
    s = mpz(s)
    if not 0 <= s < n:
        raise ValueError("scalar out of range")
    nsq = pk.modulus_sq
    if s > n // 2:
        return HECiphertext(powmod(invert(c.value, nsq), n - s, nsq))
    return HECiphertext(powmod(c.value, s, nsq))


@dataclass(frozen=True)
class FixedPointCodec:
    """Signed fixed-point encoding into the Paillier plaintext space."""

    modulus: mpz
    scale_bits: int = 40
    dim: int | None = None  # when set, guards dot-product accumulation headroom

    def __post_init__(self):
        if self.scale_bits < 1:
            raise ValueError("scale_bits must be >= 1")
        if self.dim is not None:
            # worst-case |dot| after encoding both sides: dim * 2^{2*scale_bits}
            bound = mpz(self.dim) << (2 * self.scale_bits)
            if not bound < self.modulus // 2:
                raise ValueError(
                    f"modulus too small for dim={self.dim} at scale_bits={self.scale_bits}"
                )

    def encode(self, x: float) -> mpz:
        product = x * (1 << self.scale_bits)
        if not math.isfinite(product):
            raise ValueError(f"value {x} overflows the fixed-point range")
        scaled = round(product)
        limit = self.modulus // 2
        if abs(scaled) >= limit:
            raise ValueError(f"value {x} overflows the fixed-point range")
        return mpz(scaled) % self.modulus

    def decode(self, m: int, scale_bits: int | None = None) -> float:
        """Decode at ``scale_bits`` (defaults to the codec's own scale).

        Products of two encodings decode at twice the scale.
        """
        if scale_bits is None:
            scale_bits = self.scale_bits
        m = mpz(m) % self.modulus
        if m > self.modulus // 2:
            m -= self.modulus
        return float(m) / (1 << scale_bits)


def enc_dot(
    pk: PaillierPublicKey,
    codec: FixedPointCodec,
    enc_query: list[HECiphertext],
    plain_doc,
) -> HECiphertext:
    """Encrypted fixed-point inner product of an encrypted query and a plain vector.

    Decrypts to sum_i encode(q_i) * encode(d_i) mod modulus; decode with
    2 * scale_bits to recover the real dot product.
    """
    if len(enc_query) != len(plain_doc):
        raise ValueError(f"length mismatch: {len(enc_query)} vs {len(plain_doc)}")
    n = pk.modulus
    nsq = pk.modulus_sq
    half = n // 2
    # split positive and negative scalars so a single inversion handles all
    # modular-complement exponents; identical result to per-term scalar_mul
    acc_pos = mpz(1)
    acc_neg = mpz(1)
    for c, d in zip(enc_query, plain_doc):
        s = codec.encode(float(d))
        if s > half:
            acc_neg = (acc_neg * powmod(c.value, n - s, nsq)) % nsq
        elif s:
            acc_pos = (acc_pos * powmod(c.value, s, nsq)) % nsq
    return HECiphertext((acc_pos * invert(acc_neg, nsq)) % nsq)


class EncDotContext:
    """Fixed-base accelerator for many dot products against one encrypted query.

    Precomputes per-ciphertext power tables (radix 2^8 digits of the encoded
    scalar) so each subsequent dot product costs modular multiplications only.
    Results are bit-identical to enc_dot; the upfront table cost amortizes once
    a query is scored against a few dozen candidates.
    """

    _WINDOW = 8

    def __init__(self, pk: PaillierPublicKey, codec: FixedPointCodec, enc_query: list[HECiphertext]):
        self.pk = pk
        self.codec = codec
        self._nsq = pk.modulus_sq
        # encoded magnitudes never exceed modulus/2; digits beyond the codec's
        # scale headroom cannot occur for unit-range inputs
        self._digits = (codec.scale_bits + 1 + self._WINDOW - 1) // self._WINDOW + 1
        radix = 1 << self._WINDOW
        self._tables = []
        for c in enc_query:
            rows = []
            base = c.value
            for _ in range(self._digits):
                row = [mpz(1)] * radix
                acc = mpz(1)
                for j in range(1, radix):
                    acc = (acc * base) % self._nsq
                    row[j] = acc
                rows.append(row)
                base = (acc * base) % self._nsq  # base^radix
            self._tables.append(rows)

    def dot(self, plain_doc) -> HECiphertext:
        if len(plain_doc) != len(self._tables):
            raise ValueError(
                f"length mismatch: {len(self._tables)} vs {len(plain_doc)}"
            )
        n = self.pk.modulus
        nsq = self._nsq
        half = n // 2
        mask = (1 << self._WINDOW) - 1
        acc_pos = mpz(1)
        acc_neg = mpz(1)
        for rows, d in zip(self._tables, plain_doc):
            s = self.codec.encode(float(d))
            if s > half:
                e = int(n - s)
                negative = True
            else:
                e = int(s)
                negative = False
            acc = mpz(1)
            pos = 0
            while e:
                if pos >= len(rows):
                    raise ValueError("scalar magnitude exceeds the precomputed table range")
                digit = e & mask
                if digit:
                    acc = (acc * rows[pos][digit]) % nsq
                e >>= self._WINDOW
                pos += 1
            if negative:
                acc_neg = (acc_neg * acc) % nsq
            else:
                acc_pos = (acc_pos * acc) % nsq
        return HECiphertext((acc_pos * invert(acc_neg, nsq)) % nsq)
