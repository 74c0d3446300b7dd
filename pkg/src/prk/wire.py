"""Framed binary wire format, protocol v1.

Frame: u32 big-endian payload length || 1-byte tag || payload.
Integers are big-endian; big integers are length-prefixed big-endian
magnitudes; reals are IEEE-754 binary64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from gmpy2 import mpz

TAG_PHASE1 = 0x01
TAG_PHASE1_REPLY = 0x02
TAG_FETCH_DIRECT = 0x03
TAG_DOCUMENTS = 0x04
TAG_OT_B = 0x05
TAG_OT_WRAPPED = 0x06
TAG_ERROR = 0x7F


class WireError(Exception):
    pass


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v: int):
        self.parts.append(struct.pack(">B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack(">H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack(">I", v))

    def f64(self, v: float):
        self.parts.append(struct.pack(">d", v))

    def bigint(self, v) -> None:
        raw = int(v).to_bytes(max(1, (int(v).bit_length() + 7) // 8), "big")
        self.u32(len(raw))
        self.parts.append(raw)

    def blob(self, v: bytes):
        self.u32(len(v))
        self.parts.append(v)

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise WireError("truncated payload")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def u8(self) -> int:
        return struct.unpack(">B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self._take(8))[0]

    def bigint(self) -> mpz:
        return mpz(int.from_bytes(self._take(self.u32()), "big"))

    def blob(self) -> bytes:
        return self._take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError(f"{len(self.data) - self.pos} trailing bytes in payload")


@dataclass
class Phase1:
    """Client opener: perturbed embedding, range size, encrypted query.

    ``embedding`` is None in the full-corpus mode (nothing plaintext to send);
    ``public_modulus``/``ciphertexts`` are None when the query goes in the clear.
    """

    n: int
    embedding: list[float] | None
    k_prime: int
    k: int
    public_modulus: mpz | None = None
    ciphertexts: list[mpz] | None = None
    tag = TAG_PHASE1

    def encode(self) -> bytes:
        w = _Writer()
        w.u32(self.n)
        w.u8(1 if self.embedding is not None else 0)
        if self.embedding is not None:
            if len(self.embedding) != self.n:
                raise WireError("embedding length does not match n")
            for x in self.embedding:
                w.f64(x)
        w.u32(self.k_prime)
        w.u32(self.k)
        w.u8(1 if self.ciphertexts is not None else 0)
        if self.ciphertexts is not None:
            if self.public_modulus is None:
                raise WireError("ciphertexts present without a public key")
            if len(self.ciphertexts) != self.n:
                raise WireError("ciphertext count does not match n")
            w.bigint(self.public_modulus)
            for c in self.ciphertexts:
                w.bigint(c)
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "Phase1":
        r = _Reader(payload)
        n = r.u32()
        embedding = [r.f64() for _ in range(n)] if r.u8() else None
        k_prime = r.u32()
        k = r.u32()
        public_modulus = None
        ciphertexts = None
        if r.u8():
            public_modulus = r.bigint()
            ciphertexts = [r.bigint() for _ in range(n)]
        r.done()
        return cls(n, embedding, k_prime, k, public_modulus, ciphertexts)


@dataclass
class Phase1Reply:
    """Server reply: encrypted dot per candidate, plus a speculative OT opener."""

    ciphertexts: list[mpz]
    ot_a: mpz | None = None
    tag = TAG_PHASE1_REPLY

    def encode(self) -> bytes:
        w = _Writer()
        w.u32(len(self.ciphertexts))
        for c in self.ciphertexts:
            w.bigint(c)
        w.u8(1 if self.ot_a is not None else 0)
        if self.ot_a is not None:
            w.bigint(self.ot_a)
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "Phase1Reply":
        r = _Reader(payload)
        count = r.u32()
        ciphertexts = [r.bigint() for _ in range(count)]
        ot_a = r.bigint() if r.u8() else None
        r.done()
        return cls(ciphertexts, ot_a)


@dataclass
class FetchDirect:
    positions: list[int]  # 1-based candidate positions
    tag = TAG_FETCH_DIRECT

    def encode(self) -> bytes:
        w = _Writer()
        w.u32(len(self.positions))
        for pos in self.positions:
            w.u32(pos)
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "FetchDirect":
        r = _Reader(payload)
        positions = [r.u32() for _ in range(r.u32())]
        r.done()
        return cls(positions)


@dataclass
class Documents:
    texts: list[bytes]
    tag = TAG_DOCUMENTS

    def encode(self) -> bytes:
        w = _Writer()
        w.u32(len(self.texts))
        for text in self.texts:
            w.blob(text)
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "Documents":
        r = _Reader(payload)
        texts = [r.blob() for _ in range(r.u32())]
        r.done()
        return cls(texts)


@dataclass
class OtB:
    elements: list[mpz]
    tag = TAG_OT_B

    def encode(self) -> bytes:
        w = _Writer()
        w.u32(len(self.elements))
        for elem in self.elements:
            w.bigint(elem)
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "OtB":
        r = _Reader(payload)
        elements = [r.bigint() for _ in range(r.u32())]
        r.done()
        return cls(elements)


@dataclass
class OtWrapped:
    wrapped: list[bytes]
    tag = TAG_OT_WRAPPED

    def encode(self) -> bytes:
        w = _Writer()
        w.u32(len(self.wrapped))
        for blob in self.wrapped:
            w.blob(blob)
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "OtWrapped":
        r = _Reader(payload)
        wrapped = [r.blob() for _ in range(r.u32())]
        r.done()
        return cls(wrapped)


@dataclass
class ErrorMessage:
    code: int
    message: str
    tag = TAG_ERROR

    def encode(self) -> bytes:
        w = _Writer()
        w.u16(self.code)
        w.blob(self.message.encode("utf-8"))
        return w.bytes()

    @classmethod
    def decode(cls, payload: bytes) -> "ErrorMessage":
        r = _Reader(payload)
        code = r.u16()
        message = r.blob().decode("utf-8")
        r.done()
        return cls(code, message)


_MESSAGE_TYPES = {
    cls.tag: cls
    for cls in (Phase1, Phase1Reply, FetchDirect, Documents, OtB, OtWrapped, ErrorMessage)
}


def encode_frame(msg) -> bytes:
    payload = msg.encode()
    return struct.pack(">I", len(payload)) + bytes([msg.tag]) + payload


def decode_frame(frame: bytes):
    if len(frame) < 5:
        raise WireError("frame too short")
    (length,) = struct.unpack(">I", frame[:4])
    tag = frame[4]
    payload = frame[5:]
    if len(payload) != length:
        raise WireError(f"frame length {length} does not match payload {len(payload)}")
    cls = _MESSAGE_TYPES.get(tag)
    if cls is None:
        raise WireError(f"unknown message tag 0x{tag:02x}")
    return cls.decode(payload)


def read_frame(stream):
    """Read one message from a blocking byte stream; None on clean EOF."""
    header = stream.read(4)
    if not header:
        return None
    if len(header) != 4:
        raise WireError("truncated frame header")
    (length,) = struct.unpack(">I", header)
    rest = b""
    while len(rest) < length + 1:
        chunk = stream.read(length + 1 - len(rest))
        if not chunk:
            raise WireError("connection closed mid-frame")
        rest += chunk
    return decode_frame(header + rest)


def write_frame(stream, msg) -> int:
    frame = encode_frame(msg)
    stream.write(frame)
    return len(frame)
