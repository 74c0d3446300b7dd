"""Flat, exact vector corpus: ingestion, top-k by cosine distance, fetch by id.

The store is immutable after ingestion.  Retrieval is an exact scan (no
approximate index): the candidate-range guarantees are stated for exact top-k,
and tie-breaks are by ascending id so results are fully deterministic.

Two on-disk formats:
  * JSON lines: one object per record with "id", "embedding", "text".
  * Binary bulk: magic "PRVS", u32 version=1, u32 n, u64 N, then per record
    u64 id, n little-endian float64, u32 text length, text bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, NamedTuple

import numpy as np

MAGIC = b"PRVS"
FORMAT_VERSION = 1


class IngestError(ValueError):
    pass


class UnknownIdError(KeyError):
    pass


@dataclass(frozen=True)
class DocumentRecord:
    id: int
    embedding: np.ndarray
    text: bytes


class Candidate(NamedTuple):
    position: int  # 1-based rank within this candidate set
    id: int
    distance: float


class VectorStore:
    """N unit embeddings plus document payloads, scanned exactly."""

    def __init__(self, ids: np.ndarray, embeddings: np.ndarray, texts: list[bytes]):
        self._ids = ids
        self._matrix = embeddings
        self._texts = texts
        self._index = {int(doc_id): i for i, doc_id in enumerate(ids)}

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int:
        return self._matrix.shape[1] if self._matrix.size else 0

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def embeddings(self) -> np.ndarray:
        return self._matrix

    @classmethod
    def ingest(cls, records: Iterable[tuple[int, Iterable[float], bytes]]) -> "VectorStore":
        """Build a store from (id, embedding, text) triples.

        Embeddings are renormalized; duplicate ids, inconsistent dimensions and
        non-finite components are rejected with the offending record index.
        """
        ids: list[int] = []
        rows: list[np.ndarray] = []
        texts: list[bytes] = []
        seen: set[int] = set()
        dim: int | None = None
        for idx, (doc_id, embedding, text) in enumerate(records):
            doc_id = int(doc_id)
            if not 0 <= doc_id < 2**64:
                raise IngestError(f"record {idx}: id {doc_id} out of u64 range")
            if doc_id in seen:
                raise IngestError(f"record {idx}: duplicate id {doc_id}")
            vec = np.asarray(embedding, dtype=np.float64)
            if vec.ndim != 1:
                raise IngestError(f"record {idx}: embedding must be a flat vector")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise IngestError(
                    f"record {idx}: dimension {vec.size} does not match {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise IngestError(f"record {idx}: non-finite embedding component")
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise IngestError(f"record {idx}: zero embedding cannot be normalized")
            seen.add(doc_id)
            ids.append(doc_id)
            rows.append(vec / norm)
            texts.append(bytes(text))
        if not rows:
            return cls(np.empty(0, dtype=np.uint64), np.empty((0, 0)), [])
        return cls(np.array(ids, dtype=np.uint64), np.vstack(rows), texts)

    def top_k(self, query: np.ndarray, k: int) -> list[Candidate]:
        """The k smallest cosine distances, exact; ties broken by ascending id."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise ValueError(f"query dimension {query.shape} does not match {self.dim}")
        distances = 1.0 - self._matrix @ query
        order = np.lexsort((self._ids, distances))[: min(k, len(self))]
        return [
            Candidate(position=rank + 1, id=int(self._ids[i]), distance=float(distances[i]))
            for rank, i in enumerate(order)
        ]

    def fetch(self, ids: Iterable[int]) -> list[DocumentRecord]:
        """Records in request order; unknown ids raise naming the id."""
        out = []
        for doc_id in ids:
            i = self._index.get(int(doc_id))
            if i is None:
                raise UnknownIdError(f"unknown document id {doc_id}")
            out.append(
                DocumentRecord(id=int(doc_id), embedding=self._matrix[i], text=self._texts[i])
            )
        return out

    # --- serialization ---

    @classmethod
    def from_jsonl(cls, stream) -> "VectorStore":
        def gen():
            for lineno, line in enumerate(stream):
                if isinstance(line, bytes):
                    line = line.decode("utf-8")
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IngestError(f"line {lineno + 1}: invalid JSON: {exc}") from exc
                if not isinstance(obj, dict) or not {"id", "embedding", "text"} <= obj.keys():
                    raise IngestError(f"line {lineno + 1}: missing id/embedding/text")
                yield obj["id"], obj["embedding"], obj["text"].encode("utf-8")

        return cls.ingest(gen())

    def to_jsonl(self, stream) -> None:
        for i, doc_id in enumerate(self._ids):
            obj = {
                "id": int(doc_id),
                "embedding": self._matrix[i].tolist(),
                "text": self._texts[i].decode("utf-8"),
            }
            stream.write(json.dumps(obj) + "\n")

    def to_binary(self, fp: BinaryIO) -> None:
        fp.write(MAGIC)
        fp.write(struct.pack("<II", FORMAT_VERSION, self.dim))
        fp.write(struct.pack("<Q", len(self)))
        for i, doc_id in enumerate(self._ids):
            fp.write(struct.pack("<Q", int(doc_id)))
            fp.write(self._matrix[i].astype("<f8").tobytes())
            text = self._texts[i]
            fp.write(struct.pack("<I", len(text)))
            fp.write(text)

    @classmethod
    def from_binary(cls, fp: BinaryIO) -> "VectorStore":
        def read_exact(count: int) -> bytes:
            data = fp.read(count)
            if len(data) != count:
                raise IngestError("truncated binary store")
            return data

        if read_exact(4) != MAGIC:
            raise IngestError("bad magic; not a binary store file")
        version, dim = struct.unpack("<II", read_exact(8))
        if version != FORMAT_VERSION:
            raise IngestError(f"unsupported version {version}")
        (count,) = struct.unpack("<Q", read_exact(8))

        def gen():
            for _ in range(count):
                (doc_id,) = struct.unpack("<Q", read_exact(8))
                vec = np.frombuffer(read_exact(8 * dim), dtype="<f8")
                (text_len,) = struct.unpack("<I", read_exact(4))
                yield doc_id, vec, read_exact(text_len)

        store = cls.ingest(gen())
        if fp.read(1):
            raise IngestError("trailing bytes after final record")
        return store
