"""Term/text embedding stores, pooling operations, and container I/O.

Two interchangeable on-disk formats hold a vocabulary-to-vector map:

Text format
    Header ``<count> <dim>``, then one ``<token> v1 ... v<dim>`` line per
    entry, UTF-8, values printed with 6 decimal places.

Binary format (canonical)
    Magic bytes ``EMB1``, little-endian u32 count, u32 dim, then per entry a
    u16 token byte length, the UTF-8 token bytes, and dim little-endian
    IEEE-754 float32 values. Round-trips bit-exactly.

Vectors are stored as float32 rows of a single read-only matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"EMB1"


class EmbeddingStore:
    """Immutable vocabulary -> vector map for one language/encoding.

    Rows of ``matrix`` follow ``vocab_order``; the matrix is marked
    read-only so stores can be shared across threads.
    """

    def __init__(self, vocab: Sequence[str], matrix: np.ndarray):
        vocab = list(vocab)
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-D (entries x dim)")
        if len(vocab) != matrix.shape[0]:
            raise ValueError(
                f"{len(vocab)} tokens but {matrix.shape[0]} matrix rows")
        if len(set(vocab)) != len(vocab):
            raise ValueError("duplicate tokens in vocabulary")
        if matrix.size and not np.isfinite(matrix).all():
            raise ValueError("non-finite embedding components")
        matrix.flags.writeable = False
        self.vocab_order: tuple[str, ...] = tuple(vocab)
        self.matrix = matrix
        self.index: dict[str, int] = {t: i for i, t in enumerate(vocab)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab_order)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.index[token]]

    def get(self, token: str):
        row = self.index.get(token)
        return None if row is None else self.matrix[row]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[float]]],
                   dim: int | None = None) -> "EmbeddingStore":
        vocab, rows = [], []
        for token, vec in pairs:
            vocab.append(token)
            rows.append(np.asarray(vec, dtype=np.float32))
        if not rows:
            return cls(vocab, np.zeros((0, dim or 0), dtype=np.float32))
        return cls(vocab, np.stack(rows))


def load_embeddings_text(path: str, limit: int | None = None) -> EmbeddingStore:
    """Load the text container; ``limit`` caps the number of entries read."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline()
        fields = header.split()
        if len(fields) != 2:
            raise ValueError(f"{path}: line 1: malformed header {header.strip()!r}")
        try:
            count, dim = int(fields[0]), int(fields[1])
        except ValueError:
            raise ValueError(
                f"{path}: line 1: malformed header {header.strip()!r}") from None
        if count < 0 or dim < 1:
            raise ValueError(f"{path}: line 1: invalid header counts")
        wanted = count if limit is None else min(count, limit)
        vocab: list[str] = []
        matrix = np.empty((wanted, dim), dtype=np.float32)
        for row in range(wanted):
            line = handle.readline()
            lineno = row + 2
            if not line:
                raise ValueError(
                    f"{path}: line {lineno}: expected {count} rows, "
                    f"file ended after {row}")
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValueError(
                    f"{path}: line {lineno}: expected {dim} values, "
                    f"got {len(parts) - 1}")
            vocab.append(parts[0])
            try:
                matrix[row] = [float(v) for v in parts[1:]]
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric value") from None
    return EmbeddingStore(vocab, matrix)


def write_embeddings_text(store: EmbeddingStore, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{len(store)} {store.dim}\n")
        for token, row in zip(store.vocab_order, store.matrix):
            values = " ".join(f"{v:.6f}" for v in row)
            handle.write(f"{token} {values}\n")


def write_embeddings_binary(store: EmbeddingStore, path: str) -> None:
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<II", len(store), store.dim))
        for token, row in zip(store.vocab_order, store.matrix):
            raw = token.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"token too long for container: {token[:40]!r}...")
            handle.write(struct.pack("<H", len(raw)))
            handle.write(raw)
            handle.write(row.astype("<f4", copy=False).tobytes())


def read_embeddings_binary(path: str) -> EmbeddingStore:
    with open(path, "rb") as handle:
        data = handle.read()

    def need(offset: int, size: int) -> None:
        if offset + size > len(data):
            raise ValueError(f"{path}: truncated at offset {offset}")

    need(0, 4)
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic at offset 0")
    need(4, 8)
    count, dim = struct.unpack_from("<II", data, 4)
    offset = 12
    vocab: list[str] = []
    matrix = np.empty((count, dim), dtype=np.float32)
    for row in range(count):
        need(offset, 2)
        (token_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        need(offset, token_len)
        vocab.append(data[offset:offset + token_len].decode("utf-8"))
        offset += token_len
        need(offset, 4 * dim)
        matrix[row] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes at offset {offset}")
    return EmbeddingStore(vocab, matrix)


def read_embeddings(path: str, limit: int | None = None) -> EmbeddingStore:
    """Open either container format, sniffing the binary magic."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
    if magic == MAGIC:
        store = read_embeddings_binary(path)
        if limit is not None and limit < len(store):
            return EmbeddingStore(store.vocab_order[:limit], store.matrix[:limit])
        return store
    return load_embeddings_text(path, limit=limit)


# --- pooling and encoding-scheme assembly ---------------------------------

def pool_subwords(group) -> np.ndarray:
    """Mean-pool a term's constituent subword vectors."""
    arr = np.asarray(group, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("subword group must be a non-empty list of vectors")
    return arr.mean(axis=0)


def first_subword(group) -> np.ndarray:
    """Represent a term by the vector of its first subword."""
    arr = np.asarray(group, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("subword group must be a non-empty list of vectors")
    return arr[0].copy()


@dataclass
class ContextSet:
    """Up to ``cap`` contextualized vectors of one term, in corpus order.

    The constructor keeps only the first ``cap`` vectors, so the retained
    count is always min(available, cap).
    """

    term: str
    context_vectors: list[np.ndarray]
    cap: int = 60

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("cap must be positive")
        self.context_vectors = [
            np.asarray(v, dtype=np.float64) for v in self.context_vectors[: self.cap]
        ]


def aoc_embed(ctx: ContextSet, fallback) -> np.ndarray:
    """Average the retained context vectors; with no contexts at all the
    term keeps its ``fallback`` (isolation) embedding unchanged."""
    if not ctx.context_vectors:
        return np.asarray(fallback, dtype=np.float64).copy()
    return np.mean(ctx.context_vectors, axis=0)


def semb_embed(token_groups: Sequence, idf_weights: Sequence[float],
               special_tokens: tuple) -> np.ndarray:
    """IDF-weighted sequence embedding from contextualized term states.

    Each term contributes its first-subword vector scaled by its IDF
    weight; the sequence start/end special-token vectors are added scaled
    by the mean IDF of the input terms:

        sum_i idf_i * first_subword(group_i) + mean(idf) * (v_start + v_end)
    """
    if len(token_groups) != len(idf_weights):
        raise ValueError(
            f"{len(token_groups)} token groups but {len(idf_weights)} idf weights")
    if not token_groups:
        raise ValueError("need at least one term")
    weights = np.asarray(idf_weights, dtype=np.float64)
    total = np.zeros_like(first_subword(token_groups[0]))
    for group, weight in zip(token_groups, weights):
        total += weight * first_subword(group)
    v_start = np.asarray(special_tokens[0], dtype=np.float64)
    v_end = np.asarray(special_tokens[1], dtype=np.float64)
    return total + weights.mean() * (v_start + v_end)
