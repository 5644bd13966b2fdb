"""Contrastive tuning of a linear adapter over frozen embeddings.

The loss is the scaled-softmax ranking loss over in-batch negatives:
for a batch of n (query, relevant document) pairs, each query treats
the other n-1 documents as negatives, so

    loss_i = -log( exp(s * cos(q_i, d_i)) / sum_j exp(s * cos(q_i, d_j)) )

The adapter is a square matrix applied to both sides; its gradient is
computed in closed form, so training is plain SGD without autodiff.
A distillation objective for mapping a new encoder onto a fixed teacher
space and a deterministic k-fold splitter round out the module.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingStore, read_embeddings_binary, \
    write_embeddings_binary

DEFAULT_SCALE = 20.0


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError(f"zero vector as {what}")
    return vec / norm


def mnrl_loss(query: np.ndarray, d_pos: np.ndarray,
              negatives: Sequence[np.ndarray],
              scale: float = DEFAULT_SCALE) -> float:
    """Ranking loss of one (query, positive) pair against its negatives:

        -log( e^{s*cos(q,d+)} / (e^{s*cos(q,d+)} + sum_j e^{s*cos(q,d-_j)}) )

    Stable for large scales: the shared maximum is subtracted before
    exponentiation. Zero vectors have no cosine and are rejected.
    """
    if len(negatives) < 1:
        raise ValueError("no negatives")
    q = _unit(query, "query")
    sims = [float(q @ _unit(d_pos, "positive"))]
    sims.extend(float(q @ _unit(neg, "negative")) for neg in negatives)
    logits = scale * np.asarray(sims)
    peak = logits.max()
    return float(peak - logits[0] + math.log(np.exp(logits - peak).sum()))


def _normalize_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError(f"zero vector in {what}")
    return matrix / norms


def mnrl_batch_loss(queries: np.ndarray, docs: np.ndarray,
                    scale: float = DEFAULT_SCALE,
                    adapter: np.ndarray | None = None) -> float:
    """Mean in-batch loss; row i of each matrix is the i-th pair.

    Every other row's positive serves as a negative, so a batch of n
    pairs gives each query exactly n-1 negatives. With an adapter both
    sides are mapped through it first; the identity adapter changes
    nothing. A single-pair batch has no negatives and is rejected.
    """
    queries = np.asarray(queries, dtype=np.float64)
    docs = np.asarray(docs, dtype=np.float64)
    if queries.shape != docs.shape or queries.ndim != 2:
        raise ValueError("row-aligned matrices of equal shape required")
    n = queries.shape[0]
    if n < 2:
        raise ValueError("batch of one pair has no negatives")
    if adapter is not None:
        adapter = np.asarray(adapter, dtype=np.float64)
        queries = queries @ adapter.T
        docs = docs @ adapter.T
    sims = _normalize_rows(queries, "queries") @ _normalize_rows(
        docs, "documents").T
    logits = scale * sims
    peak = logits.max(axis=1, keepdims=True)
    log_denom = peak.ravel() + np.log(np.exp(logits - peak).sum(axis=1))
    return float((log_denom - np.diag(logits)).mean())


def mnrl_gradient(queries: np.ndarray, docs: np.ndarray, adapter: np.ndarray,
                  scale: float = DEFAULT_SCALE) -> np.ndarray:
    """Closed-form gradient of the batch loss with respect to the adapter.

    Both sides pass through the same adapter: u_i = A q_i, v_j = A d_j,
    similarities are cosines of the adapted rows.
    """
    queries = np.asarray(queries, dtype=np.float64)
    docs = np.asarray(docs, dtype=np.float64)
    adapter = np.asarray(adapter, dtype=np.float64)
    n = queries.shape[0]
    if n < 2:
        raise ValueError("need at least two pairs for in-batch negatives")
    u = queries @ adapter.T
    v = docs @ adapter.T
    u_norm = np.linalg.norm(u, axis=1, keepdims=True)
    v_norm = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(u_norm == 0) or np.any(v_norm == 0):
        raise ValueError("adapter collapsed a vector to zero")
    u_hat = u / u_norm
    v_hat = v / v_norm
    sims = u_hat @ v_hat.T

    logits = scale * sims
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    resid = probs - np.eye(n)

    # chain rule through the row normalizations
    row_mix = (resid * sims).sum(axis=1, keepdims=True)
    col_mix = (resid * sims).sum(axis=0)[:, None]
    d_u = (resid @ v_hat) / u_norm - row_mix * u / (u_norm ** 2)
    d_v = (resid.T @ u_hat) / v_norm - col_mix * v / (v_norm ** 2)
    return (scale / n) * (d_u.T @ queries + d_v.T @ docs)


def train_adapter(queries: np.ndarray, docs: np.ndarray,
                  scale: float = DEFAULT_SCALE, learning_rate: float = 0.05,
                  epochs: int = 10, batch_size: int = 16,
                  seed: int = 0) -> tuple[np.ndarray, list[float]]:
    """SGD on the in-batch ranking loss, starting from the identity map.

    Pairs are reshuffled every epoch; a trailing batch of one pair is
    skipped because it has no negatives. Returns the adapter and the
    per-epoch mean batch loss. Raises as soon as the loss goes
    non-finite rather than training on garbage.
    """
    queries = np.asarray(queries, dtype=np.float64)
    docs = np.asarray(docs, dtype=np.float64)
    if queries.shape != docs.shape or queries.ndim != 2:
        raise ValueError("row-aligned matrices of equal shape required")
    n, dim = queries.shape
    if n < 2:
        raise ValueError("need at least two pairs")
    if batch_size < 2:
        raise ValueError("batch size must be at least 2")
    rng = np.random.default_rng(seed)
    adapter = np.eye(dim)
    history: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            chosen = order[start:start + batch_size]
            if len(chosen) < 2:
                continue
            batch_q = queries[chosen] @ adapter.T
            batch_d = docs[chosen] @ adapter.T
            loss = mnrl_batch_loss(batch_q, batch_d, scale=scale)
            if not math.isfinite(loss):
                raise ValueError(f"non-finite loss at epoch {epoch + 1}")
            losses.append(loss)
            grad = mnrl_gradient(queries[chosen], docs[chosen], adapter,
                                 scale=scale)
            adapter -= learning_rate * grad
        history.append(float(np.mean(losses)))
    return adapter, history


def kfold_split(query_ids: Sequence[str], k: int = 10,
                seed: int = 0) -> dict[str, int]:
    """Deterministic fold assignment: query id -> fold index in [0, k).

    Ids are shuffled by the seed and dealt round-robin, so every query
    lands in exactly one fold and fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("need at least two folds")
    if k > len(query_ids):
        raise ValueError("more folds than queries")
    if len(set(query_ids)) != len(query_ids):
        raise ValueError("duplicate query ids")
    order = np.random.default_rng(seed).permutation(len(query_ids))
    return {query_ids[int(position)]: slot % k
            for slot, position in enumerate(order)}


def fold_partitions(assignment: Mapping[str, int],
                    k: int) -> list[tuple[list[str], list[str]]]:
    """Materialize (train_ids, test_ids) per fold, leak-checked.

    Raises if any id would appear on both sides of a fold, which the
    assignment construction makes impossible but evaluation code must
    never silently survive.
    """
    partitions = []
    for fold in range(k):
        test = sorted(q for q, f in assignment.items() if f == fold)
        train = sorted(q for q, f in assignment.items() if f != fold)
        if set(test) & set(train):
            raise ValueError(f"fold {fold} leaks queries between train "
                             f"and test")
        partitions.append((train, test))
    return partitions


def distillation_loss(teacher_src: np.ndarray, student_src: np.ndarray,
                      student_tgt: np.ndarray) -> float:
    """Mean squared-distance sum tying a student to a frozen teacher.

    Per sentence pair: the student must place the source sentence on
    the teacher's source vector and the target sentence there too.
    """
    teacher_src = np.asarray(teacher_src, dtype=np.float64)
    student_src = np.asarray(student_src, dtype=np.float64)
    student_tgt = np.asarray(student_tgt, dtype=np.float64)
    if not teacher_src.shape == student_src.shape == student_tgt.shape:
        raise ValueError("all three matrices must share one shape")
    if teacher_src.shape[0] == 0:
        raise ValueError("empty batch")
    src_term = ((teacher_src - student_src) ** 2).sum(axis=1)
    tgt_term = ((teacher_src - student_tgt) ** 2).sum(axis=1)
    return float((src_term + tgt_term).mean())


def save_adapter(path: str, adapter: np.ndarray) -> None:
    """Persist the adapter in the binary vector container, one row per
    token named by its row index."""
    adapter = np.asarray(adapter, dtype=np.float64)
    if adapter.ndim != 2:
        raise ValueError("adapter must be a matrix")
    tokens = [str(i) for i in range(adapter.shape[0])]
    write_embeddings_binary(EmbeddingStore(tokens, adapter), path)


def load_adapter(path: str) -> np.ndarray:
    """Read an adapter saved by save_adapter, restoring row order."""
    store = read_embeddings_binary(path)
    rows = []
    for i in range(len(store)):
        token = str(i)
        if token not in store:
            raise ValueError(f"{path}: not an adapter file: missing row {i}")
        rows.append(store.vector(token).astype(np.float64))
    return np.stack(rows)
