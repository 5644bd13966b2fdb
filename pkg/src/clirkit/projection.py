"""Orthogonal alignment of two monolingual embedding spaces.

Given row-aligned matrices of translation-pair vectors, the closed-form
solve finds the orthogonal matrix minimizing the Frobenius residual
``||X_S @ W - X_T||_F`` via the singular value decomposition of the
cross-covariance ``X_S.T @ X_T``: with ``U S Vt = svd(X_S.T @ X_T)``,
``W = U @ Vt``.

The bootstrap variant alternates solving with augmenting the translation
dictionary by mutual nearest neighbours in the current shared space, which
grows the supervision beyond the seed pairs.
"""

from __future__ import annotations

import logging
import warnings
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingStore

log = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-5

Pair = tuple[str, str]


def parse_dictionary(path: str) -> list[Pair]:
    """Read ``<source_word>\\t<target_word>`` pairs; ``#`` lines are comments."""
    pairs: list[Pair] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise ValueError(
                    f"{path}: line {lineno}: expected <source>\\t<target>")
            pairs.append((fields[0], fields[1]))
    return pairs


def filter_dictionary(pairs: Sequence[Pair], src: EmbeddingStore,
                      tgt: EmbeddingStore) -> tuple[list[Pair], list[Pair]]:
    """Split pairs into (usable, dropped) by vocabulary membership."""
    kept, dropped = [], []
    for pair in pairs:
        if pair[0] in src and pair[1] in tgt:
            kept.append(pair)
        else:
            dropped.append(pair)
    if dropped:
        log.warning("dropping %d/%d dictionary pairs with out-of-vocabulary "
                    "tokens", len(dropped), len(pairs))
    return kept, dropped


def assemble_matrices(pairs: Sequence[Pair], src: EmbeddingStore,
                      tgt: EmbeddingStore) -> tuple[np.ndarray, np.ndarray]:
    """Stack the pair vectors into row-aligned float64 matrices."""
    x_s = np.stack([src.vector(s) for s, _ in pairs]).astype(np.float64)
    x_t = np.stack([tgt.vector(t) for _, t in pairs]).astype(np.float64)
    return x_s, x_t


def orthogonality_error(w: np.ndarray) -> float:
    eye = np.eye(w.shape[0])
    return float(np.abs(w.T @ w - eye).max())


def alignment_residual(x_s: np.ndarray, x_t: np.ndarray,
                       w: np.ndarray) -> float:
    return float(np.linalg.norm(x_s @ w - x_t))


def procrustes(x_s: np.ndarray, x_t: np.ndarray) -> np.ndarray:
    """Closed-form orthogonal map minimizing ``||x_s @ W - x_t||_F``.

    Rows of the two matrices must be aligned by dictionary pair order.
    Raises on shape mismatch; warns when the cross-covariance is rank
    deficient (the minimizer is then not unique and a fixed sign
    convention picks one deterministically).
    """
    x_s = np.asarray(x_s, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_s.ndim != 2 or x_t.ndim != 2 or x_s.shape != x_t.shape:
        raise ValueError(
            f"row-aligned matrices of equal shape required, "
            f"got {x_s.shape} and {x_t.shape}")
    if x_s.shape[0] < 1:
        raise ValueError("need at least one pair")
    cross = x_s.T @ x_t
    u, s, vt = np.linalg.svd(cross)
    if s[-1] <= 1e-12 * max(1.0, float(s[0])):
        warnings.warn(
            "rank-deficient cross-covariance: alignment is not unique; "
            "applying fixed sign convention", RuntimeWarning, stacklevel=2)
        # canonical signs: largest-|entry| component of each left singular
        # vector is made positive, with the matching right vector flipped
        for col in range(u.shape[1]):
            anchor = np.argmax(np.abs(u[:, col]))
            if u[anchor, col] < 0:
                u[:, col] = -u[:, col]
                vt[col, :] = -vt[col, :]
    w = u @ vt
    err = orthogonality_error(w)
    if err > ORTHOGONALITY_TOL:
        raise RuntimeError(f"solved matrix not orthogonal: max error {err:.2e}")
    return w


def project(store: EmbeddingStore, w: np.ndarray) -> EmbeddingStore:
    """Map every vector v to v @ W; vocabulary order is preserved."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (store.dim, store.dim):
        raise ValueError(
            f"projection is {w.shape}, store dimension is {store.dim}")
    return EmbeddingStore(store.vocab_order,
                          store.matrix.astype(np.float64) @ w)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def mutual_nn_augment(src: EmbeddingStore, tgt: EmbeddingStore,
                      w: np.ndarray, seed: Sequence[Pair],
                      block: int = 1024) -> list[Pair]:
    """Extend ``seed`` with mutual-nearest-neighbour pairs.

    A pair (s, t) is added when t is the cosine nearest target of the
    projected s AND s is the nearest projected source of t, computed by
    exact brute-force search (blocked over source rows; identical to the
    unblocked scan). Ties resolve to the lowest vocabulary index. New
    pairs follow the seed in source-vocabulary order, deduplicated.
    """
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("stores must be non-empty")
    projected = _normalize_rows(src.matrix.astype(np.float64) @ np.asarray(w, dtype=np.float64))
    targets = _normalize_rows(tgt.matrix.astype(np.float64))

    n_src = projected.shape[0]
    fwd = np.empty(n_src, dtype=np.int64)
    bwd_val = np.full(targets.shape[0], -np.inf)
    bwd_idx = np.zeros(targets.shape[0], dtype=np.int64)
    for start in range(0, n_src, block):
        chunk = projected[start:start + block]
        sims = chunk @ targets.T
        fwd[start:start + block] = sims.argmax(axis=1)
        chunk_best = sims.max(axis=0)
        chunk_arg = sims.argmax(axis=0) + start
        better = chunk_best > bwd_val
        bwd_val[better] = chunk_best[better]
        bwd_idx[better] = chunk_arg[better]

    result = list(seed)
    seen = set(result)
    for i in range(n_src):
        j = int(fwd[i])
        if int(bwd_idx[j]) != i:
            continue
        pair = (src.vocab_order[i], tgt.vocab_order[j])
        if pair not in seen:
            seen.add(pair)
            result.append(pair)
    return result


def proc_b(src: EmbeddingStore, tgt: EmbeddingStore, seed: Sequence[Pair],
           iterations: int = 2) -> np.ndarray:
    """Iterative bootstrap: solve, augment the dictionary with mutual
    nearest neighbours, solve again, for ``iterations`` solve rounds.

    ``iterations=1`` is exactly the plain closed-form solve on the seed.
    """
    if iterations < 1:
        raise ValueError("iterations must be positive")
    pairs, _ = filter_dictionary(seed, src, tgt)
    if not pairs:
        raise ValueError("no trainable pairs")
    w = None
    for round_idx in range(iterations):
        x_s, x_t = assemble_matrices(pairs, src, tgt)
        w = procrustes(x_s, x_t)
        if round_idx < iterations - 1:
            pairs = mutual_nn_augment(src, tgt, w, pairs)
    return w
