"""Ranking documents against queries in a shared embedding space.

Two families of scorers live here. The embedding family represents a
query as the plain sum of its term vectors and a document as the
IDF-weighted sum of its term vectors, then ranks by cosine. The
localized variant scores each document part separately and aggregates
the best part scores, which keeps long documents from drowning a local
match. A unigram language model scorer with Dirichlet smoothing is
included as a lexical baseline and as the first stage for reranking.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Collection, CollectionStats, idf
from .embeddings import EmbeddingStore

RUN_SEPARATOR = "\x01"

Scored = tuple[str, float]


def embed_query(tokens: Sequence[str], store: EmbeddingStore) -> np.ndarray:
    """Sum of term vectors; out-of-vocabulary tokens contribute nothing."""
    vec = np.zeros(store.dim, dtype=np.float64)
    for token, count in Counter(tokens).items():
        if token in store:
            vec += count * store.vector(token).astype(np.float64)
    return vec


def embed_document(tokens: Sequence[str], store: EmbeddingStore,
                   stats: CollectionStats) -> np.ndarray:
    """IDF-weighted sum of term vectors, one contribution per occurrence."""
    vec = np.zeros(store.dim, dtype=np.float64)
    for token, count in Counter(tokens).items():
        if token in store:
            weight = count * idf(token, stats)
            vec += weight * store.vector(token).astype(np.float64)
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero against anything is 0.0."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def rank(query_vec: np.ndarray,
         doc_vecs: Mapping[str, np.ndarray]) -> list[Scored]:
    """Cosine-rank documents, ties broken by ascending document id.

    Documents whose vector is all zeros (nothing in vocabulary) sink to
    the bottom with score -1.0. A zero query scores everything 0.0.
    """
    query_is_zero = float(np.linalg.norm(query_vec)) == 0.0
    scored = []
    for doc_id, vec in doc_vecs.items():
        if float(np.linalg.norm(vec)) == 0.0:
            score = 0.0 if query_is_zero else -1.0
        else:
            score = cosine(query_vec, vec)
        scored.append((doc_id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def localized_score(query_vec: np.ndarray,
                    part_vecs: Sequence[np.ndarray], k: int) -> float:
    """Mean of the top-k part cosines.

    With fewer than k parts every part is averaged. k=1 is max-pooling.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not part_vecs:
        raise ValueError("document has no parts")
    sims = np.sort([cosine(query_vec, p) for p in part_vecs])[::-1]
    return float(sims[:min(k, len(sims))].mean())


def rank_localized(query_vec: np.ndarray,
                   parts_by_doc: Mapping[str, Sequence[np.ndarray]],
                   k: int) -> list[tuple[str, float, int]]:
    """Rank by aggregated part scores; also reports best part positions.

    A document with zero parts sinks to the bottom at -1.0 and carries
    position 0 as the nothing-matched flag.
    """
    if k < 1:
        raise ValueError("k must be positive")
    scored = []
    for doc_id, parts in parts_by_doc.items():
        if not parts:
            scored.append((doc_id, -1.0, 0))
            continue
        sims = np.array([cosine(query_vec, p) for p in parts])
        best_position = int(np.argmax(sims)) + 1
        top = np.sort(sims)[::-1][:min(k, len(sims))]
        scored.append((doc_id, float(top.mean()), best_position))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def rank_parts(query_vec: np.ndarray,
               parts_by_doc: Mapping[str, Sequence[np.ndarray]],
               ) -> list[tuple[str, int, float]]:
    """Rank every individual part: (doc_id, position, score), best first.

    This is the pool the position histogram draws from; ties break by
    (doc_id, position).
    """
    scored = []
    for doc_id, parts in parts_by_doc.items():
        for index, vec in enumerate(parts, start=1):
            scored.append((doc_id, index, cosine(query_vec, vec)))
    scored.sort(key=lambda item: (-item[2], item[0], item[1]))
    return scored


def parts_from_store(store: EmbeddingStore) -> dict[str, list[np.ndarray]]:
    """Group part vectors keyed ``<doc_id>\\x01<position>`` by document.

    Positions must be integers starting at 1; parts are returned in
    position order regardless of store order.
    """
    staged: dict[str, list[tuple[int, np.ndarray]]] = {}
    for key in store.vocab_order:
        fields = key.split(RUN_SEPARATOR)
        if len(fields) != 2:
            raise ValueError(f"malformed part key {key!r}")
        doc_id, pos_text = fields
        try:
            position = int(pos_text)
        except ValueError:
            raise ValueError(f"malformed part key {key!r}") from None
        if position < 1:
            raise ValueError(f"malformed part key {key!r}")
        staged.setdefault(doc_id, []).append((position, store.vector(key)))
    grouped: dict[str, list[np.ndarray]] = {}
    for doc_id, entries in staged.items():
        entries.sort(key=lambda item: item[0])
        grouped[doc_id] = [vec for _, vec in entries]
    return grouped


def qlm_dirichlet(query_tokens: Sequence[str], doc_counts: Mapping[str, int],
                  doc_len: int, collection_counts: Mapping[str, int],
                  collection_len: int, mu: float = 1000.0) -> float:
    """Query log-likelihood under a Dirichlet-smoothed unigram model.

    Terms absent from the whole collection are skipped, so the score
    stays finite. One summand per query token occurrence.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if collection_len <= 0:
        raise ValueError("empty collection")
    total = 0.0
    for token in query_tokens:
        cf = collection_counts.get(token, 0)
        if cf == 0:
            continue
        tf = doc_counts.get(token, 0)
        prob = (tf + mu * cf / collection_len) / (doc_len + mu)
        total += math.log(prob)
    return total


def rank_qlm(query_tokens: Sequence[str], collection: Collection,
             mu: float = 1000.0) -> list[Scored]:
    """Dirichlet-smoothed language model ranking over a collection."""
    scored = []
    for doc in collection.documents:
        score = qlm_dirichlet(query_tokens, Counter(doc.tokens),
                              len(doc.tokens), collection.term_counts,
                              collection.total_tokens, mu=mu)
        scored.append((doc.id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def rerank_merge(base: Sequence[Scored], external_scores: Mapping[str, float],
                 top_n: int) -> list[Scored]:
    """Reorder the top ``top_n`` of a run by external scores.

    Within the window, documents with an external score come first,
    sorted by it; documents without one keep their original score and
    relative order below them. Everything past the window is untouched,
    so with empty external scores the run comes back unchanged.
    """
    if top_n < 1:
        raise ValueError("top_n must be positive")
    head = list(base[:top_n])
    tail = list(base[top_n:])
    rescored = sorted(
        ((doc_id, float(external_scores[doc_id])) for doc_id, _ in head
         if doc_id in external_scores),
        key=lambda item: (-item[1], item[0]))
    unscored = [(doc_id, score) for doc_id, score in head
                if doc_id not in external_scores]
    return rescored + unscored + tail


def write_run(path: str, results: Mapping[str, Sequence[Scored]],
              tag: str) -> None:
    """Write ranked results, one ``<qid> Q0 <docid> <rank> <score> <tag>``
    line per document, scores with six decimals, ranks from 1."""
    with open(path, "w", encoding="utf-8") as handle:
        for query_id, scored in results.items():
            for position, (doc_id, score) in enumerate(scored, start=1):
                handle.write(f"{query_id} Q0 {doc_id} {position} "
                             f"{score:.6f} {tag}\n")


def read_run(path: str) -> dict[str, list[Scored]]:
    """Read a run file back into per-query ranked lists."""
    staged: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ValueError(f"{path}: line {lineno}: expected 6 fields, "
                                 f"got {len(fields)}")
            query_id, _, doc_id, rank_text, score_text, _ = fields
            try:
                position = int(rank_text)
                score = float(score_text)
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: bad rank or score") from None
            staged.setdefault(query_id, []).append((position, doc_id, score))
    results: dict[str, list[Scored]] = {}
    for query_id, entries in staged.items():
        entries.sort(key=lambda item: item[0])
        results[query_id] = [(doc_id, score) for _, doc_id, score in entries]
    return results


def read_scores(path: str) -> dict[str, dict[str, float]]:
    """Read ``<query_id>\\t<doc_id>\\t<score>`` replacement scores."""
    scores: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"{path}: line {lineno}: expected "
                                 f"<query_id>\\t<doc_id>\\t<score>")
            try:
                value = float(fields[2])
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: bad score") from None
            scores.setdefault(fields[0], {})[fields[1]] = value
    return scores
