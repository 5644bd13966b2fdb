"""Corpus handling: tokenization, sentence splitting, segmentation, statistics.

Documents and queries arrive as UTF-8 text files with one record per line,
``<id>\\t<text>``. All derived artifacts (tokens, sentence spans, segments,
document frequencies) are deterministic functions of the input text, so
per-document processing can run in any order or in parallel.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation off token edges.

    Interior punctuation (hyphens, apostrophes) is kept; tokens that are
    punctuation-only disappear. Empty input yields an empty list.
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if end > start:
            tokens.append(raw[start:end])
    return tokens


_TERMINATORS = ".!?"


def _word_before(text: str, idx: int) -> str:
    """Maximal run of letters immediately preceding position ``idx``."""
    j = idx
    while j > 0 and text[j - 1].isalpha():
        j -= 1
    return text[j:idx]


def _word_after(text: str, idx: int) -> str:
    j = idx
    while j < len(text) and text[j].isalpha():
        j += 1
    return text[idx:j]


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence splitting.

    A boundary is a run of ``.``, ``!`` or ``?`` followed by whitespace and
    an uppercase letter or a digit. A period after a single-letter word is
    treated as an abbreviation dot (initials, "v. Smith") and never ends a
    sentence, unless the capitalized word that follows is itself a single
    letter. Returned sentences are trimmed; their raw spans partition the
    input text.
    """
    boundaries = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in _TERMINATORS:
            j = i
            while j + 1 < n and text[j + 1] in _TERMINATORS:
                j += 1
            k = j + 1
            while k < n and text[k].isspace():
                k += 1
            if k > j + 1 and k < n and (text[k].isupper() or text[k].isdigit()):
                abbrev = (
                    text[i] == "."
                    and len(_word_before(text, i)) == 1
                    and len(_word_after(text, k)) > 1
                )
                if not abbrev:
                    boundaries.append((j + 1, k))
            i = j + 1
        else:
            i += 1

    sentences = []
    prev = 0
    for end, nxt in boundaries:
        piece = text[prev:end].strip()
        if piece:
            sentences.append(piece)
        prev = nxt
    tail = text[prev:].strip()
    if tail:
        sentences.append(tail)
    return sentences


@dataclass(frozen=True)
class Segment:
    """A window of contiguous tokens within one document.

    ``position`` is the 1-based ordinal of the segment in its document;
    ``span`` is a half-open (start, end) token-index range.
    """

    doc_id: str
    position: int
    span: tuple[int, int]

    def __len__(self) -> int:
        return self.span[1] - self.span[0]


def segment(tokens: Sequence[str], window: int, stride: int,
            doc_id: str = "") -> list[Segment]:
    """Slide a fixed window over ``tokens``.

    Segments start at 0, stride, 2*stride, ...; each spans
    ``min(window, remaining)`` tokens. Generation stops with the first
    segment whose end reaches the token count, which guarantees full
    coverage with no all-overlap trailing segment.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    if stride > window:
        raise ValueError(f"stride {stride} exceeds window {window}")
    n = len(tokens)
    segments: list[Segment] = []
    pos = 1
    while n > 0:
        start = (pos - 1) * stride
        end = min(start + window, n)
        segments.append(Segment(doc_id=doc_id, position=pos, span=(start, end)))
        if end >= n:
            break
        pos += 1
    return segments


@dataclass
class Document:
    """Tokenized document with sentence spans over the token sequence.

    ``sentence_spans`` are disjoint, sorted half-open ranges covering
    ``[0, len(tokens))``.
    """

    id: str
    tokens: list[str]
    sentence_spans: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> "Document":
        tokens: list[str] = []
        spans: list[tuple[int, int]] = []
        for sentence in split_sentences(text):
            sent_tokens = tokenize(sentence)
            if not sent_tokens:
                continue
            spans.append((len(tokens), len(tokens) + len(sent_tokens)))
            tokens.extend(sent_tokens)
        return cls(id=doc_id, tokens=tokens, sentence_spans=spans)

    def sentences(self) -> list[list[str]]:
        return [self.tokens[a:b] for a, b in self.sentence_spans]

    def segments(self, window: int, stride: int) -> list[Segment]:
        return segment(self.tokens, window, stride, doc_id=self.id)


@dataclass(frozen=True)
class CollectionStats:
    """Document counts for IDF: ``num_docs`` and per-token document frequency."""

    num_docs: int
    df: dict[str, int]


def collection_stats(documents: Sequence[Document]) -> CollectionStats:
    """Count in how many documents each token appears. df is document-level:
    repeated occurrences within one document count once."""
    if not documents:
        raise ValueError("empty collection")
    df: Counter[str] = Counter()
    for doc in documents:
        df.update(set(doc.tokens))
    return CollectionStats(num_docs=len(documents), df=dict(df))


def idf(token: str, stats: CollectionStats) -> float:
    """ln(N / df(t)); tokens unseen in the collection get the ln(N) ceiling."""
    n = stats.num_docs
    d = stats.df.get(token, 0)
    if d < 1:
        return math.log(n)
    return math.log(n / d)


class Collection:
    """A document collection with cached statistics and a unigram model.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, documents: Sequence[Document]):
        self.documents = list(documents)
        self.by_id: dict[str, Document] = {}
        for doc in self.documents:
            if doc.id in self.by_id:
                raise ValueError(f"duplicate document id {doc.id!r}")
            self.by_id[doc.id] = doc
        self.stats = collection_stats(self.documents)
        self.term_counts: Counter[str] = Counter()
        for doc in self.documents:
            self.term_counts.update(doc.tokens)
        self.total_tokens = sum(len(d.tokens) for d in self.documents)

    def __len__(self) -> int:
        return len(self.documents)

    def segments(self, window: int, stride: int) -> list[Segment]:
        out: list[Segment] = []
        for doc in self.documents:
            out.extend(doc.segments(window, stride))
        return out

    def sentence_segments(self) -> list[Segment]:
        """Sentences expressed as positioned token spans, like segments."""
        out = []
        for doc in self.documents:
            for pos, span in enumerate(doc.sentence_spans, start=1):
                out.append(Segment(doc_id=doc.id, position=pos, span=span))
        return out

    def part_count(self, granularity: str, window: int = 128,
                   stride: int = 42) -> int:
        if granularity == "segment":
            return len(self.segments(window, stride))
        if granularity == "sentence":
            return len(self.sentence_segments())
        raise ValueError(f"unknown granularity {granularity!r}")

    def slowdown_factor(self, granularity: str, window: int = 128,
                        stride: int = 42) -> float:
        """Parts-to-documents ratio: the cost multiplier that localized
        relevance matching pays over whole-document ranking."""
        return self.part_count(granularity, window, stride) / len(self.documents)


def read_collection(path: str) -> Collection:
    """Parse a ``<doc_id>\\t<text>`` file into a Collection."""
    docs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}: line {lineno}: expected <id>\\t<text>")
            doc_id, text = line.split("\t", 1)
            docs.append(Document.from_text(doc_id, text))
    return Collection(docs)


def read_queries(path: str) -> list[tuple[str, list[str]]]:
    """Parse a ``<query_id>\\t<text>`` file into (id, tokens) pairs."""
    queries = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}: line {lineno}: expected <id>\\t<text>")
            query_id, text = line.split("\t", 1)
            queries.append((query_id, tokenize(text)))
    return queries
