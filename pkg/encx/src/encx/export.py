"""Extract contextual vectors from pretrained encoders.

Three export paths share one loaded checkpoint:

* ``export_iso``: each vocabulary term encoded alone, subword states
  mean-pooled at a chosen layer.
* ``export_aoc``: each term averaged over up to tau sentence contexts,
  using the subwords of the term's first occurrence per sentence.
* ``export_text_parts``: document passages; plain masked-LM encoders
  yield one state per term (first subword) plus the boundary-token
  states, sentence encoders yield their native pooled vector.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .container import atomic_write_text, write_container
from .jobs import FAMILIES, ExportJob

KEY_SEP = "\x01"
BATCH_SIZE = 32


class Encoder:
    """A checkpoint plus its tokenizer, fixed in inference mode."""

    def __init__(self, model_id: str):
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id)
        self.model.eval()

    @property
    def depth(self) -> int:
        return int(self.model.config.num_hidden_layers)

    @property
    def hidden_size(self) -> int:
        return int(self.model.config.hidden_size)

    def resolve_layer(self, layer: int | None) -> int:
        if layer is None:
            return self.depth
        if not 0 <= layer <= self.depth:
            raise ValueError(f"layer {layer} outside checkpoint depth "
                             f"0..{self.depth}")
        return layer

    def subword_budget(self, max_seq_len: int) -> int:
        return max_seq_len - self.tokenizer.num_special_tokens_to_add()

    @torch.no_grad()
    def encode_words(self, batches: list[list[str]], layer: int,
                     max_seq_len: int):
        """Encode pre-split word sequences.

        Returns, per sequence, (states [T, hidden], word_ids) where
        word_ids[t] is the word index that produced subword t, or None
        for the boundary tokens; padding positions are dropped.
        """
        results = []
        for start in range(0, len(batches), BATCH_SIZE):
            chunk = batches[start:start + BATCH_SIZE]
            enc = self.tokenizer(chunk, is_split_into_words=True,
                                 truncation=True, max_length=max_seq_len,
                                 padding=True, return_tensors="pt")
            out = self.model(**enc, output_hidden_states=True)
            states = out.hidden_states[layer]
            for i in range(len(chunk)):
                length = int(enc["attention_mask"][i].sum())
                results.append((states[i, :length].numpy(),
                                enc.word_ids(i)[:length]))
        return results

    @torch.no_grad()
    def encode_pooled(self, texts: list[str], max_seq_len: int) -> np.ndarray:
        """Native sentence vectors: the pooler output where the
        checkpoint has one, otherwise the mask-weighted mean of the
        final hidden states."""
        rows = []
        for start in range(0, len(texts), BATCH_SIZE):
            chunk = texts[start:start + BATCH_SIZE]
            enc = self.tokenizer(chunk, truncation=True,
                                 max_length=max_seq_len, padding=True,
                                 return_tensors="pt")
            out = self.model(**enc)
            pooled = getattr(out, "pooler_output", None)
            if pooled is None:
                mask = enc["attention_mask"].unsqueeze(-1)
                summed = (out.last_hidden_state * mask).sum(dim=1)
                pooled = summed / mask.sum(dim=1)
            rows.append(pooled.numpy())
        return np.concatenate(rows, axis=0)


def read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as handle:
        return [line.rstrip("\n") for line in handle]


def read_vocabulary(path: str) -> list[str]:
    terms = []
    seen = set()
    for line in read_lines(path):
        term = line.strip()
        if not term:
            continue
        if term in seen:
            warnings.warn(f"duplicate vocabulary term {term!r} ignored")
            continue
        seen.add(term)
        terms.append(term)
    if not terms:
        raise ValueError(f"{path}: no terms")
    return terms


@dataclass
class IsoResult:
    written: int
    skipped: list[str] = field(default_factory=list)


def export_iso(job: ExportJob, encoder: Encoder | None = None) -> IsoResult:
    """One vector per vocabulary term, the term encoded in isolation."""
    job.validate()
    encoder = encoder or Encoder(job.model_id)
    layer = encoder.resolve_layer(job.layer)
    terms = read_vocabulary(job.vocabulary)

    budget = encoder.subword_budget(job.max_seq_len)
    kept, skipped = [], []
    for term in terms:
        pieces = encoder.tokenizer(term, add_special_tokens=False)["input_ids"]
        if len(pieces) > budget:
            warnings.warn(f"skipping {term!r}: {len(pieces)} subwords "
                          f"exceed the limit of {budget}")
            skipped.append(term)
        else:
            kept.append(term)

    entries = []
    encoded = encoder.encode_words([[t] for t in kept], layer,
                                   job.max_seq_len)
    for term, (states, word_ids) in zip(kept, encoded):
        rows = [states[i] for i, w in enumerate(word_ids) if w is not None]
        entries.append((term, np.mean(rows, axis=0, dtype=np.float64)))
    write_container(job.output, entries)
    return IsoResult(written=len(entries), skipped=skipped)


@dataclass
class AocResult:
    written: int
    contexts_used: dict[str, int]
    fallback: list[str]


def export_aoc(job: ExportJob, encoder: Encoder | None = None) -> AocResult:
    """One vector per term, averaged over at most tau sentence contexts.

    Contexts are taken in corpus order; within a sentence the term's
    first occurrence contributes the mean of its subword states. Terms
    with no usable context go to ``<output>.fallback`` (one per line)
    instead of the container.
    """
    job.validate()
    encoder = encoder or Encoder(job.model_id)
    layer = encoder.resolve_layer(job.layer)
    terms = read_vocabulary(job.vocabulary)
    sentences = [line.split() for line in read_lines(job.corpus)
                 if line.strip()]
    if not sentences:
        raise ValueError(f"{job.corpus}: empty corpus")

    candidates = {
        term: [(idx, words.index(term))
               for idx, words in enumerate(sentences) if term in words]
        for term in terms}

    # encode the optimistic first-tau candidate sentences in batches;
    # stragglers (contexts lost to truncation) are encoded on demand
    wanted: list[int] = []
    seen: set[int] = set()
    for term in terms:
        for idx, _ in candidates[term][:job.tau]:
            if idx not in seen:
                seen.add(idx)
                wanted.append(idx)
    cache = dict(zip(wanted, encoder.encode_words(
        [sentences[i] for i in wanted], layer, job.max_seq_len)))

    def context_vector(idx: int, word: int):
        if idx not in cache:
            cache[idx] = encoder.encode_words([sentences[idx]], layer,
                                              job.max_seq_len)[0]
        states, word_ids = cache[idx]
        rows = [states[i] for i, w in enumerate(word_ids) if w == word]
        if not rows:
            return None  # occurrence truncated away
        return np.mean(rows, axis=0, dtype=np.float64)

    entries = []
    contexts_used: dict[str, int] = {}
    fallback: list[str] = []
    for term in terms:
        vectors = []
        for idx, word in candidates[term]:
            if len(vectors) == job.tau:
                break
            vec = context_vector(idx, word)
            if vec is not None:
                vectors.append(vec)
        contexts_used[term] = len(vectors)
        if vectors:
            entries.append((term, np.mean(vectors, axis=0)))
        else:
            fallback.append(term)

    write_container(job.output, entries)
    atomic_write_text(job.output + ".fallback",
                      "".join(term + "\n" for term in fallback))
    return AocResult(written=len(entries), contexts_used=contexts_used,
                     fallback=fallback)


def read_parts_file(path: str) -> list[tuple[str, int, str]]:
    parts = []
    seen = set()
    for number, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not fields[0]:
            raise ValueError(f"{path}: line {number}: expected "
                             "<doc_id>\\t<position>\\t<text>")
        try:
            position = int(fields[1])
        except ValueError:
            raise ValueError(f"{path}: line {number}: expected "
                             "<doc_id>\\t<position>\\t<text>") from None
        if position < 1:
            raise ValueError(f"{path}: line {number}: position must be "
                             "positive")
        if (fields[0], position) in seen:
            raise ValueError(f"{path}: line {number}: duplicate part "
                             f"{fields[0]}:{position}")
        seen.add((fields[0], position))
        parts.append((fields[0], position, fields[2]))
    if not parts:
        raise ValueError(f"{path}: no parts")
    return parts


@dataclass
class PartsResult:
    parts: int
    records: int


def export_text_parts(job: ExportJob,
                      encoder: Encoder | None = None) -> PartsResult:
    """Encode document passages from a ``<doc>\\t<position>\\t<text>``
    file.

    Masked-LM checkpoints emit one record per surviving term (its first
    subword's state) keyed ``doc\\x01position\\x01<term_index>`` plus
    the boundary states keyed ``...\\x01start`` and ``...\\x01end``, so
    the consumer can apply its own term weighting. Sentence checkpoints
    emit a single pooled record keyed ``doc\\x01position``.
    """
    job.validate()
    if job.family not in FAMILIES:
        raise ValueError(f"unknown checkpoint family {job.family!r}; "
                         f"supported: {', '.join(FAMILIES)}")
    encoder = encoder or Encoder(job.model_id)
    layer = encoder.resolve_layer(job.layer)
    parts = read_parts_file(job.parts)

    entries: list[tuple[str, np.ndarray]] = []
    if job.family == "sentence":
        pooled = encoder.encode_pooled([text for _, _, text in parts],
                                       job.max_seq_len)
        for (doc_id, position, _), row in zip(parts, pooled):
            entries.append((f"{doc_id}{KEY_SEP}{position}", row))
    else:
        encoded = encoder.encode_words([text.split() for _, _, text in parts],
                                       layer, job.max_seq_len)
        for (doc_id, position, _), (states, word_ids) in zip(parts, encoded):
            prefix = f"{doc_id}{KEY_SEP}{position}{KEY_SEP}"
            first_subword: dict[int, int] = {}
            boundaries = []
            for index, word in enumerate(word_ids):
                if word is None:
                    boundaries.append(index)
                elif word not in first_subword:
                    first_subword[word] = index
            for word in sorted(first_subword):
                entries.append((f"{prefix}{word + 1}",
                                states[first_subword[word]]))
            entries.append((f"{prefix}start", states[boundaries[0]]))
            entries.append((f"{prefix}end", states[boundaries[-1]]))
    write_container(job.output, entries)
    return PartsResult(parts=len(parts), records=len(entries))
