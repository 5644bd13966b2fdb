# Long documents rarely match a query everywhere. Scoring overlapping
# segments and pooling the best few rewards documents with one strongly
# relevant passage over documents that are mildly on-topic throughout.

import numpy as np

from clirkit.corpus import segment
from clirkit.retrieval import rank_localized

rng = np.random.default_rng(4)
dim = 8
query = rng.normal(size=dim)


def part_with_cosine(target):
    # unit vector at a chosen cosine to the query, random otherwise
    u = query / np.linalg.norm(query)
    noise = rng.normal(size=dim)
    noise -= noise @ u * u
    noise /= np.linalg.norm(noise)
    return target * u + np.sqrt(1.0 - target * target) * noise


# Document A: one excellent passage, the rest irrelevant.
# Document B: uniformly mediocre passages.
parts = {
    "focused": [part_with_cosine(c) for c in (0.95, 0.05, 0.02, 0.08)],
    "diffuse": [part_with_cosine(c) for c in (0.55, 0.52, 0.54, 0.50)],
}

for k in (1, 2, 4):
    ranking = rank_localized(query, parts, k)
    order = " > ".join(doc for doc, _, _ in ranking)
    scores = ", ".join(f"{doc}={score:.3f}" for doc, score, _ in ranking)
    print(f"k={k}: {order}   ({scores})")

# Max pooling (k=1) prefers the focused document; averaging everything
# (k=4) flips the order because the diffuse document never scores badly.

# The segmenter that produces those parts from raw tokens:
tokens = [f"tok{i}" for i in range(300)]
for seg in segment(tokens, window=128, stride=42, doc_id="focused"):
    print(f"segment {seg.position}: tokens [{seg.span[0]}, {seg.span[1]})")
