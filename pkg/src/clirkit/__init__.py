"""Cross-lingual retrieval workbench.

Core building blocks:

- :mod:`clirkit.corpus` -- tokenization, sentence splitting, sliding-window
  segmentation, document-frequency statistics.
- :mod:`clirkit.embeddings` -- term/text embedding stores, subword pooling,
  context averaging, IDF-weighted sequence embeddings, container I/O.
- :mod:`clirkit.projection` -- orthogonal alignment of two monolingual
  embedding spaces (closed-form solve and the iterative bootstrap with
  mutual-nearest-neighbour dictionary augmentation).
- :mod:`clirkit.retrieval` -- cosine ranking, localized relevance matching
  over segments/sentences, score-merge re-ranking, query-likelihood scoring.
- :mod:`clirkit.evaluation` -- qrels parsing, (mean) average precision,
  paired t-tests with Bonferroni correction, position histograms.
- :mod:`clirkit.finetune` -- contrastive adapter training with in-batch
  negatives, k-fold splitting, distillation loss.
"""

__version__ = "0.1.0"
