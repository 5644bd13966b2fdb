"""Train a linear adapter on query-document pairs with in-batch negatives."""

import numpy as np

from clirkit.finetune import mnrl_batch_loss, train_adapter

rng = np.random.default_rng(9)
n, dim = 96, 8

# Paired data where queries and documents agree in a rotated subspace:
# dims 0 and 1 carry the signal but the document side has them swapped
# and negated, so the identity map scores positives poorly.
rotation = np.eye(dim)
rotation[0, 0] = rotation[1, 1] = 0.0
rotation[0, 1], rotation[1, 0] = -1.0, 1.0
queries = rng.normal(size=(n, dim))
docs = queries @ rotation.T


def mean_positive_cosine(adapter):
    u = queries @ adapter.T
    v = docs @ adapter.T
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return float(np.mean(np.sum(u * v, axis=1)))


identity = np.eye(dim)
print(f"before: loss={mnrl_batch_loss(queries, docs, scale=10.0):.4f}  "
      f"mean positive cosine={mean_positive_cosine(identity):.4f}")

adapter, history = train_adapter(queries, docs, scale=10.0,
                                 learning_rate=0.1, epochs=40,
                                 batch_size=16, seed=0)

print(f"after:  loss={history[-1]:.4f}  "
      f"mean positive cosine={mean_positive_cosine(adapter):.4f}")

# epoch-mean loss every tenth epoch
for epoch in range(0, len(history), 10):
    print(f"  epoch {epoch:2d}  loss {history[epoch]:.4f}")
