"""Synthetic interaction data for tests, verification, and benchmarks."""

import numpy as np

from rgrank.data import InteractionSet


def lowrank_interactions(n_contexts, n_objects, true_dim, per_context, seed=0):
    """Positives are each context's top-scoring objects under a random
    low-rank score matrix, so a matching-rank model can fit them."""
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((n_contexts, true_dim))
    q = rng.standard_normal((n_objects, true_dim))
    scores = p @ q.T
    top = np.argsort(-scores, axis=1, kind="stable")[:, :per_context]
    ctx = np.repeat(np.arange(n_contexts), per_context)
    return InteractionSet.from_entries(
        np.column_stack([ctx, top.ravel()]),
        n_contexts=n_contexts, n_objects=n_objects)


def uniform_interactions(n_contexts, n_objects, degree, seed=0):
    """Each context interacts with ``degree`` distinct uniform objects."""
    rng = np.random.default_rng(seed)
    rows = [rng.choice(n_objects, size=degree, replace=False)
            for _ in range(n_contexts)]
    ctx = np.repeat(np.arange(n_contexts), degree)
    return InteractionSet.from_entries(
        np.column_stack([ctx, np.concatenate(rows)]),
        n_contexts=n_contexts, n_objects=n_objects)


def random_interactions(n_contexts, n_objects, density, seed=0, min_degree=1):
    """Bernoulli interactions at the given density, with every context
    topped up to ``min_degree`` positives."""
    rng = np.random.default_rng(seed)
    mask = rng.random((n_contexts, n_objects)) < density
    for x in range(n_contexts):
        while mask[x].sum() < min_degree:
            mask[x, rng.integers(n_objects)] = True
    ctx, obj = np.nonzero(mask)
    return InteractionSet.from_entries(
        np.column_stack([ctx, obj]),
        n_contexts=n_contexts, n_objects=n_objects)
