"""Top-K ranking evaluation: DCG, NDCG, MRR, MAP with training exclusion.

Relevance is binary, gains are ``2^r - 1`` (= r), and the rank discount
is ``1 / log(1 + rank)`` in a configurable base (default 2).  Ties in
scores break by ascending object id so evaluation is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rgrank.errors import DimensionMismatchError, EmptyCandidateError


@dataclass(frozen=True)
class RankingResult:
    """Corpus means plus per-context values for one evaluation pass."""

    k: int
    ndcg: float
    mrr: float
    map: float
    dcg: float
    evaluated_contexts: int
    skipped_contexts: int
    context_ids: np.ndarray
    per_context_ndcg: np.ndarray
    per_context_mrr: np.ndarray
    per_context_map: np.ndarray
    per_context_dcg: np.ndarray

    def as_record(self):
        return (f"k={self.k} ndcg={self.ndcg:.10g} mrr={self.mrr:.10g} "
                f"map={self.map:.10g} dcg={self.dcg:.10g} "
                f"contexts={self.evaluated_contexts} skipped={self.skipped_contexts}")


def rank_items(scores, exclude=()):
    """Non-excluded object ids in descending score order (ties: ascending id)."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.ones(scores.shape[0], dtype=bool)
    exclude = np.asarray(list(exclude) if not isinstance(exclude, np.ndarray) else exclude,
                         dtype=np.int64)
    if exclude.size:
        if exclude.min() < 0 or exclude.max() >= scores.shape[0]:
            raise ValueError("excluded id out of range")
        mask[exclude] = False
    candidates = np.nonzero(mask)[0]
    if candidates.size == 0:
        raise EmptyCandidateError("all objects excluded from ranking")
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order]


def _discounts(k, base):
    ranks = np.arange(1, k + 1)
    return math.log(base) / np.log1p(ranks)


def _relevance_prefix(ranking, relevant, k):
    relevant = set(int(r) for r in relevant)
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    head = ranking[:k]
    return np.array([1.0 if int(i) in relevant else 0.0 for i in head]), len(relevant)


def dcg_at_k(ranking, relevant, k, base=2.0):
    rel, _ = _relevance_prefix(ranking, relevant, k)
    return float(rel @ _discounts(rel.size, base))


def ndcg_at_k(ranking, relevant, k, base=2.0):
    rel, n_rel = _relevance_prefix(ranking, relevant, k)
    ideal = _discounts(min(n_rel, k), base).sum()
    return float(rel @ _discounts(rel.size, base) / ideal)


def mrr_at_k(ranking, relevant, k):
    rel, _ = _relevance_prefix(ranking, relevant, k)
    hits = np.nonzero(rel)[0]
    return float(1.0 / (hits[0] + 1)) if hits.size else 0.0


def map_at_k(ranking, relevant, k, strict=False):
    """Average precision at K.

    The normalizer is min(|relevant|, K); with ``strict=True`` it is
    |relevant| regardless of the cutoff.
    """
    rel, n_rel = _relevance_prefix(ranking, relevant, k)
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, rel.size + 1)
    norm = n_rel if strict else min(n_rel, k)
    return float((precision * rel).sum() / norm)


def evaluate(model, heldout, train, k=10, base=2.0, strict_map=False):
    """Score every context with held-out positives, excluding training items.

    Contexts without held-out positives are skipped and counted, not
    averaged as zero.  Corpus means are arithmetic over evaluated
    contexts.
    """
    if model.n_contexts != train.n_contexts or model.n_objects != train.n_objects:
        raise DimensionMismatchError("model and training matrix disagree")
    if heldout.n_contexts != train.n_contexts or heldout.n_objects != train.n_objects:
        raise DimensionMismatchError("held-out set and training matrix disagree")

    order = np.argsort(heldout.contexts, kind="stable")
    counts = np.bincount(heldout.contexts, minlength=train.n_contexts)
    starts = np.concatenate([[0], np.cumsum(counts)])
    eval_ctx = np.nonzero(counts)[0]
    skipped = int(train.n_contexts - eval_ctx.size)

    vals = {m: np.empty(eval_ctx.size) for m in ("ndcg", "mrr", "map", "dcg")}
    for i, x in enumerate(eval_ctx):
        relevant = heldout.objects[order[starts[x]:starts[x + 1]]]
        scores = model.p[x] @ model.q.T
        ranking = rank_items(scores, exclude=train.row(x))
        vals["ndcg"][i] = ndcg_at_k(ranking, relevant, k, base)
        vals["mrr"][i] = mrr_at_k(ranking, relevant, k)
        vals["map"][i] = map_at_k(ranking, relevant, k, strict=strict_map)
        vals["dcg"][i] = dcg_at_k(ranking, relevant, k, base)

    def mean(a):
        return float(a.mean()) if a.size else 0.0

    return RankingResult(
        k=k, ndcg=mean(vals["ndcg"]), mrr=mean(vals["mrr"]),
        map=mean(vals["map"]), dcg=mean(vals["dcg"]),
        evaluated_contexts=int(eval_ctx.size), skipped_contexts=skipped,
        context_ids=eval_ctx,
        per_context_ndcg=vals["ndcg"], per_context_mrr=vals["mrr"],
        per_context_map=vals["map"], per_context_dcg=vals["dcg"],
    )
