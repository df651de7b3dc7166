"""Ranking surrogate losses and their analytic gradients.

Per-context losses operate on a score row ``o`` of length N together
with the row's positive object ids.  The two squared-form surrogates
come in a canonical scale (the exact second-order expansion of the
softmax loss around the zero score vector, up to an additive constant)
and an "absorbed" scale where the ``|I_x| / 2N`` coefficient is folded
into the weights; :func:`rg_squared_form` exposes both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from rgrank.errors import InvalidProposalError, InvalidScoreError


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: np.ndarray | None = None


def _check_finite(o):
    o = np.asarray(o, dtype=np.float64)
    if not np.isfinite(o).all():
        raise InvalidScoreError("scores must be finite")
    return o


def _logsumexp(o):
    m = o.max()
    return m + np.log(np.exp(o - m).sum())


def softmax_probs(o):
    """Max-shifted softmax; entries sum to 1."""
    o = _check_finite(o)
    e = np.exp(o - o.max())
    return e / e.sum()


def sm_loss(o, y, with_gradient=False):
    """Softmax cross-entropy of the positive ``y`` against all objects."""
    o = _check_finite(o)
    value = _logsumexp(o) - o[y]
    grad = None
    if with_gradient:
        grad = softmax_probs(o)
        grad[y] -= 1.0
    return LossValue(float(value), grad)


def sm_context_loss(o, positives, with_gradient=False):
    """Sum of softmax losses over a context's positive set."""
    o = _check_finite(o)
    positives = np.asarray(positives, dtype=np.int64)
    d = positives.size
    value = d * _logsumexp(o) - o[positives].sum()
    grad = None
    if with_gradient:
        grad = d * softmax_probs(o)
        np.subtract.at(grad, positives, 1.0)
    return LossValue(float(value), grad)


@dataclass(frozen=True)
class SampledBatch:
    """One positive plus ``n`` negatives sampled with replacement.

    ``proposal`` is the full length-N sampling distribution; with a
    uniform proposal the logit correction vanishes.
    """

    positive_id: int
    negative_ids: np.ndarray
    proposal: np.ndarray
    n_objects: int

    def __post_init__(self):
        object.__setattr__(self, "negative_ids",
                           np.asarray(self.negative_ids, dtype=np.int64))
        object.__setattr__(self, "proposal",
                           np.asarray(self.proposal, dtype=np.float64))
        if self.negative_ids.size < 1:
            raise ValueError("need at least one sampled negative")
        if self.proposal.shape != (self.n_objects,):
            raise ValueError("proposal must cover the full object set")
        if abs(self.proposal.sum() - 1.0) > 1e-9 or (self.proposal < 0).any():
            raise ValueError("proposal must be a probability distribution")


def ssm_loss(batch, o_values, with_gradient=False):
    """Sampled softmax with the log(N q) logit correction on negatives.

    ``o_values`` holds the scores at ``[positive] + negatives`` in batch
    order; the gradient is aligned with it.
    """
    o = _check_finite(o_values)
    n = batch.negative_ids.size
    if o.shape != (n + 1,):
        raise ValueError("o_values must align with [positive] + negatives")
    q = batch.proposal[batch.negative_ids]
    if (q <= 0).any():
        raise InvalidProposalError("sampled object has zero proposal probability")
    corrected = o.copy()
    corrected[1:] -= np.log(batch.n_objects * q)
    value = _logsumexp(corrected) - corrected[0]
    grad = None
    if with_gradient:
        grad = softmax_probs(corrected)
        grad[0] -= 1.0
    return LossValue(float(value), grad)


def wsl_loss(matrix, scores, alpha, with_gradient=False):
    """Weighted squared loss over all pairs of a dense score matrix.

    Weights are ``alpha + 1`` on observed pairs and 1 elsewhere; targets
    are the binary observations.  Reference evaluator, O(M N).
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (matrix.n_contexts, matrix.n_objects):
        raise ValueError("scores must be dense M x N")
    r = np.zeros_like(scores)
    r[matrix.entry_contexts(), matrix.indices] = 1.0
    w = 1.0 + alpha * r
    diff = scores - r
    value = float((w * diff**2).sum())
    grad = 2.0 * w * diff if with_gradient else None
    return LossValue(value, grad)


def _positives_checked(o, positives):
    positives = np.asarray(positives, dtype=np.int64)
    if positives.size == 0:
        raise ValueError("positive set must be non-empty")
    if positives.min() < 0 or positives.max() >= o.shape[0]:
        raise ValueError("positive id out of range")
    return positives


def rg2_context_loss(o, positives, with_gradient=False):
    """Canonical squared surrogate: -sum(o over positives)
    + (|I_x| / 2N) * ||o + 1||^2."""
    o = np.asarray(o, dtype=np.float64)
    positives = _positives_checked(o, positives)
    n = o.shape[0]
    d = positives.size
    shifted = o + 1.0
    value = -o[positives].sum() + (d / (2.0 * n)) * (shifted @ shifted)
    grad = None
    if with_gradient:
        grad = (d / n) * shifted
        np.subtract.at(grad, positives, 1.0)
    return LossValue(float(value), grad)


def rgx_context_loss(o, positives, with_gradient=False):
    """Canonical squared surrogate including the cross-score interaction
    term -(|I_x| / 2N^2) (1'o)^2; the exact second-order expansion of
    the per-context softmax loss up to |I_x| (log N - 1/2)."""
    o = np.asarray(o, dtype=np.float64)
    positives = _positives_checked(o, positives)
    n = o.shape[0]
    d = positives.size
    base = rg2_context_loss(o, positives, with_gradient)
    total = o.sum()
    value = base.value - (d / (2.0 * n**2)) * total**2
    grad = None
    if with_gradient:
        grad = base.gradient - (d / n**2) * total
    return LossValue(float(value), grad)


def rg_squared_form(o, positives, kind="rg2", absorb=False):
    """Squared-form rearrangement around the row target
    ``eta_y = r_y N/|I_x| - 1``.

    The unabsorbed scale differs from the canonical loss only by the
    constant ``|I_x| - N/2`` per context; ``absorb=True`` rescales by
    2N (folding the 1/2N coefficient into the weights).
    """
    o = np.asarray(o, dtype=np.float64)
    positives = _positives_checked(o, positives)
    n = o.shape[0]
    d = positives.size
    eta = np.full(n, -1.0)
    eta[positives] = n / d - 1.0
    diff = o - eta
    value = (d / (2.0 * n)) * (diff @ diff)
    if kind == "rgx":
        value -= (d / (2.0 * n**2)) * o.sum() ** 2
    elif kind != "rg2":
        raise ValueError(f"kind must be 'rg2' or 'rgx', got {kind!r}")
    return float(2.0 * n * value) if absorb else float(value)


def bpr_loss(pos_score, neg_score, with_gradient=False):
    """Pairwise logistic loss -log sigmoid(pos - neg)."""
    diff = float(pos_score) - float(neg_score)
    value = float(np.logaddexp(0.0, -diff))
    grad = None
    if with_gradient:
        s = expit(-diff)
        grad = np.array([-s, s])
    return LossValue(value, grad)


def bce_loss(score, label, with_gradient=False):
    """Binary cross-entropy on a single score."""
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    score = float(score)
    value = float(np.logaddexp(0.0, score) - label * score)
    grad = None
    if with_gradient:
        grad = np.array([expit(score) - label])
    return LossValue(value, grad)


# ---------------------------------------------------------------------------
# Dataset-level squared objective


@dataclass(frozen=True)
class DatasetLoss:
    """Decomposed squared objective over a whole factor model.

    Two regularization conventions are reported: ``value`` uses the
    plain lambda * (||P||_F^2 + ||Q||_F^2) term, ``value_weighted``
    scales each row's ridge by its total confidence weight (the
    convention the alternating row updates minimize).
    """

    data: float
    interaction: float
    reg_plain: float
    reg_weighted: float
    lam: float
    kind: str

    @property
    def value(self):
        return self.data - self.interaction + self.lam * self.reg_plain

    @property
    def value_weighted(self):
        return self.data - self.interaction + self.lam * self.reg_weighted


def object_weight_sums(matrix, targets):
    """Per-object total weight: sum_x W[x, y]."""
    base = targets.w_neg.sum()
    delta = targets.w_pos - targets.w_neg
    extra = np.bincount(matrix.indices,
                        weights=delta[matrix.entry_contexts()],
                        minlength=matrix.n_objects)
    return base + extra


def rg_dataset_loss(matrix, model, targets, lam, kind="rg2",
                    interaction_form="rank-one"):
    """Weighted squared objective over all pairs, computed sparsely.

    Cost is O(|D| K + (M + N) K^2) via the Gram matrix and the implicit
    (constant + sparse correction) structure of the targets; the dense
    M x N score matrix is never formed.
    """
    if kind not in ("rg2", "rgx"):
        raise ValueError(f"kind must be 'rg2' or 'rgx', got {kind!r}")
    if interaction_form not in ("rank-one", "gram"):
        raise ValueError(f"unknown interaction form {interaction_form!r}")
    if (model.n_contexts != matrix.n_contexts
            or model.n_objects != matrix.n_objects
            or targets.n_contexts != matrix.n_contexts):
        from rgrank.errors import DimensionMismatchError

        raise DimensionMismatchError("matrix, model, and targets disagree")

    p, q = model.p, model.q
    gram = q.T @ q
    qbar = q.sum(axis=0)
    n = matrix.n_objects

    row_sum = p @ qbar                      # sum_y o_y per context
    row_sq = np.einsum("mk,kl,ml->m", p, gram, p)  # sum_y o_y^2 per context

    w_pos, w_neg = targets.w_pos, targets.w_neg
    s_pos, s_neg = targets.s_pos, targets.s_neg
    neg_part = w_neg * (n * s_neg**2 - 2.0 * s_neg * row_sum + row_sq)

    ctx = matrix.entry_contexts()
    o_e = np.einsum("ek,ek->e", p[ctx], q[matrix.indices])
    corr = (w_pos[ctx] * (s_pos[ctx] - o_e) ** 2
            - w_neg[ctx] * (s_neg[ctx] - o_e) ** 2)
    data = float(neg_part.sum() + corr.sum())

    interaction = 0.0
    if kind == "rgx":
        quad = row_sum**2 if interaction_form == "rank-one" else row_sq
        interaction = float((targets.v * quad).sum())

    reg_plain = float((p**2).sum() + (q**2).sum())
    row_w = targets.row_weight_sums(matrix.degrees)
    col_w = object_weight_sums(matrix, targets)
    reg_weighted = float((row_w * (p**2).sum(axis=1)).sum()
                         + (col_w * (q**2).sum(axis=1)).sum())
    return DatasetLoss(data, interaction, reg_plain, reg_weighted, float(lam), kind)
