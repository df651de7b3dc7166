"""Stochastic gradient training for the softmax-family and pairwise losses.

Serves as the convergence-speed baseline against the alternating solver.
One epoch is a seeded shuffled pass over the positive pairs; each batch
computes exact gradients of its loss terms and applies them only to the
touched factor rows (the full softmax honestly touches every object row,
which is precisely the cost the squared surrogates avoid).  Weight decay
is decoupled L2 shrinkage on touched rows.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from rgrank.errors import DivergedError
from rgrank.model import EpochLog, FactorModel

_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass
class SgdConfig:
    loss: str = "sm"                 # sm | ssm | bpr | bce
    dim: int = 8
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    batch_size: int = 256
    n_negatives: int = 10
    epochs: int = 10
    seed: int = 0
    update_rule: str = "plain"       # plain | adaptive-moment
    init: str = "uniform"
    init_scale: float = 0.01

    def __post_init__(self):
        if self.loss not in ("sm", "ssm", "bpr", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss != "sm" and self.n_negatives < 1:
            raise ValueError("sampled losses need n_negatives >= 1")
        if self.update_rule not in ("plain", "adaptive-moment"):
            raise ValueError(f"unknown update rule {self.update_rule!r}")


def sample_negatives(rng, n, n_objects):
    """Uniform negatives with replacement over the full object range.

    Collisions with training positives are permitted, keeping the
    proposal exactly uniform (q = 1/N) so the sampled-softmax logit
    correction stays zero.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.integers(0, n_objects, size=n, dtype=np.int64)


class _Adam:
    """Lazy per-row adaptive-moment state for one factor matrix."""

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    def step(self, rows, grad, lr, t):
        m = self.m[rows] = _ADAM_B1 * self.m[rows] + (1 - _ADAM_B1) * grad
        v = self.v[rows] = _ADAM_B2 * self.v[rows] + (1 - _ADAM_B2) * grad**2
        mhat = m / (1 - _ADAM_B1**t)
        vhat = v / (1 - _ADAM_B2**t)
        return lr * mhat / (np.sqrt(vhat) + _ADAM_EPS)


class _Trainer:
    def __init__(self, matrix, cfg):
        self.cfg = cfg
        self.model = FactorModel.init(matrix.n_contexts, matrix.n_objects,
                                      cfg.dim, cfg.init, cfg.init_scale, cfg.seed)
        self.adam_p = self.adam_q = None
        if cfg.update_rule == "adaptive-moment":
            self.adam_p = _Adam(self.model.p.shape)
            self.adam_q = _Adam(self.model.q.shape)
        self.t = 0

    def apply(self, which, rows, grad):
        cfg = self.cfg
        mat = self.model.p if which == "p" else self.model.q
        adam = self.adam_p if which == "p" else self.adam_q
        if cfg.update_rule == "plain":
            mat[rows] -= cfg.learning_rate * grad
        else:
            mat[rows] -= adam.step(rows, grad, cfg.learning_rate, self.t)
        if cfg.weight_decay > 0:
            mat[rows] *= 1.0 - cfg.learning_rate * cfg.weight_decay


def _scatter_rows(ids, grads):
    """Compact duplicate row ids; returns (unique_rows, summed grads)."""
    rows, inv = np.unique(ids, return_inverse=True)
    out = np.zeros((rows.size, grads.shape[1]))
    np.add.at(out, inv, grads)
    return rows, out


def _batch_sm(tr, bc, bo):
    p, q = tr.model.p, tr.model.q
    scores = p[bc] @ q.T
    shift = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - shift)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    b = bc.size
    losses = np.log(z[:, 0]) + shift[:, 0] - scores[np.arange(b), bo]
    g = probs
    g[np.arange(b), bo] -= 1.0
    g /= b
    dq = g.T @ p[bc]
    rows, dp = _scatter_rows(bc, g @ q)
    tr.t += 1
    tr.apply("p", rows, dp)
    tr.apply("q", slice(None), dq)
    return losses.sum(), b


def _batch_sampled(tr, bc, bo, negs, kind):
    p, q = tr.model.p, tr.model.q
    b, n = negs.shape
    ids = np.concatenate([bo[:, None], negs], axis=1)      # (b, n+1)
    po = p[bc]                                             # (b, k)
    qs = q[ids]                                            # (b, n+1, k)
    scores = np.einsum("bk,bjk->bj", po, qs)

    if kind == "ssm":
        # uniform proposal: corrected logits equal raw logits
        shift = scores.max(axis=1, keepdims=True)
        e = np.exp(scores - shift)
        z = e.sum(axis=1)
        losses = np.log(z) + shift[:, 0] - scores[:, 0]
        g = e / z[:, None]
        g[:, 0] -= 1.0
        terms = b
    elif kind == "bpr":
        diff = scores[:, :1] - scores[:, 1:]
        losses = np.logaddexp(0.0, -diff).sum(axis=1)
        s = expit(-diff)                                   # (b, n)
        g = np.concatenate([-s.sum(axis=1, keepdims=True), s], axis=1)
        terms = b * n
    elif kind == "bce":
        losses = (np.logaddexp(0.0, scores).sum(axis=1) - scores[:, 0])
        g = expit(scores)
        g[:, 0] -= 1.0
        terms = b * (1 + n)
    else:  # pragma: no cover
        raise ValueError(kind)
    g = g / terms

    dp = np.einsum("bj,bjk->bk", g, qs)
    rows_p, dp = _scatter_rows(bc, dp)
    dq = g[:, :, None] * po[:, None, :]
    rows_q, dq = _scatter_rows(ids.ravel(), dq.reshape(-1, po.shape[1]))
    tr.t += 1
    tr.apply("p", rows_p, dp)
    tr.apply("q", rows_q, dq)
    return losses.sum(), terms


def sgd_fit(matrix, cfg, callback=None):
    """Train a factor model by mini-batch gradient descent.

    Returns the model and one :class:`EpochLog` per epoch whose loss is
    the mean per-term training loss of that pass (evaluated before each
    batch's update, as usual).  ``callback(model, log) -> bool`` runs
    after each epoch outside the training timer; True stops early.
    """
    tr = _Trainer(matrix, cfg)
    rng = np.random.default_rng(cfg.seed)
    ctx = matrix.entry_contexts()
    obj = matrix.indices
    n_pairs = obj.size
    logs = []
    train_time = 0.0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n_pairs)
        loss_sum = 0.0
        term_count = 0
        for lo in range(0, n_pairs, cfg.batch_size):
            batch = perm[lo:lo + cfg.batch_size]
            bc, bo = ctx[batch], obj[batch]
            if cfg.loss == "sm":
                s, t = _batch_sm(tr, bc, bo)
            else:
                negs = sample_negatives(rng, bc.size * cfg.n_negatives,
                                        matrix.n_objects).reshape(bc.size, -1)
                s, t = _batch_sampled(tr, bc, bo, negs, cfg.loss)
            loss_sum += s
            term_count += t
        epoch_loss = loss_sum / max(term_count, 1)
        if not np.isfinite(epoch_loss):
            raise DivergedError(f"non-finite training loss at epoch {epoch}")
        train_time += time.perf_counter() - t0
        log = EpochLog(epoch=epoch, wall_clock_s=train_time, train_loss=epoch_loss)
        logs.append(log)
        if callback is not None and callback(tr.model, log):
            break
    return tr.model, logs
