"""Weighted alternating least squares for the squared ranking surrogates.

Each half-step solves one ridge system per row.  With the interaction
term enabled (kind 'rgx') two treatments of the cross-score quadratic
are supported:

* ``interaction_form='rank-one'`` (default): the expansion-faithful
  quadratic ``(1'o)^2``.  Context rows stay independent (the correction
  is ``V_x * outer(qbar, qbar)``); object rows become coupled through
  the score column sums, so that half runs as a sequential exact
  coordinate sweep with an O(K^2) running correction per row.
* ``interaction_form='gram'``: the quadratic ``||o||^2``, which keeps
  both halves fully row-separable (correction ``V_x * Q'Q`` resp.
  ``P' diag(V) P``).

Row systems are solved through Cholesky with a pivot floor; a pivot
below ``pd_floor`` certifies the smallest eigenvalue is below the floor
and aborts the half-step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from rgrank import _kernels as kernels
from rgrank.errors import NonPositiveDefiniteError
from rgrank.losses import object_weight_sums, rg_dataset_loss
from rgrank.model import EpochLog, FactorModel


@dataclass
class AlsConfig:
    dim: int = 8
    lam: float = 0.1
    kind: str = "rg2"                    # rg2 | rgx
    interaction_form: str = "rank-one"   # rank-one | gram
    max_iters: int = 50
    tolerance: float = 1e-4
    init: str = "uniform"                # uniform | gaussian
    init_scale: float = 0.01
    seed: int = 0
    pd_floor: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("rg2", "rgx"):
            raise ValueError(f"kind must be 'rg2' or 'rgx', got {self.kind!r}")
        if self.interaction_form not in ("rank-one", "gram"):
            raise ValueError(f"unknown interaction form {self.interaction_form!r}")
        if self.tolerance <= 0 or self.pd_floor <= 0:
            raise ValueError("tolerance and pd_floor must be positive")


@dataclass(frozen=True)
class HalfStepStats:
    rows_updated: int
    seconds: float


def gram_precompute(q):
    """Gram matrix Q'Q and column-sum projection Q'1."""
    q = np.asarray(q, dtype=np.float64)
    return q.T @ q, q.sum(axis=0)


def _weight_deltas(targets):
    """Per-context entry corrections: positives add (w_pos - w_neg) to the
    quadratic term and (w_pos s_pos - w_neg s_neg) to the linear term."""
    delta_a = targets.w_pos - targets.w_neg
    delta_b = targets.w_pos * targets.s_pos - targets.w_neg * targets.s_neg
    return delta_a, delta_b


def _object_weight_sums_cached(matrix, targets):
    cached = getattr(targets, "_col_w", None)
    if cached is None or cached[0] is not matrix:
        value = object_weight_sums(matrix, targets)
        object.__setattr__(targets, "_col_w", (matrix, value))
        return value
    return cached[1]


def update_context_rows(model, matrix, targets, cfg):
    """Closed-form refresh of every context row of P (Q fixed)."""
    q = model.q
    gram, qbar = gram_precompute(q)
    delta_a, delta_b = _weight_deltas(targets)
    base_scale = targets.w_neg.astype(np.float64)
    rank1_coef = np.zeros(matrix.n_contexts)
    if cfg.kind == "rgx":
        if cfg.interaction_form == "gram":
            base_scale = base_scale - targets.v
        else:
            rank1_coef = targets.v.astype(np.float64)
    diag_add = cfg.lam * targets.row_weight_sums(matrix.degrees)
    vec_scale = targets.w_neg * targets.s_neg
    ones_f = np.ones(matrix.n_objects)
    t0 = time.perf_counter()
    new_p, fail, eig = kernels.solve_rows(
        matrix.indptr, matrix.indices, q, gram, base_scale, diag_add,
        qbar, vec_scale, qbar, rank1_coef, delta_a, delta_b,
        ones_f, ones_f, cfg.pd_floor,
    )
    if fail >= 0:
        raise NonPositiveDefiniteError(fail, eig, cfg.pd_floor)
    model.p[...] = new_p
    return HalfStepStats(matrix.n_contexts, time.perf_counter() - t0)


def update_object_rows(model, matrix, targets, cfg):
    """Closed-form refresh of every object row of Q (P fixed).

    The mirror of :func:`update_context_rows` on the transposed problem;
    entry weights vary with the entry's context, so the per-entry
    coefficients index the fixed (context) side.
    """
    p = model.p
    tptr, tind, _ = matrix.transposed()
    delta_a, delta_b = _weight_deltas(targets)
    base_mat = (p * targets.w_neg[:, None]).T @ p
    h_mat = None
    if cfg.kind == "rgx":
        h_mat = (p * targets.v[:, None]).T @ p
        base_mat = base_mat - h_mat
    diag_add = cfg.lam * _object_weight_sums_cached(matrix, targets)
    base_vec = p.T @ (targets.w_neg * targets.s_neg)
    n = matrix.n_objects
    k = p.shape[1]
    ones_r = np.ones(n)
    t0 = time.perf_counter()
    if cfg.kind == "rgx" and cfg.interaction_form == "rank-one":
        coupling = model.q.sum(axis=0)
        fail, eig = kernels.solve_rows_coupled(
            tptr, tind, p, model.q, base_mat, diag_add, base_vec,
            ones_r, ones_r, delta_a, delta_b, h_mat, coupling, cfg.pd_floor,
        )
    else:
        new_q, fail, eig = kernels.solve_rows(
            tptr, tind, p, base_mat, ones_r, diag_add,
            base_vec, ones_r, np.zeros(k), np.zeros(n),
            ones_r, ones_r, delta_a, delta_b, cfg.pd_floor,
        )
        if fail < 0:
            model.q[...] = new_q
    if fail >= 0:
        raise NonPositiveDefiniteError(fail, eig, cfg.pd_floor)
    return HalfStepStats(n, time.perf_counter() - t0)


def _objective(matrix, model, targets, cfg):
    return rg_dataset_loss(matrix, model, targets, cfg.lam, cfg.kind,
                           cfg.interaction_form).value_weighted


def als_fit(matrix, targets, cfg, callback=None, track_half_steps=False):
    """Alternate the two half-steps until the relative objective decrease
    falls below the tolerance or ``max_iters`` is reached.

    One logged point covers a full iteration (both halves).  The logged
    wall clock covers updates and the objective pass, not any evaluation
    done by ``callback`` (which may return True to stop early).  With
    ``track_half_steps`` the objective after every half-step is recorded
    on the returned ``half_step_objectives`` list.
    """
    model = FactorModel.init(matrix.n_contexts, matrix.n_objects, cfg.dim,
                             cfg.init, cfg.init_scale, cfg.seed)
    logs = []
    half_objs = []
    train_time = 0.0
    prev = None
    for it in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        update_context_rows(model, matrix, targets, cfg)
        if track_half_steps:
            half_objs.append(_objective(matrix, model, targets, cfg))
        update_object_rows(model, matrix, targets, cfg)
        obj = _objective(matrix, model, targets, cfg)
        if track_half_steps:
            half_objs.append(obj)
        train_time += time.perf_counter() - t0
        log = EpochLog(epoch=it, wall_clock_s=train_time, train_loss=obj)
        logs.append(log)
        if callback is not None and callback(model, log):
            break
        if prev is not None and prev - obj <= cfg.tolerance * max(1.0, abs(prev)):
            break
        prev = obj
    if track_half_steps:
        return model, logs, half_objs
    return model, logs


# ---------------------------------------------------------------------------
# Full-matrix variant


def _spd_solve_right(b, a):
    """Solve X A = B for SPD A, adding a trace-scaled jitter once if the
    factorization fails; raises if still singular."""
    k = a.shape[0]
    try:
        np.linalg.cholesky(a)
        return np.linalg.solve(a.T, b.T).T
    except np.linalg.LinAlgError:
        eps = 1e-10 * np.trace(a) / k
        if eps <= 0:
            eps = 1e-12
        jittered = a + eps * np.eye(k)
        try:
            np.linalg.cholesky(jittered)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "system matrix singular even after jitter") from None
        return np.linalg.solve(jittered.T, b.T).T


def _segment_rowsums(values, indptr):
    zero = np.zeros((1, values.shape[1]))
    cs = np.concatenate([zero, np.cumsum(values, axis=0)])
    return cs[indptr[1:]] - cs[indptr[:-1]]


def full_matrix_objective(matrix, model, targets, lam):
    """Data term of the squared objective plus lam * ||P Q'||_F^2."""
    base = rg_dataset_loss(matrix, model, targets, 0.0, "rg2")
    coupling = float(np.sum((model.p.T @ model.p) * (model.q.T @ model.q)))
    return base.data + lam * coupling


def als_fit_full_matrix(matrix, targets, lam, max_iters=50, tolerance=1e-4,
                        dim=8, init="uniform", init_scale=0.01, seed=0,
                        model=None):
    """Whole-matrix alternation for row-constant weights.

    Uses the product-form regularizer lam * ||P Q'||_F^2, which admits
    the closed forms  P = (W + lam I)^{-1} W S Q (Q'Q)^{-1}  and
    Q = S' W P (lam P'P + P'WP)^{-1}  with diagonal W; S is kept in its
    implicit constant-plus-sparse form throughout.
    """
    if not np.allclose(targets.w_pos, targets.w_neg):
        raise ValueError("full-matrix updates require row-constant weights")
    w = targets.w_pos.astype(np.float64)
    s_pos, s_neg = targets.s_pos, targets.s_neg
    if model is None:
        model = FactorModel.init(matrix.n_contexts, matrix.n_objects, dim,
                                 init, init_scale, seed)
    tptr, tind, _ = matrix.transposed()
    logs = []
    train_time = 0.0
    prev = None
    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        p, q = model.p, model.q

        # P = (W + lam I)^{-1} W S Q (Q'Q)^{-1}
        pos_rows = _segment_rowsums(q[matrix.indices], matrix.indptr)
        sq = s_neg[:, None] * q.sum(axis=0) + (s_pos - s_neg)[:, None] * pos_rows
        scaled = (w / (w + lam))[:, None] * sq
        model.p = _spd_solve_right(scaled, q.T @ q)

        # Q = S' W P (lam P'P + P'WP)^{-1}
        p = model.p
        wp = w[:, None] * p
        base = (w * s_neg) @ p
        corr = _segment_rowsums(((s_pos - s_neg) * w)[tind, None] * p[tind], tptr)
        swp = base[None, :] + corr
        model.q = _spd_solve_right(swp, lam * (p.T @ p) + p.T @ wp)

        train_time += time.perf_counter() - t0
        obj = full_matrix_objective(matrix, model, targets, lam)
        logs.append(EpochLog(epoch=it, wall_clock_s=train_time, train_loss=obj))
        if prev is not None and prev - obj <= tolerance * max(1.0, abs(prev)):
            break
        prev = obj
    return model, logs
