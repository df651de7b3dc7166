"""Numerical verification of the mathematical structure behind the losses.

Covers the quadratic-expansion structure of the softmax loss, the
positive-semidefiniteness condition for its squared upper bound, the
Bregman-form identities of the squared surrogates, the rank-discount
regret bound and its transfer to the squared surrogate, and the
pseudo-dimension generalization bound calculator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from rgrank.losses import rg2_context_loss, rgx_context_loss, softmax_probs


@dataclass(frozen=True)
class TaylorTerms:
    """Exact order-0/1/2 expansion of the softmax loss at a point."""

    zeroth: float
    first: np.ndarray
    hessian: np.ndarray
    expansion_point: np.ndarray


def sm_taylor_terms(o0, y):
    o0 = np.asarray(o0, dtype=np.float64)
    p = softmax_probs(o0)
    first = p.copy()
    first[y] -= 1.0
    hessian = np.diag(p) - np.outer(p, p)
    return TaylorTerms(float(-np.log(p[y])), first, hessian, o0)


@dataclass(frozen=True)
class ResidualSweep:
    scales: np.ndarray
    residuals: np.ndarray
    ratios: np.ndarray  # residual / t^2


def taylor_residual_sweep(v, positives, scales, kind="rgx"):
    """Gap between the softmax context loss and its quadratic surrogate.

    For scale t, residual(t) = |L_sm(t v) - (L_kind(t v) + d (log N - 1/2))|
    with d the number of positives.  Evaluated in a cancellation-free
    rearrangement (log1p/expm1) so the third-order decay of the gap is
    resolvable down to t ~ 1e-4; the rearrangement agrees with the
    direct two-loss difference to machine precision (see tests).
    """
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("direction must be unit norm")
    positives = np.asarray(positives, dtype=np.int64)
    n = v.shape[0]
    d = positives.size
    s1 = v.sum()
    scales = np.asarray(scales, dtype=np.float64)
    residuals = np.empty_like(scales)
    for i, t in enumerate(scales):
        lse_gap = np.log1p(np.mean(np.expm1(t * v)))
        r = lse_gap - t * s1 / n - t * t / (2.0 * n)
        if kind == "rgx":
            r += t * t * s1 * s1 / (2.0 * n * n)
        elif kind != "rg2":
            raise ValueError(f"kind must be 'rg2' or 'rgx', got {kind!r}")
        residuals[i] = d * abs(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(scales > 0, residuals / scales**2, 0.0)
    return ResidualSweep(scales, residuals, ratios)


def halving_scales(start=1e-1, stop=1e-4):
    """Successively halved scales from ``start`` down to ``stop``."""
    out = []
    t = start
    while t >= stop * (1 - 1e-12):
        out.append(t)
        t /= 2.0
    return np.array(out)


# ---------------------------------------------------------------------------
# Positive-semidefiniteness of the curvature-dominance matrix


def psd_condition(p):
    """Concentration condition 1/N - sum(p^3)/sum(p^2) + sum(p^2) >= 0.

    A sufficient condition (along the direction p) for
    (1/N) I - diag(p) + p p' to be positive semidefinite; exactly 1/N
    for both the uniform and the one-hot distribution.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    s2 = float((p**2).sum())
    s3 = float((p**3).sum())
    value = 1.0 / n - s3 / s2 + s2
    return value, value >= 0.0


def hessian_dominance_check(p):
    """Smallest eigenvalue of (1/N) I - diag(p) + p p'."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    a = np.eye(n) / n - np.diag(p) + np.outer(p, p)
    return float(np.linalg.eigvalsh(a)[0])


# ---------------------------------------------------------------------------
# Bregman-form identities


def row_target(n, positives):
    """The squared surrogate's per-row minimizer: N/|I_x| - 1 on
    positives, -1 elsewhere; always sums to zero."""
    positives = np.asarray(positives, dtype=np.int64)
    eta = np.full(n, -1.0)
    eta[positives] = n / positives.size - 1.0
    return eta


def bregman_equivalence_check(positives, n, n_samples=10, scale=2.0, seed=0):
    """Spread of (loss - quadratic form) over random score vectors.

    In the absorbed scale (2N times the canonical loss) the identities
    are exact:  2N * L_rg2 = d ||o - eta||^2 + const  and
    2N * L_rgx = d (o - eta)' (I - 11'/N) (o - eta) + const, using that
    eta sums to zero.  Returns the max spread across both checks.
    """
    rng = np.random.default_rng(seed)
    positives = np.asarray(positives, dtype=np.int64)
    d = positives.size
    eta = row_target(n, positives)
    diff2, diffx = [], []
    for _ in range(n_samples):
        o = rng.uniform(-scale, scale, size=n)
        dev = o - eta
        quad2 = d * (dev @ dev)
        quadx = d * (dev @ dev - dev.sum() ** 2 / n)
        diff2.append(2 * n * rg2_context_loss(o, positives).value - quad2)
        diffx.append(2 * n * rgx_context_loss(o, positives).value - quadx)
    spread2 = max(diff2) - min(diff2)
    spreadx = max(diffx) - min(diffx)
    return max(spread2, spreadx)


# ---------------------------------------------------------------------------
# Rank-discount regret bound


def discount_sequence(n, base=2.0):
    """c_y = 1 / log_base(1 + y) for ranks y = 1..n."""
    return math.log(base) / np.log1p(np.arange(1, n + 1))


def _positions(scores):
    """positions[y] = 0-based rank of item y (desc scores, ties by id)."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    return pos


def expected_dcg(scores, f_b, base=2.0):
    """Expected rank-discounted gain of ranking by ``scores`` when item
    relevance probabilities are ``f_b``."""
    c = discount_sequence(len(f_b), base)
    return float(c[_positions(scores)] @ np.asarray(f_b, dtype=np.float64))


def dcg_regret_bound_check(f, f_b, base=2.0):
    """Regret of ranking by f against the bound
    sqrt(2 sum c^2) * ||f - f_b||."""
    f = np.asarray(f, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64)
    lhs = expected_dcg(f_b, f_b, base) - expected_dcg(f, f_b, base)
    c = discount_sequence(f.size, base)
    rhs = math.sqrt(2.0 * float(c @ c)) * float(np.linalg.norm(f - f_b))
    return lhs, rhs, lhs <= rhs + 1e-12


def dcg_regret_grid_check(n, levels=(0.0, 0.25, 0.5, 0.75, 1.0), base=2.0):
    """Exhaustively check the regret bound over all (f, f_b) grid pairs.

    Returns (number of pairs, violations, max of lhs - rhs).
    """
    grids = np.array(list(itertools.product(levels, repeat=n)))
    c = discount_sequence(n, base)
    order = np.argsort(-grids, axis=1, kind="stable")
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.broadcast_to(np.arange(n), order.shape), axis=1)
    c_at = c[pos]                               # discount per item, per row
    idcg = (c_at * grids).sum(axis=1)           # ranking f_b by itself
    cross = c_at @ grids.T                      # rows: f rankings, cols: f_b
    lhs = idcg[None, :] - cross
    sq = (grids**2).sum(axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * grids @ grids.T, 0.0)
    rhs = math.sqrt(2.0 * float(c @ c)) * np.sqrt(dist2)
    gap = lhs - rhs
    return gap.size, int((gap > 1e-12).sum()), float(gap.max())


# ---------------------------------------------------------------------------
# Regret transfer to the squared surrogate


@dataclass(frozen=True)
class RegretTransferReport:
    n: int
    constants: dict          # positives-count -> fitted C
    n_holdout: int
    violations: int
    max_ratio: float         # max over holdout of regret / (C sqrt(excess))
    holds: bool


def _min_excess_for_permutation(eta, perm, d):
    """Smallest absorbed squared excess of any score vector whose
    descending order is ``perm``: project eta (permuted) onto the
    non-increasing cone."""
    target = eta[perm]
    proj = isotonic_regression(target, increasing=False).x
    return d * float(((proj - target) ** 2).sum())


def fit_regret_transfer_constant(n, n_positives, base=2.0):
    """Smallest C with regret <= C sqrt(excess) over every relevance
    pattern with ``n_positives`` positives, by enumerating all rankings
    and minimizing the excess within each ranking's order cone."""
    c = discount_sequence(n, base)
    ideal = c[:n_positives].sum()
    best = 0.0
    for pattern in itertools.combinations(range(n), n_positives):
        r = np.zeros(n)
        r[list(pattern)] = 1.0
        eta = row_target(n, np.array(pattern))
        for perm in itertools.permutations(range(n)):
            regret = ideal - float(c @ r[list(perm)])
            if regret <= 1e-12:
                continue
            excess = _min_excess_for_permutation(eta, np.array(perm), n_positives)
            best = max(best, regret / math.sqrt(excess))
    return best


def rg2_regret_transfer_check(n=4, n_holdout=10_000, seed=0, base=2.0):
    """Fit per-family constants, then validate on random held-out scores.

    The excess is the absorbed squared surrogate's distance to its exact
    per-row minimizer, d ||o - eta||^2; regret is the exact expected
    rank-discounted gap of ranking by o under binary relevance.
    """
    constants = {d: fit_regret_transfer_constant(n, d, base)
                 for d in range(1, n)}
    rng = np.random.default_rng(seed)
    c = discount_sequence(n, base)
    violations = 0
    max_ratio = 0.0
    for _ in range(n_holdout):
        d = int(rng.integers(1, n))
        pattern = rng.choice(n, size=d, replace=False)
        r = np.zeros(n)
        r[pattern] = 1.0
        eta = row_target(n, pattern)
        if rng.random() < 0.1:
            o = rng.uniform(-5.0, 5.0, size=n)
        else:
            sigma = 10.0 ** rng.uniform(-3, 1)
            o = eta + sigma * rng.standard_normal(n)
        regret = c[:d].sum() - float(c[_positions(o)] @ r)
        excess = d * float(((o - eta) ** 2).sum())
        if regret <= 1e-12:
            continue
        bound = constants[d] * math.sqrt(excess)
        ratio = regret / bound if bound > 0 else math.inf
        max_ratio = max(max_ratio, ratio)
        if regret > bound * (1 + 1e-9) + 1e-12:
            violations += 1
    finite = all(math.isfinite(v) for v in constants.values())
    return RegretTransferReport(n, constants, n_holdout, violations,
                                max_ratio, finite and violations == 0)


# ---------------------------------------------------------------------------
# Generalization bound


def lipschitz_floor(n, c_p, c_q):
    """Smallest admissible Lipschitz constant for factor-norm caps."""
    return 2.0 * (2.0 * math.sqrt(n) * c_p * c_q + 1.0 + n)


@dataclass(frozen=True)
class BoundInputs:
    dim: int
    n_contexts: int
    n_objects: int
    n_interactions: int
    loss_bound: float
    lipschitz: float
    delta: float
    c_p: float | None = None
    c_q: float | None = None

    def __post_init__(self):
        if min(self.dim, self.n_contexts, self.n_objects, self.n_interactions) <= 0:
            raise ValueError("sizes must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.loss_bound <= 0 or self.lipschitz <= 0:
            raise ValueError("loss bound and Lipschitz constant must be positive")
        if self.c_p is not None and self.c_q is not None:
            floor = lipschitz_floor(self.n_objects, self.c_p, self.c_q)
            if self.lipschitz <= floor:
                raise ValueError(
                    f"Lipschitz constant {self.lipschitz} must exceed {floor:.6g} "
                    "for the given factor-norm caps")


def pseudo_dimension(dim, n_contexts, n_objects):
    """Capacity of the rank-limited score-matrix class:
    K (M + N) log(16 e M / K)."""
    return dim * (n_contexts + n_objects) * math.log(16.0 * math.e * n_contexts / dim)


def bound_epsilon(d, loss_bound, lipschitz, n_interactions, delta):
    """epsilon = 16 * ((d+1) B^4 e^(d+1) L^d / (|D| delta))^(1/(d+2)),
    evaluated in log space so astronomically large d stays finite."""
    log_inner = (math.log(d + 1.0)
                 + 4.0 * math.log(loss_bound)
                 + (d + 1.0)
                 + d * math.log(lipschitz)
                 - math.log(n_interactions)
                 - math.log(delta))
    return 16.0 * math.exp(log_inner / (d + 2.0))


def bound_epsilon_direct(d, loss_bound, lipschitz, n_interactions, delta):
    """Direct (overflow-prone) evaluation of the same expression; used to
    cross-check the log-space form on small inputs."""
    inner = ((d + 1.0) * loss_bound**4 * math.exp(d + 1.0) * lipschitz**d
             / (n_interactions * delta))
    return 16.0 * inner ** (1.0 / (d + 2.0))


def generalization_bound(inputs):
    """(pseudo-dimension, epsilon) for a factor model's size and caps."""
    d = pseudo_dimension(inputs.dim, inputs.n_contexts, inputs.n_objects)
    eps = bound_epsilon(d, inputs.loss_bound, inputs.lipschitz,
                        inputs.n_interactions, inputs.delta)
    return d, eps
