"""Numba-compiled row-solve kernels (see numpy_impl for the contracts).

The jitted functions return ``(out, fail_row)``; the thin wrappers below
recover the exact smallest eigenvalue of a failing row for error
reporting, since inside nopython code only the tripped pivot is known.
"""

import numpy as np
from numba import njit

from rgrank._kernels import numpy_impl


@njit(cache=False)
def _chol_pivot_floor(a, pd_floor):
    """In-place lower Cholesky of a; returns False if any pivot < pd_floor."""
    k = a.shape[0]
    for j in range(k):
        d = a[j, j]
        for t in range(j):
            d -= a[j, t] * a[j, t]
        if d < pd_floor:
            return False
        d = np.sqrt(d)
        a[j, j] = d
        for i in range(j + 1, k):
            s = a[i, j]
            for t in range(j):
                s -= a[i, t] * a[j, t]
            a[i, j] = s / d
    return True


@njit(cache=False)
def _chol_solve(l, b, x):
    k = l.shape[0]
    for i in range(k):
        s = b[i]
        for t in range(i):
            s -= l[i, t] * x[t]
        x[i] = s / l[i, i]
    for i in range(k - 1, -1, -1):
        s = x[i]
        for t in range(i + 1, k):
            s -= l[t, i] * x[t]
        x[i] = s / l[i, i]


@njit(cache=False)
def _solve_rows_jit(
    indptr,
    indices,
    fmat,
    base_mat,
    base_scale,
    diag_add,
    base_vec,
    vec_scale,
    rank1_vec,
    rank1_coef,
    row_a,
    row_b,
    f_a,
    f_b,
    pd_floor,
):
    n_rows = indptr.shape[0] - 1
    k = fmat.shape[1]
    out = np.zeros((n_rows, k))
    a = np.empty((k, k))
    b = np.empty(k)
    for r in range(n_rows):
        sc = base_scale[r]
        r1 = rank1_coef[r]
        for i in range(k):
            for j in range(k):
                a[i, j] = sc * base_mat[i, j] - r1 * rank1_vec[i] * rank1_vec[j]
            a[i, i] += diag_add[r]
            b[i] = vec_scale[r] * base_vec[i]
        ra = row_a[r]
        rb = row_b[r]
        for e in range(indptr[r], indptr[r + 1]):
            j_e = indices[e]
            f = fmat[j_e]
            ca = ra * f_a[j_e]
            cb = rb * f_b[j_e]
            for i in range(k):
                fi = f[i]
                b[i] += cb * fi
                cfi = ca * fi
                for j in range(k):
                    a[i, j] += cfi * f[j]
        if not _chol_pivot_floor(a, pd_floor):
            return out, r
        _chol_solve(a, b, out[r])
    return out, -1


@njit(cache=False)
def _solve_rows_coupled_jit(
    indptr,
    indices,
    fmat,
    own,
    base_mat,
    diag_add,
    base_vec,
    row_a,
    row_b,
    f_a,
    f_b,
    h_mat,
    coupling_sum,
    pd_floor,
):
    n_rows = indptr.shape[0] - 1
    k = fmat.shape[1]
    a = np.empty((k, k))
    b = np.empty(k)
    x = np.empty(k)
    for r in range(n_rows):
        for i in range(k):
            for j in range(k):
                a[i, j] = base_mat[i, j]
            a[i, i] += diag_add[r]
            b[i] = base_vec[i]
            for j in range(k):
                b[i] += h_mat[i, j] * (coupling_sum[j] - own[r, j])
        ra = row_a[r]
        rb = row_b[r]
        for e in range(indptr[r], indptr[r + 1]):
            j_e = indices[e]
            f = fmat[j_e]
            ca = ra * f_a[j_e]
            cb = rb * f_b[j_e]
            for i in range(k):
                fi = f[i]
                b[i] += cb * fi
                cfi = ca * fi
                for j in range(k):
                    a[i, j] += cfi * f[j]
        if not _chol_pivot_floor(a, pd_floor):
            return r
        _chol_solve(a, b, x)
        for j in range(k):
            coupling_sum[j] += x[j] - own[r, j]
            own[r, j] = x[j]
    return -1


def _rebuild_row(indptr, indices, fmat, base_mat, base_scale, diag_add,
                 rank1_vec, rank1_coef, row_a, f_a, row):
    k = fmat.shape[1]
    a = base_scale[row] * base_mat + diag_add[row] * np.eye(k)
    a -= rank1_coef[row] * np.outer(rank1_vec, rank1_vec)
    e0, e1 = indptr[row], indptr[row + 1]
    idx = indices[e0:e1]
    f = fmat[idx]
    if e1 > e0:
        a += ((row_a[row] * f_a[idx])[:, None] * f).T @ f
    return a


def solve_rows(indptr, indices, fmat, base_mat, base_scale, diag_add,
               base_vec, vec_scale, rank1_vec, rank1_coef, row_a, row_b,
               f_a, f_b, pd_floor):
    out, fail = _solve_rows_jit(
        indptr, indices, fmat, base_mat, base_scale, diag_add, base_vec,
        vec_scale, rank1_vec, rank1_coef, row_a, row_b, f_a, f_b, pd_floor,
    )
    if fail < 0:
        return out, -1, 0.0
    a = _rebuild_row(indptr, indices, fmat, base_mat, base_scale, diag_add,
                     rank1_vec, rank1_coef, row_a, f_a, fail)
    return out, fail, float(np.linalg.eigvalsh(a)[0])


def solve_rows_coupled(indptr, indices, fmat, own, base_mat, diag_add,
                       base_vec, row_a, row_b, f_a, f_b, h_mat, coupling_sum,
                       pd_floor):
    fail = _solve_rows_coupled_jit(
        indptr, indices, fmat, own, base_mat, diag_add, base_vec,
        row_a, row_b, f_a, f_b, h_mat, coupling_sum, pd_floor,
    )
    if fail < 0:
        return -1, 0.0
    n_rows = indptr.shape[0] - 1
    a = _rebuild_row(indptr, indices, fmat, base_mat, np.ones(n_rows),
                     diag_add, np.zeros(fmat.shape[1]), np.zeros(n_rows),
                     row_a, f_a, fail)
    return fail, float(np.linalg.eigvalsh(a)[0])


def warmup():
    """Trigger JIT compilation on a tiny instance (used before timing).

    Index arrays are marked read-only to match the frozen layouts the
    interaction matrix hands to the kernels (numba specializes on
    mutability, so a writable warmup would not prevent a recompile).
    """
    indptr = np.array([0, 1], dtype=np.int64)
    indices = np.array([0], dtype=np.int64)
    indptr.flags.writeable = False
    indices.flags.writeable = False
    f = np.ones((2, 2))
    eye = np.eye(2)
    one = np.ones(1)
    ones2 = np.ones(2)
    solve_rows(indptr, indices, f, eye, one, one, np.zeros(2), one,
               np.zeros(2), np.zeros(1), one, one, ones2, ones2, 1e-12)
    solve_rows_coupled(indptr, indices, f, np.zeros((1, 2)), eye, one,
                       np.zeros(2), one, one, ones2, ones2,
                       np.zeros((2, 2)), np.zeros(2), 1e-12)
