"""Pure-numpy reference implementation of the row-solve kernels.

Row ``r`` of :func:`solve_rows` assembles and solves

    A_r = base_scale[r] * base_mat + diag_add[r] * I
          - rank1_coef[r] * outer(rank1_vec, rank1_vec)
          + sum_{e in row r} row_a[r] * f_a[j_e] * outer(f_e, f_e)
    b_r = vec_scale[r] * base_vec + sum_{e in row r} row_b[r] * f_b[j_e] * f_e

with ``j_e = indices[e]`` and ``f_e = fmat[j_e]``; per-entry coefficients
factor into a per-row and a per-fixed-row part so no length-|D|
temporaries are needed on the caller's side.  Positive definiteness is
guarded by a Cholesky pivot floor: every pivot of A_r must reach
``pd_floor`` (pivots are never smaller than the smallest eigenvalue, so
a tripped guard certifies an eigenvalue below the floor).
"""

import numpy as np

# Rows are processed in chunks sized so the per-entry outer-product
# buffer stays around 32 MB regardless of K.
_CHUNK_BUDGET = 4_000_000


def _segment_sums(values, starts, ends):
    # cumsum-based segment reduction; robust to empty segments.
    zero = np.zeros((1,) + values.shape[1:], dtype=values.dtype)
    cs = np.concatenate([zero, np.cumsum(values, axis=0)])
    return cs[ends] - cs[starts]


def _check_pivots(a_rows, pd_floor):
    """Return (cholesky ok, index of first failing row, its smallest eig)."""
    try:
        chol = np.linalg.cholesky(a_rows)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(a_rows)[:, 0]
        bad = int(np.argmin(eigs))
        return False, bad, float(eigs[bad])
    pivots = np.einsum("rkk->rk", chol) ** 2
    bad_rows = np.where(pivots.min(axis=1) < pd_floor)[0]
    if bad_rows.size:
        bad = int(bad_rows[0])
        return False, bad, float(np.linalg.eigvalsh(a_rows[bad])[0])
    return True, -1, 0.0


def solve_rows(
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
    out = np.empty((n_rows, k))
    eye = np.eye(k)
    rank1 = np.outer(rank1_vec, rank1_vec)
    row_of_entry = np.repeat(np.arange(n_rows), np.diff(indptr))
    entry_a = row_a[row_of_entry] * f_a[indices]
    entry_b = row_b[row_of_entry] * f_b[indices]

    chunk = max(1, _CHUNK_BUDGET // (k * k))
    row = 0
    while row < n_rows:
        hi = row + chunk
        while hi < n_rows and indptr[hi] - indptr[row] < chunk:
            hi = min(n_rows, hi + chunk)
        hi = min(hi, n_rows)
        starts = indptr[row:hi] - indptr[row]
        ends = indptr[row + 1 : hi + 1] - indptr[row]
        e0, e1 = indptr[row], indptr[hi]
        f = fmat[indices[e0:e1]]

        a_rows = base_scale[row:hi, None, None] * base_mat
        a_rows += diag_add[row:hi, None, None] * eye
        a_rows -= rank1_coef[row:hi, None, None] * rank1
        outer = entry_a[e0:e1, None, None] * (f[:, :, None] * f[:, None, :])
        a_rows += _segment_sums(outer, starts, ends)

        b_rows = vec_scale[row:hi, None] * base_vec
        b_rows += _segment_sums(entry_b[e0:e1, None] * f, starts, ends)

        ok, bad, eig = _check_pivots(a_rows, pd_floor)
        if not ok:
            return out, row + bad, eig
        # b as a stack of vectors (numpy >= 2 treats 2-d b as a matrix)
        out[row:hi] = np.linalg.solve(a_rows, b_rows[:, :, None])[:, :, 0]
        row = hi
    return out, -1, 0.0


def solve_rows_coupled(
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
    """Sequential Gauss-Seidel row solves with a shared coupling vector.

    ``own`` (the factor being updated) and ``coupling_sum`` (the running
    column sum of ``own``) are modified in place.  Row ``r`` solves

        A_r = base_mat + diag_add[r] * I + sum_e a_e outer(f_e, f_e)
        b_r = base_vec + sum_e b_e f_e + h_mat @ (coupling_sum - own[r])

    then updates ``coupling_sum`` by the row's displacement.
    """
    n_rows = indptr.shape[0] - 1
    k = fmat.shape[1]
    eye = np.eye(k)
    for r in range(n_rows):
        e0, e1 = indptr[r], indptr[r + 1]
        idx = indices[e0:e1]
        f = fmat[idx]
        a = base_mat + diag_add[r] * eye
        if e1 > e0:
            a = a + ((row_a[r] * f_a[idx])[:, None] * f).T @ f
        b = base_vec + h_mat @ (coupling_sum - own[r])
        if e1 > e0:
            b = b + (row_b[r] * f_b[idx]) @ f
        ok, bad, eig = _check_pivots(a[None, :, :], pd_floor)
        if not ok:
            return r, eig
        x = np.linalg.solve(a, b)
        coupling_sum += x - own[r]
        own[r] = x
    return -1, 0.0
