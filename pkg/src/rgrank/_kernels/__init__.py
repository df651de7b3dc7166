"""Backend dispatch for the hot row-solve kernels.

Two interchangeable implementations exist:

* ``numba_impl`` -- ``@njit``-compiled loops (default when numba imports).
* ``numpy_impl`` -- vectorized pure-numpy fallback, always available.

Selection is controlled by the ``RGRANK_BACKEND`` environment variable:
``numba``, ``numpy``, or ``auto`` (default).  ``numba`` fails loudly if
numba cannot be imported; ``auto`` silently falls back to numpy.

Both backends implement the same two functions:

``solve_rows(...)``
    One independent K x K symmetric positive-definite solve per row.

``solve_rows_coupled(...)``
    Sequential row solves sharing a running column-sum coupling vector
    (Gauss-Seidel; used by the rank-one interaction form's object half).

Results agree across backends to floating-point reordering; bitwise
reproducibility is only promised within a single backend.
"""

import os

_ENV_VAR = "RGRANK_BACKEND"


def load_impl(name):
    """Import and return a backend module by name ('numba' or 'numpy')."""
    if name == "numpy":
        from rgrank._kernels import numpy_impl

        return numpy_impl
    if name == "numba":
        from rgrank._kernels import numba_impl

        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")


def _resolve():
    requested = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if requested in ("numpy", "numba"):
        return requested, load_impl(requested)
    if requested != "auto":
        raise ValueError(
            f"{_ENV_VAR}={requested!r}: expected 'numba', 'numpy', or 'auto'"
        )
    try:
        return "numba", load_impl("numba")
    except ImportError:
        return "numpy", load_impl("numpy")


BACKEND, _impl = _resolve()

solve_rows = _impl.solve_rows
solve_rows_coupled = _impl.solve_rows_coupled
