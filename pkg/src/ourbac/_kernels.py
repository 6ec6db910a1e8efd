"""Boolean-matrix kernels for bulk resolution.

numba-compiled versions are used when numba imports and the environment
variable ``OURBAC_NO_NUMBA`` is unset or false; otherwise the pure-numpy
versions run. Both are always importable so they can be compared.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("OURBAC_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

HAVE_NUMBA = njit is not None


def closure_numpy(adj: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure by repeated squaring."""
    n = adj.shape[0]
    reach = adj.astype(bool) | np.eye(n, dtype=bool)
    while True:
        f = reach.astype(np.float64)
        nxt = (f @ f) > 0
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


def product_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Boolean matrix product (OR of ANDs)."""
    # float64 counts are exact far beyond any inner dimension used here
    return (a.astype(np.float64) @ b.astype(np.float64)) > 0


if HAVE_NUMBA:

    @njit(cache=True)
    def closure_numba(adj):
        n = adj.shape[0]
        reach = np.zeros((n, n), dtype=np.bool_)
        for i in range(n):
            reach[i, i] = True
            for j in range(n):
                if adj[i, j]:
                    reach[i, j] = True
        for k in range(n):
            for i in range(n):
                if reach[i, k]:
                    for j in range(n):
                        if reach[k, j]:
                            reach[i, j] = True
        return reach

    @njit(cache=True)
    def product_numba(a, b):
        n, m = a.shape
        p = b.shape[1]
        out = np.zeros((n, p), dtype=np.bool_)
        for i in range(n):
            for k in range(m):
                if a[i, k]:
                    for j in range(p):
                        if b[k, j]:
                            out[i, j] = True
        return out

else:  # pragma: no cover
    closure_numba = None
    product_numba = None


if HAVE_NUMBA and not _DISABLED:
    BACKEND = "numba"

    def transitive_closure(adj: np.ndarray) -> np.ndarray:
        return closure_numba(np.ascontiguousarray(adj, dtype=np.bool_))

    def bool_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return product_numba(np.ascontiguousarray(a, dtype=np.bool_), np.ascontiguousarray(b, dtype=np.bool_))

else:
    BACKEND = "numpy"
    transitive_closure = closure_numpy
    bool_product = product_numpy
