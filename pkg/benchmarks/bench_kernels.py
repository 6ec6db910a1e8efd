"""Compare the numba and pure-numpy bulk-resolution kernels.

Usage: python benchmarks/bench_kernels.py [--students N] [--repeat R]

Times the two raw kernels on random boolean matrices, then full
``resolve_all`` on a churn-bench OU state, once per backend. Results from
both backends are checked for equality before any timing is printed.
"""

from __future__ import annotations

import argparse
import time
from contextlib import contextmanager

import numpy as np

from ourbac import _kernels, bulk
from ourbac.bench import ChurnConfig, simulate


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


@contextmanager
def backend(name: str):
    saved = _kernels.transitive_closure, _kernels.bool_product
    if name == "numba":
        _kernels.transitive_closure = lambda a: _kernels.closure_numba(np.ascontiguousarray(a, dtype=np.bool_))
        _kernels.bool_product = lambda a, b: _kernels.product_numba(
            np.ascontiguousarray(a, dtype=np.bool_), np.ascontiguousarray(b, dtype=np.bool_))
    else:
        _kernels.transitive_closure = _kernels.closure_numpy
        _kernels.bool_product = _kernels.product_numpy
    try:
        yield
    finally:
        _kernels.transitive_closure, _kernels.bool_product = saved


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--students", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    rows = []
    for n in (64, 256, 512):
        adj = np.triu(rng.random((n, n)) < 4 / n, 1)
        assert np.array_equal(_kernels.closure_numba(adj), _kernels.closure_numpy(adj))
        rows.append((f"closure n={n}",
                     best_of(lambda: _kernels.closure_numpy(adj), args.repeat),
                     best_of(lambda: _kernels.closure_numba(adj), args.repeat)))
    for users, inner, cols in ((10_000, 40, 40), (10_000, 40, 400)):
        a = rng.random((users, inner)) < 0.05
        b = rng.random((inner, cols)) < 0.1
        assert np.array_equal(_kernels.product_numba(a, b), _kernels.product_numpy(a, b))
        rows.append((f"product {users}x{inner}x{cols}",
                     best_of(lambda: _kernels.product_numpy(a, b), args.repeat),
                     best_of(lambda: _kernels.product_numba(a, b), args.repeat)))

    intake = max(1, args.students // 8)
    state = simulate(ChurnConfig(departments=8, intake_per_course=intake, roles_per_student=3), "ou").engine.state
    with backend("numpy"):
        ref = bulk.resolve_all(state).permission_sets()
        t_np = best_of(lambda: bulk.resolve_all(state), args.repeat)
    with backend("numba"):
        assert bulk.resolve_all(state).permission_sets() == ref
        t_nb = best_of(lambda: bulk.resolve_all(state), args.repeat)
    rows.append((f"resolve_all {len(state.users)} users", t_np, t_nb))

    print(f"{'case':32} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, a, b in rows:
        print(f"{name:32} {a * 1e3:10.2f} {b * 1e3:10.2f} {a / b:8.2f}")


if __name__ == "__main__":
    main()
