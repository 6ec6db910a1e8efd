import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ourbac import _kernels as k
from oracles import random_state
from ourbac.bulk import resolve_all
from ourbac.resolver import authorized_roles, effective_permissions

needs_numba = pytest.mark.skipif(not k.HAVE_NUMBA, reason="numba not installed")


def random_dag(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    return np.triu(rng.random((n, n)) < p, 1)


def closure_by_reachability(adj: np.ndarray) -> np.ndarray:
    n = len(adj)
    out = np.zeros_like(adj)
    for s in range(n):
        stack = [s]
        while stack:
            v = stack.pop()
            if not out[s, v]:
                out[s, v] = True
                stack.extend(np.flatnonzero(adj[v]))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_numpy_closure_matches_reachability(seed, n):
    adj = random_dag(np.random.default_rng(seed), n, 0.1)
    assert np.array_equal(k.closure_numpy(adj), closure_by_reachability(adj))


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_backends_agree_on_closure(seed, n):
    adj = random_dag(np.random.default_rng(seed), n, 0.1)
    assert np.array_equal(k.closure_numba(adj), k.closure_numpy(adj))


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 30), st.integers(1, 30))
def test_backends_agree_on_product(seed, a, b, c):
    rng = np.random.default_rng(seed)
    x, y = rng.random((a, b)) < 0.2, rng.random((b, c)) < 0.2
    expected = (x.astype(np.int64) @ y.astype(np.int64)) > 0
    assert np.array_equal(k.product_numba(x, y), expected)
    assert np.array_equal(k.product_numpy(x, y), expected)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bulk_matches_resolver(seed):
    s = random_state(random.Random(seed))
    bulk = resolve_all(s)
    perms, roles = bulk.permission_sets(), bulk.role_sets()
    for u in s.users:
        assert perms[u] == effective_permissions(s, u)
        assert roles[u] == authorized_roles(s, u)


def test_bulk_on_m1(m1):
    bulk = resolve_all(m1)
    assert bulk.permissions_of("u.alice") == {"p.internet", "p.lms", "p.lab"}
    assert bulk.permissions_of("u.bob") == {"p.internet", "p.lms"}


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba" if k.HAVE_NUMBA else "numpy")])
def test_env_flag_selects_backend(flag, expected):
    import os
    import subprocess
    import sys
    env = dict(os.environ, OURBAC_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from ourbac._kernels import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
