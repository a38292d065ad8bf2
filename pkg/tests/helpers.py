"""Shared fixtures-in-code: tiny named graphs and random generators."""

import numpy as np

from graphpool import sparse
from graphpool.sparse import CsrMatrix


def path4() -> CsrMatrix:
    """P4: the path 0-1-2-3."""
    return sparse.from_dense(np.array([
        [0, 1, 0, 0],
        [1, 0, 1, 0],
        [0, 1, 0, 1],
        [0, 0, 1, 0],
    ], dtype=np.float64))


def cycle(n: int) -> CsrMatrix:
    idx = np.arange(n)
    rows = np.concatenate([idx, np.roll(idx, -1)])
    cols = np.concatenate([np.roll(idx, -1), idx])
    return CsrMatrix.from_coo(n, n, rows, cols, np.ones(2 * n))


def triangle() -> CsrMatrix:
    return sparse.from_dense(np.array([
        [0, 1, 1],
        [1, 0, 1],
        [1, 1, 0],
    ], dtype=np.float64))


def random_integer_dense(rng, n_rows, n_cols, density=0.3, lo=-3, hi=3):
    dense = rng.integers(lo, hi + 1, (n_rows, n_cols)).astype(np.float64)
    dense *= rng.random((n_rows, n_cols)) < density
    return dense


def random_adjacency_dense(rng, n, p=0.35, directed=False):
    dense = rng.random((n, n)) < p
    np.fill_diagonal(dense, False)
    if not directed:
        dense |= dense.T
    return dense.astype(np.float64)
