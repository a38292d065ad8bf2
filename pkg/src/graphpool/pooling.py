"""Pooled-graph generation strategies.

Every operator returns a :class:`PoolResult` holding the pooled features,
the pooled adjacency, the kept node ids, the full-length score column, and
the per-kept-node graph ids.  Score functions take (x, a, graph_id) and
return one score per node; assignment functions take (x, a) and return a
constant sparse assignment matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diff, sparse
from .diff import Tensor
from .layers import GcnConv, Lcsmp
from .sparse import CsrMatrix, IndexSet


@dataclass(frozen=True, eq=False)
class PoolResult:
    x: Tensor
    a: CsrMatrix
    kept: IndexSet
    scores: Tensor
    graph_id: np.ndarray

    def __post_init__(self):
        if not (len(self.kept) == self.x.rows == self.a.n_rows == self.a.n_cols):
            raise ValueError("pooled features, adjacency and kept set disagree")
        if self.graph_id.shape != (len(self.kept),):
            raise ValueError("graph ids must align with kept nodes")


def check_ratio(ratio: float) -> float:
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"pool ratio must be in (0, 1], got {ratio}")
    return float(ratio)


def kept_count(ratio: float, n: int) -> int:
    """max(1, ceil(ratio * n)); the subtraction guards float noise like 0.3*10."""
    check_ratio(ratio)
    return max(1, math.ceil(ratio * n - 1e-9))


def _graph_sizes(graph_id) -> np.ndarray:
    gid = np.asarray(graph_id, dtype=np.int64)
    if gid.size == 0:
        raise ValueError("cannot pool an empty batch")
    if gid[0] < 0 or np.any(np.diff(gid) < 0):
        raise ValueError("graph ids must be non-negative and non-decreasing")
    sizes = np.bincount(gid)
    if np.any(sizes == 0):
        raise ValueError("every graph in the batch needs at least one node")
    return sizes


def topk(h: Tensor, graph_id, ratio: float) -> IndexSet:
    """Indices of the top-scoring nodes of each graph, ties to lower index.

    Per graph g of size n_g, exactly max(1, ceil(ratio * n_g)) nodes are
    kept, so no graph ever pools to nothing.
    """
    if h.cols != 1:
        raise ValueError("scores must be one column")
    gid = np.asarray(graph_id, dtype=np.int64)
    sizes = _graph_sizes(gid)
    if h.rows != int(sizes.sum()):
        raise ValueError("scores must align with graph ids")
    scores = h.values[:, 0]
    bounds = np.zeros(sizes.size + 1, dtype=np.int64)
    np.cumsum(sizes, out=bounds[1:])
    kept = []
    for g in range(sizes.size):
        lo, hi = int(bounds[g]), int(bounds[g + 1])
        k = kept_count(ratio, hi - lo)
        order = np.argsort(-scores[lo:hi], kind="stable")  # stable: ties keep low index
        kept.append(lo + np.sort(order[:k]))
    idx = np.concatenate(kept)
    counts = np.bincount(gid[idx], minlength=sizes.size)
    expected = np.array([kept_count(ratio, int(n)) for n in sizes])
    if not np.array_equal(counts, expected):
        raise RuntimeError("per-graph kept counts drifted from max(1, ceil(ratio*n))")
    return IndexSet(idx)


def node_selection_pool(x: Tensor, a: CsrMatrix, score_fn, ratio: float, graph_id) -> PoolResult:
    """Keep top-scored nodes and the induced subgraph only."""
    gid = np.asarray(graph_id, dtype=np.int64)
    h = score_fn(x, a, gid)
    kept = topk(h, gid, ratio)
    gated = diff.broadcast_col(x, h)
    return PoolResult(
        x=diff.gather_rows(gated, kept.indices),
        a=sparse.select_rows_cols(a, kept),
        kept=kept,
        scores=h,
        graph_id=gid[kept.indices],
    )


def dense_assignment_pool(x: Tensor, a: CsrMatrix, assign_fn, k_clusters: int, graph_id) -> PoolResult:
    """Soft-cluster every graph into a fixed number of pooled nodes.

    assign_fn returns a row-stochastic N x k tensor; features become S^T X
    per graph and the pooled adjacency S^T A S (diagonal dropped).  Output
    size is k per graph regardless of input size.
    """
    if k_clusters < 1:
        raise ValueError("need at least one cluster")
    gid = np.asarray(graph_id, dtype=np.int64)
    sizes = _graph_sizes(gid)
    n_graphs = sizes.size
    s = assign_fn(x, a, gid)
    if s.shape != (x.rows, k_clusters):
        raise ValueError(f"assignment must be {x.rows} x {k_clusters}, got {s.shape}")
    pooled_x = diff.assignment_reduce(s, x, gid, k_clusters)

    bounds = np.zeros(n_graphs + 1, dtype=np.int64)
    np.cumsum(sizes, out=bounds[1:])
    rows, cols, vals = [], [], []
    for g in range(n_graphs):
        lo, hi = int(bounds[g]), int(bounds[g + 1])
        block_a = sparse.to_dense(sparse.select_rows_cols(a, IndexSet(np.arange(lo, hi))))
        block_s = s.values[lo:hi]
        pooled = block_s.T @ block_a @ block_s
        np.fill_diagonal(pooled, 0.0)
        r, c = np.nonzero(pooled)
        rows.append(r + g * k_clusters)
        cols.append(c + g * k_clusters)
        vals.append(pooled[r, c])
    pooled_a = CsrMatrix.from_coo(
        n_graphs * k_clusters,
        n_graphs * k_clusters,
        np.concatenate(rows) if rows else [],
        np.concatenate(cols) if cols else [],
        np.concatenate(vals) if vals else [],
    )
    return PoolResult(
        x=pooled_x,
        a=pooled_a,
        kept=IndexSet.all(n_graphs * k_clusters),
        scores=diff.constant(np.ones((x.rows, 1))),
        graph_id=np.repeat(np.arange(n_graphs, dtype=np.int64), k_clusters),
    )


def _pattern_keys(m: CsrMatrix) -> np.ndarray:
    return sparse.row_indices(m) * np.int64(m.n_cols) + m.col_idx


def validate_local_assignment(s: CsrMatrix, a: CsrMatrix, strict: bool) -> bool:
    """Is pattern(s) within (non-strict) or equal to (strict) pattern(I + A)?"""
    if s.shape != a.shape or s.n_rows != s.n_cols:
        raise ValueError("assignment and adjacency must be square and equal-shaped")
    s_keys = _pattern_keys(s)
    star_keys = _pattern_keys(sparse.add_self_loops(a))
    inside = np.isin(s_keys, star_keys)
    if strict:
        return bool(inside.all()) and s_keys.size == star_keys.size
    return bool(inside.all())


def _first_offender(s: CsrMatrix, a: CsrMatrix) -> tuple[int, int]:
    s_keys = _pattern_keys(s)
    star_keys = _pattern_keys(sparse.add_self_loops(a))
    bad = np.nonzero(~np.isin(s_keys, star_keys))[0][0]
    return int(s_keys[bad] // s.n_cols), int(s_keys[bad] % s.n_cols)


def local_assignment_selection_pool(
    x: Tensor, a: CsrMatrix, assign_fn, score_fn, ratio: float, graph_id
) -> PoolResult:
    """Aggregate features through a local assignment, select, and rewire.

    The assignment may place weight only where a node touches itself or a
    neighbour; the pooled adjacency is S'^T A S' over the kept columns, so
    pooled nodes connect whenever their contributors do.
    """
    gid = np.asarray(graph_id, dtype=np.int64)
    s = assign_fn(x, a)
    if not validate_local_assignment(s, a, strict=False):
        i, j = _first_offender(s, a)
        raise ValueError(
            f"assignment entry ({i}, {j}) falls outside the self-loop adjacency pattern"
        )
    x_star = diff.spmm_const(sparse.transpose(s), x)
    h = score_fn(x_star, a, gid)
    kept = topk(h, gid, ratio)
    gated = diff.broadcast_col(x_star, h)
    s_kept = sparse.select_cols(s, kept)
    pooled_a = sparse.spgemm(sparse.spgemm(sparse.transpose(s_kept), a), s_kept)
    return PoolResult(
        x=diff.gather_rows(gated, kept.indices),
        a=pooled_a,
        kept=kept,
        scores=h,
        graph_id=gid[kept.indices],
    )


def local_cluster_selection_pool(
    x: Tensor,
    a: CsrMatrix,
    cluster_fn,
    score_fn,
    ratio: float,
    graph_id,
    retain_self_loops: bool = False,
) -> PoolResult:
    """Local assignment selection specialized to the full 1-hop pattern.

    When every node contributes to exactly itself and its neighbours, the
    rewired adjacency is the three-hop closure pattern and no assignment
    matrix is needed.  Requires unweighted edges; the self-loops produced by
    the closure are stripped unless ``retain_self_loops`` is set.
    """
    if a.nnz and np.any(a.values != 1.0):
        raise ValueError("cluster selection requires unweighted edges")
    gid = np.asarray(graph_id, dtype=np.int64)
    x_star = cluster_fn(x, a)
    h = score_fn(x_star, a, gid)
    kept = topk(h, gid, ratio)
    gated = diff.broadcast_col(x_star, h)
    closure = sparse.hop_closure(a, symmetric=sparse.is_symmetric(a))
    pooled_a = sparse.select_rows_cols(closure, kept)
    if not retain_self_loops:
        pooled_a = sparse.strip_diagonal(pooled_a)
    return PoolResult(
        x=diff.gather_rows(gated, kept.indices),
        a=pooled_a,
        kept=kept,
        scores=h,
        graph_id=gid[kept.indices],
    )


def lcpool(
    x: Tensor,
    a: CsrMatrix,
    scorer: Lcsmp,
    ratio: float,
    graph_id,
    retain_self_loops: bool = False,
) -> PoolResult:
    """Local cluster pooling: the cluster step is dismissed entirely.

    A 1-hop convolution ahead of the pool already plays the cluster role,
    so the raw features are gated by the score directly.
    """
    if not sparse.is_symmetric(a):
        raise ValueError("this pool expects an undirected (symmetric) adjacency")
    return local_cluster_selection_pool(
        x, a, lambda t, _a: t, scorer, ratio, graph_id, retain_self_loops
    )


def lcpool_star(
    x: Tensor,
    a: CsrMatrix,
    cluster_conv: GcnConv,
    scorer: Lcsmp,
    ratio: float,
    graph_id,
    retain_self_loops: bool = False,
) -> PoolResult:
    """Variant with an explicit extra convolution as the cluster function.

    The convolved features are both scored and gated; the pooled adjacency
    is the same closure pattern as :func:`lcpool` for the same kept set.
    """
    if not sparse.is_symmetric(a):
        raise ValueError("this pool expects an undirected (symmetric) adjacency")
    return local_cluster_selection_pool(
        x, a, cluster_conv, scorer, ratio, graph_id, retain_self_loops
    )
