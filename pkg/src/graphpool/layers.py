"""Graph convolution and scoring layers.

Layers own their Parameters and are callable on (features, adjacency).
Adjacency matrices are constants: gradients flow through features only.
"""

from __future__ import annotations

import numpy as np

from . import diff, sparse
from .diff import Parameter, Tensor
from .sparse import CsrMatrix


class Linear:
    """x @ W^T + b with W of shape (out_dim, in_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng, name: str, bias: bool = True):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Parameter(f"{name}.w", rng.uniform(-bound, bound, (out_dim, in_dim)))
        self.bias = Parameter(f"{name}.b", np.zeros((1, out_dim))) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = diff.matmul(x, diff.transpose(self.weight.tensor))
        if self.bias is not None:
            out = diff.add_bias(out, self.bias.tensor)
        return out

    def parameters(self) -> list[Parameter]:
        params = [self.weight]
        if self.bias is not None:
            params.append(self.bias)
        return params


class Mlp:
    """Chain of Linear layers with ReLU between them, none after the last."""

    def __init__(self, widths, rng, name: str):
        widths = list(widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        self.layers = [
            Linear(w_in, w_out, rng, f"{name}.{i}")
            for i, (w_in, w_out) in enumerate(zip(widths, widths[1:]))
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = diff.relu(layer(x))
        return self.layers[-1](x)

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]


def gcn_normalized(a: CsrMatrix) -> CsrMatrix:
    """D^-1/2 (A + I) D^-1/2 with degrees taken from A + I."""
    ah = sparse.add_self_loops(a)
    rows = sparse.row_indices(ah)
    deg = np.zeros(ah.n_rows)
    np.add.at(deg, rows, ah.values)
    scaled = ah.values / np.sqrt(deg[rows] * deg[ah.col_idx])
    return CsrMatrix(ah.n_rows, ah.n_cols, ah.row_ptr, ah.col_idx, scaled)


class GcnConv:
    """Degree-normalized convolution with self-loops: norm(A) @ X @ W^T."""

    def __init__(self, in_dim: int, out_dim: int, rng, name: str):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Parameter(f"{name}.w", rng.uniform(-bound, bound, (out_dim, in_dim)))

    def __call__(self, x: Tensor, a: CsrMatrix) -> Tensor:
        agg = diff.spmm_const(gcn_normalized(a), x)
        return diff.matmul(agg, diff.transpose(self.weight.tensor))

    def parameters(self) -> list[Parameter]:
        return [self.weight]


class GraphConv:
    """x_i' = W1^T x_i + W2^T sum of neighbour features."""

    def __init__(self, in_dim: int, out_dim: int, rng, name: str):
        bound = 1.0 / np.sqrt(in_dim)
        self.w_root = Parameter(f"{name}.w1", rng.uniform(-bound, bound, (out_dim, in_dim)))
        self.w_nbr = Parameter(f"{name}.w2", rng.uniform(-bound, bound, (out_dim, in_dim)))

    def __call__(self, x: Tensor, a: CsrMatrix) -> Tensor:
        own = diff.matmul(x, diff.transpose(self.w_root.tensor))
        agg = diff.matmul(diff.spmm_const(a, x), diff.transpose(self.w_nbr.tensor))
        return diff.add(own, agg)

    def parameters(self) -> list[Parameter]:
        return [self.w_root, self.w_nbr]


def laplacian(a: CsrMatrix) -> CsrMatrix:
    """D - A for the stored (non-negative) edge weights."""
    rows = sparse.row_indices(a)
    deg = np.zeros(a.n_rows)
    np.add.at(deg, rows, a.values)
    diag = np.arange(a.n_rows, dtype=np.int64)
    return CsrMatrix.from_coo(
        a.n_rows,
        a.n_cols,
        np.concatenate([diag, rows]),
        np.concatenate([diag, a.col_idx]),
        np.concatenate([deg, -a.values]),
    )


def laplacian_score(x: Tensor, a: CsrMatrix, w: Parameter) -> Tensor:
    """Per-node score (L @ X) @ w^T; a plain sum of neighbour differences.

    Kept as a diagnostic: opposite differences cancel before the projection,
    so distinct neighbourhoods can collapse onto the same score.
    """
    h = diff.spmm_const(laplacian(a), x)
    return diff.matmul(h, diff.transpose(w.tensor))


class Lcsmp:
    """Message-passing score layer over local feature differences.

    Each edge carries relu(L_d(x_i - x_k)); the per-node sum goes through
    L_fd, is added to relu(L_x(x_i)), and L_s projects to one score per
    node.  The softmax over each graph's nodes is applied by __call__.
    """

    def __init__(self, in_dim: int, rng, name: str, hidden: int | None = None):
        hidden = in_dim if hidden is None else hidden
        self.l_diff = Linear(in_dim, hidden, rng, f"{name}.ld")
        self.l_agg = Linear(hidden, hidden, rng, f"{name}.lfd")
        self.l_self = Linear(in_dim, hidden, rng, f"{name}.lx")
        self.l_score = Linear(hidden, 1, rng, f"{name}.ls")

    def pre_softmax(self, x: Tensor, a: CsrMatrix) -> Tensor:
        targets = sparse.row_indices(a)
        neighbours = a.col_idx
        xi = diff.gather_rows(x, targets)
        xk = diff.gather_rows(x, neighbours)
        messages = diff.relu(self.l_diff(diff.sub(xi, xk)))
        agg = diff.scatter_sum(messages, targets, x.rows)
        hidden = diff.add(diff.relu(self.l_agg(agg)), diff.relu(self.l_self(x)))
        return self.l_score(hidden)

    def __call__(self, x: Tensor, a: CsrMatrix, graph_id) -> Tensor:
        return diff.segment_softmax(self.pre_softmax(x, a), graph_id)

    def parameters(self) -> list[Parameter]:
        return [
            p
            for layer in (self.l_diff, self.l_agg, self.l_self, self.l_score)
            for p in layer.parameters()
        ]


def readout(x: Tensor, graph_id, n_graphs: int | None = None) -> Tensor:
    """Per-graph concat(mean, max) over node features; width doubles."""
    return diff.concat_cols(
        diff.segment_mean(x, graph_id, n_graphs),
        diff.segment_max(x, graph_id, n_graphs),
    )
