import numpy as np
import pytest

from helpers import cycle, path4, random_adjacency_dense
from graphpool import diff, sparse
from graphpool.diff import Parameter, constant
from graphpool.layers import (
    GcnConv,
    GraphConv,
    Lcsmp,
    Linear,
    Mlp,
    gcn_normalized,
    laplacian,
    laplacian_score,
    readout,
)
from graphpool.sparse import CsrMatrix


def star3():
    """Centre node 0 connected to nodes 1 and 2."""
    return sparse.from_dense(np.array([
        [0, 1, 1], [1, 0, 0], [1, 0, 0],
    ], dtype=np.float64))


def set_weight(layer, w, b=None):
    layer.weight.tensor.values = np.asarray(w, dtype=np.float64)
    if b is not None and layer.bias is not None:
        layer.bias.tensor.values = np.asarray(b, dtype=np.float64)


class TestGcnConv:
    def test_single_node_identity_weight(self):
        conv = GcnConv(2, 2, np.random.default_rng(0), "c")
        conv.weight.tensor.values = np.eye(2)
        x = constant([[3.0, -1.0]])
        out = conv(x, CsrMatrix.empty(1, 1))
        assert np.allclose(out.values, x.values)  # degree 1 normalization

    def test_connected_pair_symmetry(self):
        conv = GcnConv(2, 3, np.random.default_rng(1), "c")
        a = sparse.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
        out = conv(constant([[1.0, 2.0], [1.0, 2.0]]), a)
        assert np.allclose(out.values[0], out.values[1])

    def test_path_matches_dense_normalization_oracle(self):
        conv = GcnConv(1, 1, np.random.default_rng(2), "c")
        conv.weight.tensor.values = np.array([[1.0]])
        x = np.array([[1.0], [2.0], [3.0], [4.0]])
        a_hat = sparse.to_dense(path4()) + np.eye(4)
        d_inv = np.diag(1.0 / np.sqrt(a_hat.sum(axis=1)))
        expected = d_inv @ a_hat @ d_inv @ x
        out = conv(constant(x), path4())
        assert np.allclose(out.values, expected, atol=1e-12)

    def test_normalized_adjacency_rows(self):
        norm = gcn_normalized(path4())
        # endpoint row: self 1/2, neighbour 1/sqrt(2*3)
        dense = sparse.to_dense(norm)
        assert abs(dense[0, 0] - 0.5) < 1e-12
        assert abs(dense[0, 1] - 1.0 / np.sqrt(6.0)) < 1e-12


class TestGraphConv:
    def test_isolated_node_keeps_own_transform(self):
        conv = GraphConv(2, 2, np.random.default_rng(3), "c")
        x = constant([[1.0, 2.0]])
        out = conv(x, CsrMatrix.empty(1, 1))
        assert np.allclose(out.values, x.values @ conv.w_root.tensor.values.T)

    def test_swap_on_pair(self):
        conv = GraphConv(2, 2, np.random.default_rng(4), "c")
        conv.w_root.tensor.values = np.zeros((2, 2))
        conv.w_nbr.tensor.values = np.eye(2)
        a = sparse.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = conv(constant(x), a)
        assert np.array_equal(out.values, x[::-1])

    def test_random_graph_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        conv = GraphConv(3, 2, rng, "c")
        ad = random_adjacency_dense(rng, 5, p=0.5)
        x = rng.normal(size=(5, 3))
        expected = x @ conv.w_root.tensor.values.T + ad @ x @ conv.w_nbr.tensor.values.T
        out = conv(constant(x), sparse.from_dense(ad))
        assert np.allclose(out.values, expected, atol=1e-12)


class TestLaplacianScore:
    def test_constant_features_score_zero(self):
        w = Parameter("w", np.ones((1, 3)))
        scores = laplacian_score(constant(np.full((6, 3), 2.5)), cycle(6), w)
        assert np.array_equal(scores.values, np.zeros((6, 1)))

    def test_star_centre_differences_cancel(self):
        # neighbours 0 and 2 average to the centre value 1: score exactly 0
        w = Parameter("w", np.ones((1, 1)))
        scores = laplacian_score(constant([[1.0], [0.0], [2.0]]), star3(), w)
        assert scores.values[0, 0] == 0.0

    def test_pair_scores(self):
        w = Parameter("w", np.ones((1, 1)))
        a = sparse.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
        scores = laplacian_score(constant([[0.0], [1.0]]), a, w)
        assert np.array_equal(scores.values, [[-1.0], [1.0]])

    def test_laplacian_matrix(self):
        lap = sparse.to_dense(laplacian(path4()))
        ad = sparse.to_dense(path4())
        assert np.array_equal(lap, np.diag(ad.sum(axis=1)) - ad)


class TestLcsmp:
    def test_identical_features_uniform_scores(self):
        rng = np.random.default_rng(6)
        scorer = Lcsmp(2, rng, "s")
        for p in scorer.parameters():
            p.tensor.values = rng.normal(size=p.tensor.shape)
        h = scorer(constant(np.full((6, 2), 1.5)), cycle(6), np.zeros(6, dtype=np.int64))
        assert np.allclose(h.values, 1.0 / 6.0, atol=1e-12)

    def test_scores_sum_to_one_per_graph(self):
        rng = np.random.default_rng(7)
        scorer = Lcsmp(3, rng, "s")
        from graphpool.dataset import make_batch, make_synthetic
        batch = make_batch(make_synthetic("two_communities", 4, seed=2).graphs)
        x = constant(np.hstack([batch.x, rng.normal(size=(batch.x.shape[0], 2))]))
        h = scorer(x, batch.a, batch.graph_id).values.ravel()
        sums = np.bincount(batch.graph_id, weights=h)
        assert np.all(np.abs(sums - 1.0) < 1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        scorer = Lcsmp(3, rng, "s")
        for p in scorer.parameters():
            p.tensor.values = rng.normal(size=p.tensor.shape)
        for _ in range(10):
            ad = random_adjacency_dense(rng, 8, p=0.4)
            x = rng.normal(size=(8, 3))
            perm = rng.permutation(8)
            base = scorer.pre_softmax(constant(x), sparse.from_dense(ad)).values
            permuted = scorer.pre_softmax(
                constant(x[perm]), sparse.from_dense(ad[np.ix_(perm, perm)])
            ).values
            assert np.allclose(permuted, base[perm], atol=1e-10)

    def test_gradients_reach_all_four_layers(self):
        from graphpool.selfcheck import gradient_max_rel_err
        rng = np.random.default_rng(9)
        scorer = Lcsmp(2, rng, "s", hidden=3)
        for p in scorer.parameters():
            p.tensor.values = rng.normal(size=p.tensor.shape)
        ad = random_adjacency_dense(rng, 6, p=0.5)
        x = constant(rng.normal(size=(6, 2)))
        a = sparse.from_dense(ad)
        proj = rng.normal(size=(6, 1))
        gid = np.zeros(6, dtype=np.int64)

        def builder():
            return diff.sum_all(diff.mul(scorer(x, a, gid), constant(proj)))

        tensors = [p.tensor for p in scorer.parameters()]
        assert gradient_max_rel_err(builder, tensors) < 1e-4


class TestOneHopLocality:
    """Zeroing features beyond one hop must not change a node's output row."""

    @pytest.mark.parametrize("kind", ["gcn", "graphconv"])
    def test_far_features_do_not_matter(self, kind):
        rng = np.random.default_rng(10)
        ad = sparse.to_dense(path4())
        x = rng.normal(size=(4, 2))
        if kind == "gcn":
            conv = GcnConv(2, 2, rng, "c")
        else:
            conv = GraphConv(2, 2, rng, "c")
        node = 0
        near = {0, 1}  # node 0 and its single neighbour on the path
        x_far_zeroed = x.copy()
        for j in range(4):
            if j not in near:
                x_far_zeroed[j] = 0.0
        full = conv(constant(x), path4()).values[node]
        masked = conv(constant(x_far_zeroed), path4()).values[node]
        assert np.allclose(full, masked, atol=1e-12)


class TestMlpAndReadout:
    def test_identity_mlp_passthrough(self):
        mlp = Mlp([3, 3], np.random.default_rng(11), "m")
        set_weight(mlp.layers[0], np.eye(3), np.zeros((1, 3)))
        x = constant(np.arange(6, dtype=np.float64).reshape(2, 3))
        assert np.array_equal(mlp(x).values, x.values)

    def test_relu_between_but_not_after(self):
        mlp = Mlp([1, 1, 1], np.random.default_rng(12), "m")
        set_weight(mlp.layers[0], [[1.0]], [[0.0]])
        set_weight(mlp.layers[1], [[1.0]], [[0.0]])
        out = mlp(constant([[-2.0]]))
        assert out.values[0, 0] == 0.0  # relu clipped between layers
        set_weight(mlp.layers[1], [[-1.0]], [[0.0]])
        out = mlp(constant([[2.0]]))
        assert out.values[0, 0] == -2.0  # but not after the last

    def test_single_node_readout_duplicates_row(self):
        x = constant([[1.0, 2.0]])
        out = readout(x, [0], 1)
        assert np.array_equal(out.values, [[1.0, 2.0, 1.0, 2.0]])

    def test_mean_then_max_blocks(self):
        out = readout(constant([[1.0], [3.0]]), [0, 0], 1)
        assert np.array_equal(out.values, [[2.0, 3.0]])

    def test_linear_matches_formula(self):
        rng = np.random.default_rng(13)
        layer = Linear(3, 2, rng, "l")
        x = rng.normal(size=(4, 3))
        expected = x @ layer.weight.tensor.values.T + layer.bias.tensor.values
        assert np.allclose(layer(constant(x)).values, expected)
