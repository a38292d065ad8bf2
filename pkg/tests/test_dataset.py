import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphpool import sparse
from graphpool.dataset import (
    Graph,
    load_tudataset,
    make_batch,
    make_synthetic,
    split,
)
from graphpool.sparse import CsrMatrix, IndexSet

DATA_ROOT = os.environ.get("GRAPHPOOL_DATA", "data")


def write_fixture(root, name, files):
    base = root / name
    base.mkdir(parents=True)
    for suffix, content in files.items():
        (base / f"{name}_{suffix}.txt").write_text(content)
    return str(root)


@pytest.fixture
def two_graph_root(tmp_path):
    """Triangle (nodes 1-3) plus a single edge (nodes 4-5)."""
    return write_fixture(tmp_path, "tiny", {
        "A": "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n",
        "graph_indicator": "1\n1\n1\n2\n2\n",
        "graph_labels": "3\n7\n",
        "node_labels": "0\n1\n0\n2\n1\n",
        "node_attributes": "0.5\n1.5\n2.5\n3.5\n4.5\n",
    })


class TestLoader:
    def test_two_graph_fixture(self, two_graph_root):
        ds = load_tudataset(two_graph_root, "tiny")
        assert len(ds) == 2
        assert ds.num_classes == 2
        assert ds.feature_dim == 4  # 3 node-label values one-hot + 1 attribute
        tri, pair = ds.graphs
        assert (tri.num_nodes, pair.num_nodes) == (3, 2)
        assert (tri.label, pair.label) == (0, 1)
        assert np.array_equal(sparse.to_dense(tri.a), [[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        assert np.array_equal(sparse.to_dense(pair.a), [[0, 1], [1, 0]])
        assert np.array_equal(tri.x, [
            [1, 0, 0, 0.5], [0, 1, 0, 1.5], [1, 0, 0, 2.5],
        ])
        assert np.array_equal(pair.x, [[0, 0, 1, 3.5], [0, 1, 0, 4.5]])

    def test_one_directional_edges_are_symmetrized(self, tmp_path):
        root = write_fixture(tmp_path, "oneway", {
            "A": "1, 2\n",
            "graph_indicator": "1\n1\n",
            "graph_labels": "0\n",
        })
        g = load_tudataset(root, "oneway").graphs[0]
        assert sparse.is_symmetric(g.a)
        assert g.a.nnz == 2

    def test_self_loops_dropped(self, tmp_path):
        root = write_fixture(tmp_path, "loopy", {
            "A": "1, 1\n1, 2\n2, 1\n",
            "graph_indicator": "1\n1\n",
            "graph_labels": "0\n",
        })
        g = load_tudataset(root, "loopy").graphs[0]
        assert np.array_equal(sparse.to_dense(g.a), [[0, 1], [1, 0]])

    def test_constant_feature_fallback(self, tmp_path):
        root = write_fixture(tmp_path, "bare", {
            "A": "1, 2\n2, 1\n",
            "graph_indicator": "1\n1\n",
            "graph_labels": "5\n",
        })
        ds = load_tudataset(root, "bare")
        assert ds.feature_dim == 1
        assert np.array_equal(ds.graphs[0].x, [[1.0], [1.0]])

    def test_missing_mandatory_file(self, tmp_path):
        root = write_fixture(tmp_path, "broken", {
            "A": "1, 2\n",
            "graph_indicator": "1\n1\n",
        })
        with pytest.raises(FileNotFoundError):
            load_tudataset(root, "broken")

    def test_cross_graph_edge_rejected(self, tmp_path):
        root = write_fixture(tmp_path, "crossed", {
            "A": "1, 2\n2, 1\n2, 3\n",
            "graph_indicator": "1\n1\n2\n",
            "graph_labels": "0\n1\n",
        })
        with pytest.raises(ValueError, match="crosses graph boundaries"):
            load_tudataset(root, "crossed")

    def test_loaded_adjacency_is_symmetric(self, two_graph_root):
        ds = load_tudataset(two_graph_root, "tiny")
        assert all(sparse.is_symmetric(g.a) for g in ds.graphs)


@pytest.mark.skipif(
    not os.path.isdir(os.path.join(DATA_ROOT, "PROTEINS")),
    reason="PROTEINS files not present under the data root",
)
def test_proteins_statistics():
    ds = load_tudataset(DATA_ROOT, "PROTEINS")
    assert len(ds) == 1113
    assert ds.num_classes == 2
    assert abs(ds.mean_nodes - 39.06) < 0.01


@pytest.mark.skipif(
    not os.path.isdir(os.path.join(DATA_ROOT, "ENZYMES")),
    reason="ENZYMES files not present under the data root",
)
def test_enzymes_statistics():
    ds = load_tudataset(DATA_ROOT, "ENZYMES")
    assert len(ds) == 600
    assert ds.num_classes == 6


class TestBatch:
    def test_single_graph_batch(self):
        ds = make_synthetic("cycles_vs_paths", 2, seed=0)
        g = ds.graphs[0]
        batch = make_batch([g])
        assert np.array_equal(batch.x, g.x)
        assert sparse.equal(batch.a, g.a)
        assert np.array_equal(batch.graph_id, np.zeros(g.num_nodes))
        assert batch.graph_count == 1

    def test_triangle_plus_edge_block_structure(self):
        tri = Graph(3, np.ones((3, 1)), sparse.from_dense(
            np.ones((3, 3)) - np.eye(3)), 0)
        pair = Graph(2, np.ones((2, 1)), sparse.from_dense(
            np.array([[0.0, 1.0], [1.0, 0.0]])), 1)
        batch = make_batch([tri, pair])
        assert batch.a.shape == (5, 5)
        rows = sparse.row_indices(batch.a)
        cols = batch.a.col_idx
        first = (rows < 3) & (cols < 3)
        second = (rows >= 3) & (cols >= 3)
        assert np.all(first | second)
        assert np.array_equal(batch.graph_id, [0, 0, 0, 1, 1])
        assert np.array_equal(batch.labels, [0, 1])

    def test_batch_slicing_round_trip(self):
        ds = make_synthetic("two_communities", 6, seed=3)
        batch = make_batch(ds.graphs)
        start = 0
        for g in ds.graphs:
            stop = start + g.num_nodes
            assert np.array_equal(batch.x[start:stop], g.x)
            block = sparse.select_rows_cols(batch.a, IndexSet(np.arange(start, stop)))
            assert sparse.equal(block, g.a)
            start = stop

    def test_feature_dim_mismatch(self):
        a = CsrMatrix.empty(1, 1)
        with pytest.raises(ValueError):
            make_batch([Graph(1, np.ones((1, 1)), a, 0), Graph(1, np.ones((1, 2)), a, 0)])

    def test_empty_graph_rejected_at_construction(self):
        with pytest.raises(ValueError):
            Graph(0, np.ones((0, 1)), CsrMatrix.empty(0, 0), 0)

    def test_weighted_graph_rejected(self):
        a = CsrMatrix.from_coo(2, 2, [0, 1], [1, 0], [2.0, 2.0])
        with pytest.raises(ValueError):
            Graph(2, np.ones((2, 1)), a, 0)


class TestSplit:
    def test_600_splits_480_60_60(self):
        ds = make_synthetic("cycles_vs_paths", 600, seed=0)
        train, val, test = split(ds, (0.8, 0.1, 0.1), seed=1)
        assert (len(train), len(val), len(test)) == (480, 60, 60)

    def test_deterministic(self):
        ds = make_synthetic("cycles_vs_paths", 50, seed=0)
        a = split(ds, (0.8, 0.1, 0.1), seed=9)
        b = split(ds, (0.8, 0.1, 0.1), seed=9)
        for part_a, part_b in zip(a, b):
            assert [id(g) for g in part_a.graphs] == [id(g) for g in part_b.graphs]

    def test_ten_graphs(self):
        ds = make_synthetic("cycles_vs_paths", 10, seed=0)
        sizes = tuple(len(p) for p in split(ds, (0.8, 0.1, 0.1), seed=0))
        assert sizes == (8, 1, 1)

    def test_empty_part_rejected(self):
        ds = make_synthetic("cycles_vs_paths", 4, seed=0)
        with pytest.raises(ValueError):
            split(ds, (0.8, 0.1, 0.1), seed=0)

    def test_bad_ratios_rejected(self):
        ds = make_synthetic("cycles_vs_paths", 30, seed=0)
        with pytest.raises(ValueError):
            split(ds, (0.8, 0.1, 0.2), seed=0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(10, 200), st.integers(0, 10_000))
    def test_partition_property(self, n, seed):
        ds = make_synthetic("cycles_vs_paths", n, seed=0)
        parts = split(ds, (0.8, 0.1, 0.1), seed=seed)
        ids = [id(g) for part in parts for g in part.graphs]
        assert len(ids) == n
        assert set(ids) == {id(g) for g in ds.graphs}


class TestSynthetic:
    def test_cycles_vs_paths_balanced(self):
        ds = make_synthetic("cycles_vs_paths", 200, seed=7)
        labels = np.array([g.label for g in ds.graphs])
        assert len(ds) == 200
        assert int(labels.sum()) == 100
        assert ds.num_classes == 2

    def test_cycle_instance_degrees(self):
        ds = make_synthetic("cycles_vs_paths", 2, seed=1)
        ring = ds.graphs[0]
        degrees = np.diff(ring.a.row_ptr)
        assert ring.a.nnz == 2 * ring.num_nodes  # n undirected edges
        assert np.all(degrees == 2)

    def test_path_instance_endpoints(self):
        ds = make_synthetic("cycles_vs_paths", 2, seed=1)
        path = ds.graphs[1]
        degrees = np.diff(path.a.row_ptr)
        assert path.a.nnz == 2 * (path.num_nodes - 1)
        assert int(np.sum(degrees == 1)) == 2

    def test_two_communities_bridges(self):
        ds = make_synthetic("two_communities", 20, seed=5)
        assert all(sparse.is_symmetric(g.a) for g in ds.graphs)
        assert {g.label for g in ds.graphs} == {0, 1}

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_synthetic("nope", 10, seed=0)
