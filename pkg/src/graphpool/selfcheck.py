"""Oracle and property suites backing the CLI selftest.

Every check recomputes its expectation through an independent dense-numpy
route and compares the library's sparse/tape route against it.  Checks
return :class:`CheckResult` so callers can print one pass/fail line each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diff, harness, pooling, sparse
from .dataset import make_synthetic
from .diff import Tape, Tensor, backward, cross_entropy
from .layers import Lcsmp, laplacian_score
from .sparse import CsrMatrix, IndexSet


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# random inputs


def random_integer_csr(rng, n_rows, n_cols, density=0.3, lo=-3, hi=3) -> CsrMatrix:
    dense = rng.integers(lo, hi + 1, (n_rows, n_cols)).astype(np.float64)
    dense *= rng.random((n_rows, n_cols)) < density
    return sparse.from_dense(dense)


def random_adjacency(rng, n, p=0.35, directed=False) -> CsrMatrix:
    """Unweighted adjacency without self-loops, symmetric unless directed."""
    dense = rng.random((n, n)) < p
    np.fill_diagonal(dense, False)
    if not directed:
        dense |= dense.T
    return sparse.from_dense(dense.astype(np.float64))


def random_index_set(rng, n, k=None) -> IndexSet:
    k = int(rng.integers(1, n + 1)) if k is None else k
    return IndexSet(np.sort(rng.choice(n, size=k, replace=False)))


def _linear_score(rng, dim):
    w = rng.normal(size=(dim, 1))
    return lambda x, _a, _gid: diff.matmul(x, diff.constant(w))


# ---------------------------------------------------------------------------
# sparse-route vs dense-route checks


def check_selection_commutes(trials: int = 500, seed: int = 1) -> CheckResult:
    """Selecting assignment columns before or after the product must agree."""
    rng = np.random.default_rng(seed)
    for t in range(trials):
        n = int(rng.integers(1, 41))
        s = random_integer_csr(rng, n, n)
        a = random_integer_csr(rng, n, n)
        idx = random_index_set(rng, n)
        s_kept = sparse.select_cols(s, idx)
        via_sparse = sparse.spgemm(sparse.spgemm(sparse.transpose(s_kept), a), s_kept)
        sd, ad = sparse.to_dense(s), sparse.to_dense(a)
        via_dense = (sd.T @ ad @ sd)[np.ix_(idx.indices, idx.indices)]
        if not np.array_equal(sparse.to_dense(via_sparse), via_dense):
            return CheckResult("selection-commutation", False, f"mismatch at trial {t}")
    return CheckResult("selection-commutation", True, f"{trials} random triples exact")


def check_identity_assignment(trials: int = 200, seed: int = 2) -> CheckResult:
    """Identity assignment must reduce to plain node selection bit-exactly."""
    rng = np.random.default_rng(seed)
    for t in range(trials):
        n = int(rng.integers(2, 16))
        d = int(rng.integers(1, 5))
        a = random_adjacency(rng, n)
        x_values = rng.normal(size=(n, d))
        gid = np.zeros(n, dtype=np.int64)
        ratio = float(rng.choice([0.3, 0.5, 0.7, 1.0]))
        score_fn = _linear_score(rng, d)
        via_identity = pooling.local_assignment_selection_pool(
            diff.constant(x_values), a, lambda _x, adj: CsrMatrix.identity(adj.n_rows),
            score_fn, ratio, gid,
        )
        direct = pooling.node_selection_pool(diff.constant(x_values), a, score_fn, ratio, gid)
        same = (
            np.array_equal(via_identity.x.values, direct.x.values)
            and sparse.equal(via_identity.a, direct.a)
            and np.array_equal(via_identity.kept.indices, direct.kept.indices)
        )
        if not same:
            return CheckResult("identity-assignment", False, f"mismatch at trial {t}")
    return CheckResult("identity-assignment", True, f"{trials} random graphs bit-exact")


def _dense_closure_pattern(ad: np.ndarray) -> np.ndarray:
    star = np.eye(ad.shape[0]) + ad
    return (star.T @ ad @ star) != 0


def check_closure_pattern(trials: int = 200, seed: int = 3) -> CheckResult:
    """Three-hop closure pattern vs the dense (I+A)^T A (I+A) oracle."""
    rng = np.random.default_rng(seed)
    for directed in (False, True):
        for t in range(trials):
            n = int(rng.integers(1, 21))
            a = random_adjacency(rng, n, directed=directed)
            idx = random_index_set(rng, n)
            closure = sparse.hop_closure(a, symmetric=not directed)
            got = sparse.to_dense(sparse.select_rows_cols(closure, idx)) != 0
            ad = sparse.to_dense(a)
            want = _dense_closure_pattern(ad)[np.ix_(idx.indices, idx.indices)]
            if not np.array_equal(got, want):
                return CheckResult(
                    "closure-pattern", False, f"directed={directed} trial {t}"
                )
            if not directed:
                alt = sparse.hop_closure(a, symmetric=False)
                if not np.array_equal(sparse.to_dense(alt) != 0, _dense_closure_pattern(ad)):
                    return CheckResult(
                        "closure-pattern", False, f"symmetric formulas differ, trial {t}"
                    )
    return CheckResult("closure-pattern", True, f"{trials} undirected + {trials} directed graphs")


def check_contributor_connectivity(trials: int = 200, seed: int = 4) -> CheckResult:
    """Kept nodes with connected contributors must gain an edge, and every
    original edge between kept nodes must survive."""
    rng = np.random.default_rng(seed)
    pair_hits = pair_total = edge_hits = edge_total = 0
    for _ in range(trials):
        n = int(rng.integers(2, 16))
        a = random_adjacency(rng, n)
        # strict-local assignment: positive weight everywhere on I + A
        star = sparse.add_self_loops(a)
        s = CsrMatrix(n, n, star.row_ptr, star.col_idx, rng.uniform(0.1, 1.0, star.nnz))
        d = int(rng.integers(1, 4))
        result = pooling.local_assignment_selection_pool(
            diff.constant(rng.normal(size=(n, d))), a, lambda _x, _a: s,
            _linear_score(rng, d), 0.5, np.zeros(n, dtype=np.int64),
        )
        kept = result.kept.indices
        ad = sparse.to_dense(a)
        contrib = sparse.to_dense(s)[:, kept] > 0
        connected = contrib.T @ ad @ contrib > 0
        pooled = sparse.to_dense(result.a) != 0
        off_diag = ~np.eye(kept.size, dtype=bool)
        pair_total += int(np.sum(connected & off_diag))
        pair_hits += int(np.sum(connected & off_diag & pooled))
        original = ad[np.ix_(kept, kept)] != 0
        edge_total += int(original.sum())
        edge_hits += int(np.sum(original & pooled))
    passed = pair_hits == pair_total and edge_hits == edge_total
    return CheckResult(
        "contributor-connectivity", passed,
        f"{pair_hits}/{pair_total} connected pairs wired, "
        f"{edge_hits}/{edge_total} original edges kept",
    )


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference(loss_fn, tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar-returning forward wrt one tensor."""
    fd = np.zeros_like(tensor.values)
    for idx in np.ndindex(*tensor.values.shape):
        orig = tensor.values[idx]
        tensor.values[idx] = orig + eps
        up = loss_fn()
        tensor.values[idx] = orig - eps
        down = loss_fn()
        tensor.values[idx] = orig
        fd[idx] = (up - down) / (2.0 * eps)
    return fd


def gradient_max_rel_err(loss_builder, tensors, eps: float = 1e-5,
                         fd_floor: float = 1e-8) -> float:
    """Max relative error between tape and finite-difference gradients.

    loss_builder() must rebuild the forward pass from current tensor values
    and return the loss Tensor.  Elements with |fd| <= fd_floor are skipped.
    """
    for t in tensors:
        t.grad = None
    with Tape():
        loss = loss_builder()
    backward(loss)
    worst = 0.0
    for t in tensors:
        grad = np.zeros_like(t.values) if t.grad is None else t.grad.copy()
        fd = finite_difference(lambda: loss_builder().values[0, 0], t, eps)
        mask = np.abs(fd) > fd_floor
        if mask.any():
            rel = np.abs(fd - grad)[mask] / np.maximum(np.abs(fd), np.abs(grad))[mask]
            worst = max(worst, float(rel.max()))
    return worst


def _primitive_cases(rng):
    """(name, loss_builder, tensors) triples covering every primitive."""
    def proj(shape):  # fixed random projection to a scalar, drawn once per case
        r = rng.normal(size=shape)
        return lambda t: diff.sum_all(diff.mul(t, diff.constant(r)))

    cases = []
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(4, 2)))
    p = proj((3, 2))
    cases.append(("matmul", lambda: p(diff.matmul(a, b)), [a, b]))
    t1 = Tensor(rng.normal(size=(3, 4)))
    p_t = proj((4, 3))
    cases.append(("transpose", lambda: p_t(diff.transpose(t1)), [t1]))
    u = Tensor(rng.normal(size=(3, 4)))
    v = Tensor(rng.normal(size=(3, 4)))
    p_uv = proj((3, 4))
    cases.append(("add", lambda: p_uv(diff.add(u, v)), [u, v]))
    cases.append(("sub", lambda: p_uv(diff.sub(u, v)), [u, v]))
    cases.append(("mul", lambda: p_uv(diff.mul(u, v)), [u, v]))
    bias = Tensor(rng.normal(size=(1, 4)))
    cases.append(("add_bias", lambda: p_uv(diff.add_bias(u, bias)), [u, bias]))
    col = Tensor(rng.normal(size=(3, 1)))
    cases.append(("broadcast_col", lambda: p_uv(diff.broadcast_col(u, col)), [u, col]))
    r1 = Tensor(rng.normal(size=(4, 3)) + 0.2)
    p_r = proj((4, 3))
    cases.append(("relu", lambda: p_r(diff.relu(r1)), [r1]))
    cases.append(("tanh", lambda: p_r(diff.tanh(r1)), [r1]))
    cases.append(("row_softmax", lambda: p_r(diff.row_softmax(r1)), [r1]))
    cases.append(("sum_all", lambda: diff.sum_all(r1), [r1]))
    p_cat = proj((3, 8))
    cases.append(("concat_cols", lambda: p_cat(diff.concat_cols(u, v)), [u, v]))
    g1 = Tensor(rng.normal(size=(5, 3)))
    gather_idx = np.array([0, 2, 2, 4])
    p_g = proj((4, 3))
    cases.append(("gather_rows", lambda: p_g(diff.gather_rows(g1, gather_idx)), [g1]))
    scatter_idx = np.array([0, 0, 1, 3, 3])
    cases.append(("scatter_sum", lambda: p_g(diff.scatter_sum(g1, scatter_idx, 4)), [g1]))
    adj = random_adjacency(np.random.default_rng(7), 5, p=0.5)
    s1 = Tensor(rng.normal(size=(5, 2)))
    p_s = proj((5, 2))
    cases.append(("spmm_const", lambda: p_s(diff.spmm_const(adj, s1)), [s1]))
    seg = np.array([0, 0, 0, 1, 1])
    sm = Tensor(rng.normal(size=(5, 1)))
    p_sm = proj((5, 1))
    cases.append(("segment_softmax", lambda: p_sm(diff.segment_softmax(sm, seg)), [sm]))
    p_seg = proj((2, 2))
    cases.append(("segment_mean", lambda: p_seg(diff.segment_mean(s1, seg)), [s1]))
    cases.append(("segment_max", lambda: p_seg(diff.segment_max(s1, seg)), [s1]))
    assign = Tensor(rng.uniform(0.1, 1.0, size=(5, 2)))
    p_ar = proj((4, 2))
    cases.append((
        "assignment_reduce",
        lambda: p_ar(diff.assignment_reduce(assign, s1, seg, 2)),
        [assign, s1],
    ))
    logits = Tensor(rng.normal(size=(4, 3)))
    labels = np.array([0, 2, 1, 2])
    cases.append(("cross_entropy", lambda: cross_entropy(logits, labels), [logits]))
    return cases


def _grad_batch(rng, feature_dim=3):
    """Two small graphs (6 and 4 nodes) as one block-diagonal batch."""
    from .dataset import Graph, make_batch

    graphs = []
    for n in (6, 4):
        a = random_adjacency(rng, n, p=0.5)
        graphs.append(Graph(n, rng.normal(size=(n, feature_dim)), a, int(rng.integers(0, 2))))
    return make_batch(graphs)


_GRAD_CONFIGS = (
    ("plain+lcpool", harness.ModelConfig(
        backbone="plain", pool="lcpool", hidden=5, pre_mlp=(5,), post_mlp=(6, 5))),
    ("hierarchical+lcpool", harness.ModelConfig(
        backbone="hierarchical", pool="lcpool", hidden=5, pre_mlp=(5,), post_mlp=(6, 5))),
    ("hierarchical+lcpool_star", harness.ModelConfig(
        backbone="hierarchical", pool="lcpool_star", hidden=5, pre_mlp=(5,), post_mlp=(6, 5))),
)


def check_gradients(seed: int = 5, tol: float = 1e-4) -> CheckResult:
    """Primitives and three end-to-end models vs central finite differences."""
    rng = np.random.default_rng(seed)
    worst_name, worst = "", 0.0
    for name, builder, tensors in _primitive_cases(rng):
        err = gradient_max_rel_err(builder, tensors)
        if err > worst:
            worst_name, worst = name, err
        if err > tol:
            return CheckResult("gradient-suite", False, f"{name} rel err {err:.2e}")
    batch = _grad_batch(rng)
    for name, cfg in _GRAD_CONFIGS:
        model = harness.build_model(cfg, feature_dim=3, num_classes=2, seed=seed)
        # evaluate at a generic point: moderate random weights keep relu kinks
        # and selection boundaries far beyond the probe step without
        # saturating the softmax into vanishing gradients
        for p in model.parameters():
            p.tensor.values = 0.5 * rng.normal(size=p.tensor.shape)
        tensors = [p.tensor for p in model.parameters()]
        builder = lambda: cross_entropy(model.forward(batch), batch.labels)
        err = gradient_max_rel_err(builder, tensors)
        if err > worst:
            worst_name, worst = name, err
        if err > tol:
            return CheckResult("gradient-suite", False, f"{name} rel err {err:.2e}")
    return CheckResult("gradient-suite", True, f"worst rel err {worst:.2e} ({worst_name})")


# ---------------------------------------------------------------------------
# score separation, ranking fixture, size adaptivity, learning


def _star_pair():
    """Two 3-node stars whose neighbour values average to the centre value.

    A plain sum of neighbour differences is zero at both centres, so the
    linear score cannot tell the configurations apart.
    """
    a = sparse.from_dense(np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], np.float64))
    xa = np.array([[1.0], [0.0], [2.0]])
    xb = np.array([[1.0], [-1.0], [3.0]])
    return a, xa, xb


def check_score_separation(draws: int = 100, seed: int = 6) -> CheckResult:
    """The linear difference score collapses the star pair; the nonlinear
    message-passing score must separate it for almost all parameter draws."""
    a, xa, xb = _star_pair()
    w = diff.Parameter("w", np.ones((1, 1)))
    score_a = laplacian_score(diff.constant(xa), a, w).values[0, 0]
    score_b = laplacian_score(diff.constant(xb), a, w).values[0, 0]
    if score_a != 0.0 or score_b != 0.0:
        return CheckResult(
            "score-separation", False,
            f"linear scores should both cancel to zero, got {score_a}, {score_b}",
        )
    rng = np.random.default_rng(seed)
    separated = 0
    for _ in range(draws):
        scorer = Lcsmp(1, rng, "probe", hidden=4)
        for p in scorer.parameters():
            p.tensor.values = rng.normal(size=p.tensor.shape)
        sa = scorer.pre_softmax(diff.constant(xa), a).values[0, 0]
        sb = scorer.pre_softmax(diff.constant(xb), a).values[0, 0]
        if abs(sa - sb) > 1e-6:
            separated += 1
    return CheckResult(
        "score-separation", separated >= 95,
        f"{separated}/{draws} draws separate the pair (need >= 95)",
    )


# Benchmark accuracy table (percent) used as a regression fixture for the
# ranking routine; asapool has no ENZYMES entry.
RANKING_FIXTURE = {
    "nopool":     {"PROTEINS": 75.00, "ENZYMES": 70.17, "Mutagenicity": 78.02,
                   "DD": 73.56, "NCI1": 76.98, "COX2": 82.77},
    "topkpool":   {"PROTEINS": 74.73, "ENZYMES": 65.00, "Mutagenicity": 77.95,
                   "DD": 75.51, "NCI1": 77.64, "COX2": 82.77},
    "sagpool":    {"PROTEINS": 74.11, "ENZYMES": 65.50, "Mutagenicity": 78.13,
                   "DD": 75.93, "NCI1": 79.78, "COX2": 84.89},
    "asapool":    {"PROTEINS": 73.57, "Mutagenicity": 80.09,
                   "DD": 75.00, "NCI1": 79.00, "COX2": 84.47},
    "diffpool":   {"PROTEINS": 73.84, "ENZYMES": 71.00, "Mutagenicity": 79.22,
                   "DD": 72.37, "NCI1": 74.62, "COX2": 84.47},
    "mincutpool": {"PROTEINS": 74.82, "ENZYMES": 71.17, "Mutagenicity": 79.12,
                   "DD": 73.14, "NCI1": 76.16, "COX2": 83.19},
    "lcpool":     {"PROTEINS": 75.71, "ENZYMES": 66.67, "Mutagenicity": 79.52,
                   "DD": 74.15, "NCI1": 79.10, "COX2": 85.69},
}


def check_ranking_fixture(tol: float = 0.01) -> CheckResult:
    """Average ranks of the fixture table; lcpool must land on 2.33."""
    means = {
        ("hierarchical/gcn", ds, pool): acc
        for pool, row in RANKING_FIXTURE.items()
        for ds, acc in row.items()
    }
    table = harness.rank_table(means)
    got = table.average_rank[("hierarchical/gcn", "lcpool")]
    mincut = table.average_rank[("hierarchical/gcn", "mincutpool")]
    passed = abs(got - 2.33) <= tol and abs(mincut - 4.17) <= tol
    return CheckResult(
        "ranking-fixture", passed,
        f"lcpool average rank {got:.4f} (want 2.33), mincutpool {mincut:.4f} (want 4.17)",
    )


def check_size_adaptivity(trials: int = 50, seed: int = 8) -> CheckResult:
    """Per-graph kept counts must equal max(1, ceil(ratio * n)) exactly."""
    rng = np.random.default_rng(seed)
    from .dataset import Graph, make_batch

    for _ in range(trials):
        sizes = rng.integers(1, 12, size=int(rng.integers(1, 5)))
        ratio = float(rng.choice([0.2, 0.5, 0.8, 1.0]))
        graphs = [
            Graph(int(n), rng.normal(size=(int(n), 2)), random_adjacency(rng, int(n)), 0)
            for n in sizes
        ]
        batch = make_batch(graphs)
        scorer = Lcsmp(2, rng, "probe")
        result = pooling.lcpool(diff.constant(batch.x), batch.a, scorer, ratio, batch.graph_id)
        counts = np.bincount(result.graph_id, minlength=len(sizes))
        expected = np.array([pooling.kept_count(ratio, int(n)) for n in sizes])
        if not np.array_equal(counts, expected):
            return CheckResult("size-adaptivity", False, f"counts {counts} != {expected}")
    return CheckResult("size-adaptivity", True, f"{trials} random batches match the formula")


def check_synthetic_learning(runs: int = 3, seed: int = 0, max_epochs: int = 200,
                             n_graphs: int = 200) -> CheckResult:
    """Ring-vs-path classification must reach mean test accuracy >= 0.90."""
    dataset = make_synthetic("cycles_vs_paths", n_graphs, seed=11)
    cfg = harness.TrainConfig(max_epochs=max_epochs, seed=seed)
    records = harness.evaluate_suite(
        [harness.ModelConfig(backbone="hierarchical", pool="lcpool")],
        [dataset], runs, cfg,
    )
    accs = [r.test_accuracy for r in records]
    times = [r.wall_time for r in records]
    mean = float(np.mean(accs))
    passed = mean >= 0.90 and max(times) < 300.0
    return CheckResult(
        "synthetic-learning", passed,
        f"mean accuracy {mean:.3f} over {runs} runs, slowest run {max(times):.0f}s",
    )


FAST_CHECKS = (
    check_selection_commutes,
    check_identity_assignment,
    check_closure_pattern,
    check_contributor_connectivity,
    check_gradients,
    check_score_separation,
    check_ranking_fixture,
    check_size_adaptivity,
)


def run_selftest(full: bool = False) -> list[CheckResult]:
    results = [check() for check in FAST_CHECKS]
    if full:
        results.append(check_synthetic_learning())
    return results
