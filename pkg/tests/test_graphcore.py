"""Batch graphs and derived operators: hand oracles and structural invariants."""

import numpy as np
import pytest

from rdflow.errors import ContractViolation, GraphDegreeError, NumericFailure
from rdflow.graphcore import (
    Adjacency,
    AttentionGraph,
    IncidenceOperator,
    KnnGraph,
    build_knn_adjacency,
    full_adjacency,
    identity_adjacency,
    normalized_laplacian,
    rwpe,
)
from conftest import char_poly_eigenvalues
from rdflow.numcore.tensor import Tensor
from rdflow.seeding import derive_rng
from rdflow.velocity import TimeEmbedding


def make_attention(seed=0, dim=2, width=4):
    rng = derive_rng(seed, "test-attention")
    return AttentionGraph(rng, dim, TimeEmbedding(2), proj_width=width)


# ---------------------------------------------------------------------------
# attention adjacency


def test_attention_identical_points_uniform_rows():
    graph = make_attention()
    pts = Tensor(np.ones((5, 2)) * 0.3)
    adj = graph.build(pts, 0.5)
    assert adj.kind == "attention"
    assert np.allclose(adj.weights.data, 1.0 / 5.0, atol=1e-12)


def test_attention_rows_sum_to_one():
    graph = make_attention(seed=1)
    pts = Tensor(derive_rng(2, "attn-pts").standard_normal((7, 2)))
    adj = graph.build(pts, 0.25)
    assert adj.row_stochastic
    assert np.allclose(adj.weights.data.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(adj.weights.data >= 0.0)


def test_attention_permutation_equivariance():
    graph = make_attention(seed=3)
    rng = derive_rng(4, "attn-perm")
    pts = rng.standard_normal((6, 2))
    perm = rng.permutation(6)
    base = graph.build(Tensor(pts), 0.7).weights.data
    permuted = graph.build(Tensor(pts[perm]), 0.7).weights.data
    assert np.allclose(permuted, base[perm][:, perm], atol=1e-9)


def test_attention_overflow_raises_numeric_failure():
    graph = make_attention(seed=5)
    pts = Tensor(np.full((3, 2), 1e300))
    with np.errstate(over="ignore"), pytest.raises(NumericFailure):
        graph.build(pts, 0.5)


# ---------------------------------------------------------------------------
# knn adjacency


def knn_oracle(x: np.ndarray, k: int, w: np.ndarray) -> np.ndarray:
    """Brute-force cosine top-k with rank weights, row-normalized."""
    n = len(x)
    norms = np.linalg.norm(x, axis=1)
    sims = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if norms[i] == 0.0 or norms[j] == 0.0:
                sims[i, j] = 0.0
            else:
                sims[i, j] = float(x[i] @ x[j]) / (norms[i] * norms[j])
    adj = np.zeros((n, n))
    for i in range(n):
        others = sorted((j for j in range(n) if j != i), key=lambda j: (-sims[i, j], j))
        adj[i, i] = abs(w[0])
        for rank, j in enumerate(others[:k], start=1):
            adj[i, j] += abs(w[rank])
        adj[i] /= adj[i].sum()
    return adj


def test_knn_three_point_example():
    # cosine table: row 0's best match is point 2, row 1's is point 2
    # (cos((0,1),(1,0.1)) ~ 0.0995 > cos((0,1),(1,0)) = 0), row 2's is point 0.
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.1]])
    adj = build_knn_adjacency(Tensor(pts), 1, Tensor(np.ones(2)))
    w = adj.weights.data
    assert w[0, 2] == 0.5 and w[0, 0] == 0.5
    assert w[1, 2] == 0.5 and w[1, 1] == 0.5
    assert w[2, 0] == 0.5 and w[2, 2] == 0.5


def test_knn_matches_brute_force_oracle():
    rng = derive_rng(6, "knn-oracle")
    for trial in range(10):
        n = int(rng.integers(3, 9))
        k = int(rng.integers(1, n))
        pts = rng.standard_normal((n, 2))
        w = rng.standard_normal(k + 1)
        got = build_knn_adjacency(Tensor(pts), k, Tensor(w.copy())).weights.data
        assert np.allclose(got, knn_oracle(pts, k, w), atol=1e-12), f"trial {trial}"


def test_knn_tie_breaks_to_lower_index():
    # rows 1 and 2 are both orthogonal to row 0: a perfect tie, resolved
    # toward the lower index.
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    adj = build_knn_adjacency(Tensor(pts), 1, Tensor(np.ones(2)))
    assert adj.weights.data[0, 1] == 0.5
    assert adj.weights.data[0, 2] == 0.0


def test_knn_k_zero_is_identity():
    pts = Tensor(derive_rng(7, "knn-k0").standard_normal((4, 2)))
    adj = build_knn_adjacency(pts, 0, Tensor(np.array([2.5])))
    assert np.array_equal(adj.weights.data, np.eye(4))


def test_knn_zero_norm_point_flagged():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.warns(RuntimeWarning):
        adj = build_knn_adjacency(Tensor(pts), 1, Tensor(np.ones(2)))
    assert "zero-norm-point" in adj.flags
    assert np.allclose(adj.weights.data.sum(axis=1), 1.0, atol=1e-12)


def test_knn_rows_sum_to_one_randomized():
    rng = derive_rng(8, "knn-rows")
    for _ in range(10):
        n = int(rng.integers(2, 10))
        k = int(rng.integers(0, n))
        pts = Tensor(rng.standard_normal((n, 3)))
        adj = build_knn_adjacency(pts, k, Tensor(rng.standard_normal(k + 1)))
        assert np.allclose(adj.weights.data.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(adj.weights.data >= 0.0)


def test_knn_permutation_equivariance():
    rng = derive_rng(9, "knn-perm")
    pts = rng.standard_normal((6, 2))
    w = Tensor(np.array([0.5, 1.5, 0.25]))
    perm = rng.permutation(6)
    base = build_knn_adjacency(Tensor(pts), 2, w).weights.data
    permuted = build_knn_adjacency(Tensor(pts[perm]), 2, w).weights.data
    assert np.allclose(permuted, base[perm][:, perm], atol=1e-12)


def test_knn_select_pairs_memory_is_batch_times_k():
    rng = derive_rng(10, "knn-pairs")
    for n, k in ((8, 3), (16, 5)):
        adj = build_knn_adjacency(
            Tensor(rng.standard_normal((n, 2))), k, Tensor(np.ones(k + 1))
        )
        assert adj.select_pairs.shape == (n * k, 2)
        assert adj.edge_count() == n * k
        rows, cols = adj.select_pairs[:, 0], adj.select_pairs[:, 1]
        assert np.all(rows != cols), "no self-loops in the selected edge set"


def test_knn_contract_violations():
    pts = Tensor(np.eye(3))
    with pytest.raises(ContractViolation):
        build_knn_adjacency(pts, 3, Tensor(np.ones(4)))  # k > B-1
    with pytest.raises(ContractViolation):
        build_knn_adjacency(pts, -1, Tensor(np.ones(1)))
    with pytest.raises(ContractViolation):
        build_knn_adjacency(pts, 1, Tensor(np.ones(3)))  # wrong weight length
    with pytest.raises(GraphDegreeError):
        build_knn_adjacency(pts, 1, Tensor(np.zeros(2)))


def test_knn_graph_module_owns_unit_weights():
    graph = KnnGraph(2)
    assert np.array_equal(graph.rank_weights.data, np.ones(3))
    adj = graph.build(Tensor(derive_rng(11, "knn-mod").standard_normal((5, 2))))
    assert adj.kind == "knn"


# ---------------------------------------------------------------------------
# incidence operator


def test_incidence_two_node_hand_oracle():
    # Unit edge between two nodes, held as both orientations at half weight:
    # G x = (sqrt(.5)*(x0-x1), sqrt(.5)*(x1-x0)) and G^T G x = (D - A) x.
    adj = Adjacency(weights=Tensor(np.array([[0.0, 1.0], [1.0, 0.0]])), kind="full",
                    row_stochastic=False)
    op = IncidenceOperator(adj)
    assert op.edge_count == 2
    x = Tensor(np.array([[1.0], [0.0]]))
    gx = op.apply(x)
    s = np.sqrt(0.5)
    assert np.array_equal(gx.data, np.array([[s], [-s]]))
    gtgx = op.apply_transpose(gx)
    assert np.allclose(gtgx.data, np.array([[1.0], [-1.0]]), atol=1e-12)


def test_incidence_identity_adjacency_is_empty():
    op = IncidenceOperator(identity_adjacency(4))
    assert op.edge_count == 0
    x = Tensor(derive_rng(12, "inc-id").standard_normal((4, 3)))
    assert op.apply(x).data.shape == (0, 3)
    assert np.array_equal(
        op.apply_transpose(Tensor(np.zeros((0, 3)))).data, np.zeros((4, 3))
    )


def test_incidence_constant_features_give_zero_edges():
    op = IncidenceOperator(full_adjacency(5))
    x = Tensor(np.full((5, 2), 3.7))
    assert np.all(op.apply(x).data == 0.0)


def test_incidence_gram_matches_combinatorial_laplacian():
    rng = derive_rng(13, "inc-gram")
    for trial in range(20):
        n = int(rng.integers(2, 9))
        raw = np.abs(rng.standard_normal((n, n)))
        raw[rng.random((n, n)) < 0.3] = 0.0  # sparsify some edges away
        np.fill_diagonal(raw, 0.0)
        adj = Adjacency(weights=Tensor(raw), kind="full", row_stochastic=False)
        op = IncidenceOperator(adj)
        x = rng.standard_normal((n, 2))
        got = op.apply_transpose(op.apply(Tensor(x))).data
        a_sym = (raw + raw.T) / 2.0
        lap = np.diag(a_sym.sum(axis=1)) - a_sym
        assert np.allclose(got, lap @ x, atol=1e-9), f"trial {trial}"


def test_incidence_rejects_wrong_shapes():
    op = IncidenceOperator(full_adjacency(3))
    with pytest.raises(ContractViolation):
        op.apply(Tensor(np.zeros(3)))
    with pytest.raises(ContractViolation):
        op.apply_transpose(Tensor(np.zeros((99, 2))))


# ---------------------------------------------------------------------------
# normalized laplacian


def test_laplacian_identity_is_zero():
    lap = normalized_laplacian(identity_adjacency(3))
    assert np.array_equal(lap.data, np.zeros((3, 3)))


def test_laplacian_two_node_oracle():
    adj = Adjacency(weights=Tensor(np.array([[0.0, 1.0], [1.0, 0.0]])), kind="full",
                    row_stochastic=False)
    lap = normalized_laplacian(adj)
    assert np.allclose(lap.data, np.array([[1.0, -1.0], [-1.0, 1.0]]), atol=1e-12)


def test_laplacian_annihilates_constants_for_row_stochastic():
    rng = derive_rng(14, "lap-const")
    raw = rng.random((6, 6)) + 0.1
    raw /= raw.sum(axis=1, keepdims=True)
    lap = normalized_laplacian(Adjacency(weights=Tensor(raw), kind="full",
                                         row_stochastic=True))
    ones = np.full((6, 1), 2.5)
    assert np.allclose(lap.data @ ones, 0.0, atol=1e-9)


def test_laplacian_zero_degree_names_node():
    raw = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(GraphDegreeError) as err:
        normalized_laplacian(Adjacency(weights=Tensor(raw), kind="full",
                                       row_stochastic=False))
    assert "node 1" in str(err.value)


def test_laplacian_spectrum_in_unit_band():
    rng = derive_rng(15, "lap-spec")
    for trial in range(20):
        n = int(rng.integers(2, 9))
        raw = np.abs(rng.standard_normal((n, n)))
        raw = (raw + raw.T) / 2.0
        lap = normalized_laplacian(Adjacency(weights=Tensor(raw), kind="full",
                                             row_stochastic=False))
        eigs = char_poly_eigenvalues(lap.data)
        assert eigs[0] >= -1e-7 and eigs[-1] <= 2.0 + 1e-7, f"trial {trial}: {eigs}"


# ---------------------------------------------------------------------------
# random-walk positional encoding


def test_rwpe_identity_walk_returns_everywhere():
    proj = Tensor(derive_rng(16, "rwpe-proj").standard_normal((3, 2)))
    pe = rwpe(identity_adjacency(4), 3, proj)
    assert np.array_equal(pe.raw.data, np.ones((4, 3)))


def test_rwpe_two_cycle_alternates():
    adj = Adjacency(weights=Tensor(np.array([[0.0, 1.0], [1.0, 0.0]])), kind="full",
                    row_stochastic=True)
    proj = Tensor(np.zeros((4, 2)))
    pe = rwpe(adj, 4, proj)
    expected = np.tile([0.0, 1.0], 2)[None, :].repeat(2, axis=0)
    assert np.array_equal(pe.raw.data, expected)


def test_rwpe_raw_within_unit_interval():
    rng = derive_rng(17, "rwpe-range")
    for _ in range(10):
        n = int(rng.integers(2, 8))
        raw = rng.random((n, n)) + 0.05
        adj = Adjacency(weights=Tensor(raw), kind="full", row_stochastic=False)
        pe = rwpe(adj, 5, Tensor(rng.standard_normal((5, 3))))
        assert np.all(pe.raw.data >= -1e-12) and np.all(pe.raw.data <= 1.0 + 1e-12)


def test_rwpe_projection_is_linear_map():
    rng = derive_rng(18, "rwpe-lin")
    proj = rng.standard_normal((3, 4))
    pe = rwpe(full_adjacency(5), 3, Tensor(proj.copy()))
    assert np.allclose(pe.projected.data, pe.raw.data @ proj, atol=1e-12)
    assert pe.projected.data.shape == (5, 4)


def test_rwpe_contracts():
    with pytest.raises(ContractViolation):
        rwpe(identity_adjacency(3), 0, Tensor(np.zeros((1, 1))))
    with pytest.raises(ContractViolation):
        rwpe(identity_adjacency(3), 2, Tensor(np.zeros((3, 1))))
    bad = Adjacency(weights=Tensor(np.zeros((2, 2))), kind="full", row_stochastic=False)
    with pytest.raises(GraphDegreeError):
        rwpe(bad, 2, Tensor(np.zeros((2, 1))))


# ---------------------------------------------------------------------------
# edge-count accounting


def test_edge_count_by_kind():
    assert identity_adjacency(5).edge_count() == 5
    assert full_adjacency(4).edge_count() == 16
    graph = make_attention(seed=19)
    pts = Tensor(derive_rng(20, "edges").standard_normal((3, 2)))
    assert graph.build(pts, 0.0).edge_count() == 9
    knn = build_knn_adjacency(
        Tensor(derive_rng(21, "edges-knn").standard_normal((6, 2))),
        2,
        Tensor(np.ones(3)),
    )
    assert knn.edge_count() == 12


def test_full_adjacency_contract():
    with pytest.raises(ContractViolation):
        full_adjacency(1)
    w = full_adjacency(3).weights.data
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(np.diag(w), np.zeros(3))
