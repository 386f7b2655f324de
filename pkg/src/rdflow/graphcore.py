"""Batch-graph construction and differentiable graph operators.

A graph lives over the rows of one batch: adjacency builders turn the
current points into edge weights, and the operators here (incidence,
normalized Laplacian, random-walk return probabilities) stay inside the
differentiation graph so weight gradients reach the builder parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, GraphDegreeError, NumericFailure
from .numcore import (
    Linear,
    Module,
    Tensor,
    abs_,
    concat,
    diag_part,
    matmul,
    pow_const,
    reshape,
    scatter_rows,
    softmax_rows,
    sqrt,
    sum_,
    take_rows,
    transpose,
)


@dataclass
class Adjacency:
    """Dense per-batch edge weights plus bookkeeping about how they were built.

    select_pairs holds the (row, neighbor) index pairs a KNN build chose;
    it is the O(B*k) edge-set structure, kept separate from the dense
    weight matrix.
    """

    weights: Tensor
    kind: str
    row_stochastic: bool
    select_pairs: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.weights.data.shape[0]

    def edge_count(self) -> int:
        """Entries the build materialized: B*k selections for knn, the full
        dense matrix for attention/full, the diagonal for identity."""
        if self.kind == "knn":
            return int(self.select_pairs.shape[0])
        if self.kind == "identity":
            return self.size
        return self.size * self.size


def identity_adjacency(n: int) -> Adjacency:
    return Adjacency(weights=Tensor(np.eye(n)), kind="identity", row_stochastic=True)


def full_adjacency(n: int) -> Adjacency:
    """Uniform weight over all other nodes."""
    if n < 2:
        raise ContractViolation("full adjacency needs at least 2 nodes")
    w = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    return Adjacency(weights=Tensor(w), kind="full", row_stochastic=True)


class AttentionGraph(Module):
    """Builds a dense row-stochastic adjacency from learned projections.

    Each point is concatenated with its time embedding, projected to
    queries and keys of width proj_width, and the scaled dot products are
    softmaxed per row.  Every entry is strictly positive, so downstream
    operators see a complete graph.
    """

    def __init__(self, rng: np.random.Generator, dim: int, time_embedding, proj_width: int = 16):
        if proj_width <= 0:
            raise ConfigError("proj_width must be positive")
        self.time_embedding = time_embedding
        feat = dim + time_embedding.width
        self.query = Linear(rng, feat, proj_width)
        self.key = Linear(rng, feat, proj_width)
        self._scale = 1.0 / np.sqrt(proj_width)

    def build(self, points: Tensor, t) -> Adjacency:
        n = points.data.shape[0]
        emb = self.time_embedding(t, n)
        feats = concat([points, emb], axis=1)
        q = self.query(feats)
        k = self.key(feats)
        logits = matmul(q, transpose(k)) * self._scale
        if not np.isfinite(logits.data).all():
            raise NumericFailure("non-finite attention logits", node="attention_logits")
        return Adjacency(weights=softmax_rows(logits), kind="attention", row_stochastic=True)


def build_attention_adjacency(points: Tensor, t, graph: AttentionGraph) -> Adjacency:
    return graph.build(points, t)


def build_knn_adjacency(points: Tensor, k: int, rank_weights: Tensor) -> Adjacency:
    """Cosine-similarity top-k adjacency with learnable per-rank weights.

    Rank 0 is the node itself; ranks 1..k are its neighbors in descending
    similarity, ties broken toward the lower index.  Entry (i, j) gets
    |rank_weights[rank]|, rows are then normalized to sum to one.  The
    neighbor selection itself is fixed by the points; only the weights
    carry gradients.
    """
    n = points.data.shape[0]
    if not 0 <= k <= n - 1:
        raise ContractViolation(f"k must be in [0, {n - 1}], got {k}")
    if rank_weights.data.shape != (k + 1,):
        raise ContractViolation(
            f"rank_weights must have shape ({k + 1},), got {rank_weights.data.shape}"
        )
    flags: list[str] = []

    x = points.data
    norms = np.sqrt((x * x).sum(axis=1))
    zero_norm = norms == 0.0
    if zero_norm.any():
        flags.append("zero-norm-point")
        warnings.warn(
            "cosine similarity undefined for zero-norm points; using 0", RuntimeWarning, stacklevel=2
        )
    inv = np.zeros_like(norms)
    inv[~zero_norm] = 1.0 / norms[~zero_norm]
    sims = (x @ x.T) * inv[:, None] * inv[None, :]
    np.fill_diagonal(sims, -np.inf)  # self handled as rank 0, never a neighbor

    # stable argsort of -sims: equal similarities fall back to index order
    order = np.argsort(-sims, axis=1, kind="stable")
    neighbors = order[:, :k]
    select_pairs = np.stack(
        [np.repeat(np.arange(n), k), neighbors.ravel()], axis=1
    ) if k > 0 else np.zeros((0, 2), dtype=np.intp)

    w_abs = abs_(rank_weights)
    total = float(np.abs(rank_weights.data).sum())
    if total <= 0.0:
        raise GraphDegreeError("all rank weights are zero; rows cannot be normalized")

    unnorm = w_abs[0] * Tensor(np.eye(n))
    for r in range(1, k + 1):
        mask = np.zeros((n, n))
        mask[np.arange(n), neighbors[:, r - 1]] = 1.0
        unnorm = unnorm + w_abs[r] * Tensor(mask)
    row_sums = sum_(unnorm, axis=1, keepdims=True)
    weights = unnorm / row_sums
    return Adjacency(
        weights=weights,
        kind="knn",
        row_stochastic=True,
        select_pairs=select_pairs,
        flags=tuple(flags),
    )


class KnnGraph(Module):
    """Owns the learnable rank weights for a fixed k."""

    def __init__(self, k: int):
        if k < 0:
            raise ConfigError("k must be non-negative")
        self.k = k
        self.rank_weights = Tensor(np.ones(k + 1), requires_grad=True)

    def build(self, points: Tensor, t=None) -> Adjacency:
        return build_knn_adjacency(points, self.k, self.rank_weights)


class IncidenceOperator:
    """Graph gradient over the symmetrized positive off-diagonal support.

    Edges are all ordered pairs (i, j), i != j, where a_sym = (A+A^T)/2 is
    strictly positive, each carrying half the symmetrized weight so that
    transpose(apply(x)) == (D_w - A_sym) x exactly.  Applying the operator
    maps node features to sqrt(a_sym_ij / 2) * (x_i - x_j) per directed
    edge.  Keeping both orientations makes anything built on top of the
    edge values invariant to node relabeling even when a non-odd
    nonlinearity sits between apply and apply_transpose; a single
    canonical orientation would flip signs under relabeling.
    """

    def __init__(self, adjacency: Adjacency):
        w = adjacency.weights
        n = w.data.shape[0]
        half_sym = (w + transpose(w)) * 0.25  # (A + A^T)/2, halved per direction
        pos = (half_sym.data > 0.0) & ~np.eye(n, dtype=bool)
        i_idx, j_idx = np.nonzero(pos)
        self.n_nodes = n
        self.i_idx = i_idx
        self.j_idx = j_idx
        if len(i_idx) == 0:
            self.sqrt_weights = Tensor(np.zeros(0))
            self._w_col = Tensor(np.zeros((0, 1)))
        else:
            flat = take_rows(reshape(half_sym, (n * n,)), i_idx * n + j_idx)
            self.sqrt_weights = sqrt(flat)
            self._w_col = reshape(self.sqrt_weights, (len(i_idx), 1))

    @property
    def edge_count(self) -> int:
        return len(self.i_idx)

    def apply(self, x: Tensor) -> Tensor:
        """Node features (B, h) -> edge differences (E, h)."""
        if x.data.ndim != 2 or x.data.shape[0] != self.n_nodes:
            raise ContractViolation("expected a (n_nodes, h) feature matrix")
        if self.edge_count == 0:
            return Tensor(np.zeros((0,) + x.data.shape[1:]))
        diff = take_rows(x, self.i_idx) - take_rows(x, self.j_idx)
        return self._w_col * diff

    def apply_transpose(self, edge_values: Tensor) -> Tensor:
        """Edge values (E, h) -> node accumulation (B, h)."""
        if edge_values.data.ndim != 2 or edge_values.data.shape[0] != self.edge_count:
            raise ContractViolation("expected a (edge_count, h) edge matrix")
        if self.edge_count == 0:
            return Tensor(np.zeros((self.n_nodes,) + edge_values.data.shape[1:]))
        weighted = self._w_col * edge_values
        pos = scatter_rows(weighted, self.i_idx, self.n_nodes)
        neg = scatter_rows(weighted, self.j_idx, self.n_nodes)
        return pos - neg


def incidence_from_adjacency(adjacency: Adjacency) -> IncidenceOperator:
    return IncidenceOperator(adjacency)


def normalized_laplacian(adjacency: Adjacency) -> Tensor:
    """I - D^{-1/2} A D^{-1/2} with D the row-sum degrees.

    Degrees must be strictly positive; the error names the first node that
    violates this.
    """
    w = adjacency.weights
    n = w.data.shape[0]
    deg = sum_(w, axis=1)
    bad = np.nonzero(deg.data <= 0.0)[0]
    if len(bad) > 0:
        raise GraphDegreeError(f"node {int(bad[0])} has non-positive degree {deg.data[bad[0]]}")
    inv_sqrt = pow_const(deg, -0.5)
    scaled = reshape(inv_sqrt, (n, 1)) * w * reshape(inv_sqrt, (1, n))
    return Tensor(np.eye(n)) - scaled


@dataclass
class PositionalEncoding:
    """Walk-return probabilities and their learned projection."""

    raw: Tensor        # (B, walk_length)
    projected: Tensor  # (B, pe_dim)


def rwpe(adjacency: Adjacency, walk_length: int, projection: Tensor) -> PositionalEncoding:
    """Random-walk positional encoding.

    raw[:, l] is the return probability diag((D^{-1} A)^{l+1}); the learned
    (walk_length x pe_dim) projection maps it to the feature block.
    """
    if walk_length < 1:
        raise ContractViolation("walk_length must be >= 1")
    if projection.data.shape[0] != walk_length:
        raise ContractViolation(
            f"projection must have {walk_length} rows, got {projection.data.shape[0]}"
        )
    w = adjacency.weights
    n = w.data.shape[0]
    deg = sum_(w, axis=1)
    bad = np.nonzero(deg.data <= 0.0)[0]
    if len(bad) > 0:
        raise GraphDegreeError(f"node {int(bad[0])} has non-positive degree {deg.data[bad[0]]}")
    rw = w / reshape(deg, (n, 1))
    power = rw
    cols = [reshape(diag_part(power), (n, 1))]
    for _ in range(walk_length - 1):
        power = matmul(power, rw)
        cols.append(reshape(diag_part(power), (n, 1)))
    raw = concat(cols, axis=1)
    return PositionalEncoding(raw=raw, projected=matmul(raw, projection))
