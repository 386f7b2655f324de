"""Velocity fields: pointwise reaction nets plus graph-coupled corrections.

A composite field predicts one velocity per batch row as the exact sum of
a reaction term (each row on its own) and an optional diffusion term that
reads the whole batch through a graph built on the fly.  Diffusion output
layers start at zero, so a fresh composite reproduces its reaction part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, NumericFailure
from .graphcore import (
    Adjacency,
    AttentionGraph,
    KnnGraph,
    PositionalEncoding,
    full_adjacency,
    identity_adjacency,
    incidence_from_adjacency,
    normalized_laplacian,
    rwpe,
)
from .numcore import (
    Linear,
    Mlp,
    Module,
    Tensor,
    concat,
    cos,
    elu,
    exp,
    glorot_uniform,
    matmul,
    mean,
    neg,
    pow_const,
    reshape,
    sin,
    softmax_rows,
    transpose,
)
from .seeding import derive_rng

VARIANTS = ("none", "mpnn", "gps-lite", "laplacian-knn")
ADJACENCY_KINDS = ("attention", "knn", "identity", "full")


class TimeEmbedding(Module):
    """[sin(f_k t) .. cos(f_k t)] with learnable frequencies, f_k = k at init.

    At t = 0 the embedding is (0,...,0, 1,...,1) for any frequencies.
    """

    def __init__(self, n_frequencies: int = 8):
        if n_frequencies < 1:
            raise ConfigError("n_frequencies must be >= 1")
        self.frequencies = Tensor(np.arange(1.0, n_frequencies + 1.0), requires_grad=True)
        self.n_frequencies = n_frequencies

    @property
    def width(self) -> int:
        return 2 * self.n_frequencies

    def __call__(self, t, batch_size: int) -> Tensor:
        """Embedding rows for a shared scalar t or a per-row (B,) vector."""
        if np.ndim(t) == 0:
            tvec = np.full(batch_size, float(t))
        else:
            tvec = np.asarray(t, dtype=np.float64)
            if tvec.shape != (batch_size,):
                raise ContractViolation(f"per-row time must have shape ({batch_size},)")
        angles = reshape(Tensor(tvec), (batch_size, 1)) * reshape(
            self.frequencies, (1, self.n_frequencies)
        )
        return concat([sin(angles), cos(angles)], axis=1)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericFailure(f"non-finite {what}", node=what)


class ReactionField(Module):
    """Pointwise MLP on [point, time embedding]; rows never interact."""

    def __init__(self, rng: np.random.Generator, dim: int, hidden: tuple[int, ...], n_frequencies: int):
        self.time_embedding = TimeEmbedding(n_frequencies)
        self.net = Mlp(rng, [dim + self.time_embedding.width, *hidden, dim])

    def eval(self, points: Tensor, t) -> Tensor:
        emb = self.time_embedding(t, points.data.shape[0])
        out = self.net(concat([points, emb], axis=1))
        _check_finite(out.data, "reaction output")
        return out


class MpnnDiffusion(Module):
    """Edge-difference message passing through the graph incidence operator.

    Node features from feature_net flow to edges as weighted differences,
    pass through ELU, scatter back, and output_net (zero-initialized last
    layer) maps the aggregate to a per-row velocity, negated.  An empty
    edge set short-circuits to exact zeros.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        n_frequencies: int,
        hidden: tuple[int, ...] = (32,),
        width: int = 16,
        zero_init: bool = True,
    ):
        self.time_embedding = TimeEmbedding(n_frequencies)
        f = self.time_embedding.width
        self.feature_net = Mlp(rng, [dim + f, *hidden, width])
        self.output_net = Mlp(rng, [width + f, *hidden, dim], zero_init_last=zero_init)
        self.width = width

    def eval(self, points: Tensor, t, adjacency: Adjacency) -> Tensor:
        n, dim = points.data.shape
        op = incidence_from_adjacency(adjacency)
        if op.edge_count == 0:
            return Tensor(np.zeros((n, dim)))
        emb = self.time_embedding(t, n)
        feats = self.feature_net(concat([points, emb], axis=1))
        edge = elu(op.apply(feats))
        agg = op.apply_transpose(edge)
        return neg(self.output_net(concat([agg, emb], axis=1)))


class LayerNorm(Module):
    """Per-row normalization with learned scale and shift."""

    def __init__(self, width: int, eps: float = 1e-6):
        self.gamma = Tensor(np.ones(width), requires_grad=True)
        self.beta = Tensor(np.zeros(width), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = mean(x, axis=1, keepdims=True)
        centered = x - mu
        var = mean(centered * centered, axis=1, keepdims=True)
        inv = pow_const(var + self.eps, -0.5)
        return centered * inv * self.gamma + self.beta


def _sigmoid(x: Tensor) -> Tensor:
    return Tensor(1.0) / (Tensor(1.0) + exp(neg(x)))


class GpsRound(Module):
    """One round of gated local message passing plus masked self-attention."""

    def __init__(self, rng: np.random.Generator, width: int, heads: int):
        self.gate_net = Mlp(rng, [2 * width, width, width])
        self.message = Linear(rng, width, width)
        self.norm_local = LayerNorm(width)
        self.query = Linear(rng, width, width)
        self.key = Linear(rng, width, width)
        self.value = Linear(rng, width, width)
        self.out = Linear(rng, width, width)
        self.norm_attn = LayerNorm(width)
        self.heads = heads
        self.head_width = width // heads

    def __call__(self, h: Tensor, adjacency: Adjacency) -> Tensor:
        # local block: adjacency-weighted aggregation, sigmoid gate, residual
        agg = matmul(adjacency.weights, h)
        gate = _sigmoid(self.gate_net(concat([h, agg], axis=1)))
        h = self.norm_local(h + gate * self.message(agg))

        # attention block masked to the adjacency support plus self-loops
        n = h.data.shape[0]
        allowed = (adjacency.weights.data > 0.0) | np.eye(n, dtype=bool)
        bias = Tensor(np.where(allowed, 0.0, -1e30))
        q = self.query(h)
        k = self.key(h)
        v = self.value(h)
        scale = 1.0 / np.sqrt(self.head_width)
        head_outs = []
        for i in range(self.heads):
            cols = slice(i * self.head_width, (i + 1) * self.head_width)
            logits = matmul(q[:, cols], transpose(k[:, cols])) * scale + bias
            head_outs.append(matmul(softmax_rows(logits), v[:, cols]))
        return self.norm_attn(h + self.out(concat(head_outs, axis=1)))


class GpsLiteDiffusion(Module):
    """Alternating local/global rounds over [point, time, walk-return PE].

    The output projection is zero-initialized, so the correction vanishes
    at construction time.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        n_frequencies: int,
        width: int = 64,
        rounds: int = 2,
        heads: int = 4,
        walk_length: int = 4,
        pe_dim: int = 8,
        zero_init: bool = True,
    ):
        if width % heads != 0:
            raise ConfigError(f"heads ({heads}) must divide width ({width})")
        if rounds < 1:
            raise ConfigError("rounds must be >= 1")
        self.time_embedding = TimeEmbedding(n_frequencies)
        self.walk_length = walk_length
        self.pe_projection = Tensor(glorot_uniform(rng, walk_length, pe_dim), requires_grad=True)
        self.input_proj = Linear(rng, dim + self.time_embedding.width + pe_dim, width)
        self.rounds = [GpsRound(rng, width, heads) for _ in range(rounds)]
        self.output_proj = Linear(rng, width, dim, zero_init=zero_init)

    def positional_encoding(self, adjacency: Adjacency) -> PositionalEncoding:
        return rwpe(adjacency, self.walk_length, self.pe_projection)

    def eval(
        self,
        points: Tensor,
        t,
        adjacency: Adjacency,
        pe: PositionalEncoding | None = None,
    ) -> Tensor:
        """pe, when supplied, must come from this same adjacency."""
        if pe is None:
            pe = self.positional_encoding(adjacency)
        n = points.data.shape[0]
        emb = self.time_embedding(t, n)
        h = self.input_proj(concat([points, emb, pe.projected], axis=1))
        for rnd in self.rounds:
            h = rnd(h, adjacency)
        return self.output_proj(h)


class LaplacianDiffusion(Module):
    """Per-row, per-dimension diffusivity times the Laplacian-smoothed batch.

    kappa = ELU(MLP([point, time embedding])) keeps every diffusivity
    entry above -1; the correction is kappa * (L x) with L the normalized
    Laplacian of the adjacency.  A zero-initialized final MLP layer makes
    kappa exactly zero at construction.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        n_frequencies: int,
        hidden: tuple[int, ...] = (32,),
        zero_init: bool = True,
    ):
        self.time_embedding = TimeEmbedding(n_frequencies)
        self.diffusivity_net = Mlp(
            rng, [dim + self.time_embedding.width, *hidden, dim], zero_init_last=zero_init
        )

    def diffusivity(self, points: Tensor, t) -> Tensor:
        emb = self.time_embedding(t, points.data.shape[0])
        return elu(self.diffusivity_net(concat([points, emb], axis=1)))

    def eval(self, points: Tensor, t, adjacency: Adjacency) -> Tensor:
        kappa = self.diffusivity(points, t)
        lap = normalized_laplacian(adjacency)
        return kappa * matmul(lap, points)


@dataclass(frozen=True)
class ModelConfig:
    """Construction-time description of a composite field."""

    variant: str = "mpnn"
    adjacency: str = "attention"
    dim: int = 2
    time_features: int = 8
    reaction_hidden: tuple[int, ...] = (64, 64)
    attention_width: int = 16
    mpnn_hidden: tuple[int, ...] = (32,)
    mpnn_width: int = 16
    gps_width: int = 64
    gps_rounds: int = 2
    gps_heads: int = 4
    walk_length: int = 4
    pe_dim: int = 8
    knn_k: int = 10
    kappa_hidden: tuple[int, ...] = (32,)
    zero_init_outputs: bool = True

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; valid: {', '.join(VARIANTS)}")
        if self.adjacency not in ADJACENCY_KINDS:
            raise ConfigError(
                f"unknown adjacency {self.adjacency!r}; valid: {', '.join(ADJACENCY_KINDS)}"
            )
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")


class CompositeField(Module):
    """reaction(x, t) + diffusion(x, t, graph(batch)); the sum is exact.

    With no diffusion the reaction output is returned as-is (bitwise).
    eval_count increments once per eval call, which is what integrator NFE
    accounting reads.
    """

    def __init__(
        self,
        reaction: ReactionField,
        diffusion: Module | None,
        graph_builder: Module | None,
        adjacency_kind: str,
        variant: str,
    ):
        self.reaction = reaction
        self.diffusion = diffusion
        self.graph_builder = graph_builder
        self.adjacency_kind = adjacency_kind
        self.variant = variant
        self.eval_count = 0

    def build_adjacency(self, points: Tensor, t) -> Adjacency:
        n = points.data.shape[0]
        if self.adjacency_kind == "identity":
            return identity_adjacency(n)
        if self.adjacency_kind == "full":
            return full_adjacency(n)
        return self.graph_builder.build(points, t)

    def eval(self, points: Tensor, t) -> Tensor:
        self.eval_count += 1
        v = self.reaction.eval(points, t)
        if self.diffusion is None:
            return v
        adjacency = self.build_adjacency(points, t)
        correction = self.diffusion.eval(points, t, adjacency)
        out = v + correction
        _check_finite(out.data, "composite output")
        return out

    def reaction_param_count(self) -> int:
        return self.reaction.param_count()

    def diffusion_param_count(self) -> int:
        return self.param_count() - self.reaction.param_count()


def build_composite_field(
    cfg: ModelConfig, seed: int, force_identity_adjacency: bool = False
) -> CompositeField:
    """Construct a field with per-component seed streams.

    The reaction stream is independent of the diffusion streams, so the
    reaction net of a composite and of a variant="none" build are
    bit-identical at equal seed.  force_identity_adjacency keeps the
    configured graph builder (and its parameter draws) but routes eval
    through the identity graph; ablation twins get exact parameter parity.
    """
    cfg.validate()
    reaction = ReactionField(
        derive_rng(seed, "reaction"), cfg.dim, tuple(cfg.reaction_hidden), cfg.time_features
    )
    diffusion: Module | None = None
    builder: Module | None = None
    if cfg.variant != "none":
        drng = derive_rng(seed, "diffusion")
        if cfg.variant == "mpnn":
            diffusion = MpnnDiffusion(
                drng, cfg.dim, cfg.time_features, tuple(cfg.mpnn_hidden),
                cfg.mpnn_width, zero_init=cfg.zero_init_outputs,
            )
        elif cfg.variant == "gps-lite":
            diffusion = GpsLiteDiffusion(
                drng, cfg.dim, cfg.time_features, cfg.gps_width, cfg.gps_rounds,
                cfg.gps_heads, cfg.walk_length, cfg.pe_dim, zero_init=cfg.zero_init_outputs,
            )
        else:
            diffusion = LaplacianDiffusion(
                drng, cfg.dim, cfg.time_features, tuple(cfg.kappa_hidden),
                zero_init=cfg.zero_init_outputs,
            )
        if cfg.adjacency == "attention":
            grng = derive_rng(seed, "graph")
            builder = AttentionGraph(
                grng, cfg.dim, TimeEmbedding(cfg.time_features), cfg.attention_width
            )
        elif cfg.adjacency == "knn":
            builder = KnnGraph(cfg.knn_k)
    kind = "identity" if force_identity_adjacency else cfg.adjacency
    return CompositeField(reaction, diffusion, builder, kind, cfg.variant)
