"""Neighborhood-reconstruction network: encoder, self/degree/neighborhood decoders and per-node losses.

Shapes used throughout: ``N`` nodes, ``k`` raw features, ``p`` latent width
and ``t`` the width of the reconstruction targets ``h0`` (``p`` when the
random projection is active, else ``k``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from . import diffmath as dm
from .diffmath import DTensor
from .errors import ConfigError, NumericError
from .graph import AttributedGraph, NeighborIndex, build_index, normalized_adjacency

EncoderKind = Literal["gcn-symmetric", "sage-mean", "mlp"]
NeighborDecoder = Literal["gaussian-kl", "hungarian-ot"]

LOG_VAR_BOUND = 10.0


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    latent_dim: int = 16
    encoder_kind: EncoderKind = "gcn-symmetric"
    q_samples: int = 10
    cov_mode: Literal["full", "diagonal"] = "full"
    c: float = 1e-2
    activation: Literal["relu", "tanh"] = "relu"
    mlp_hidden: int | None = None
    projection_threshold: int = 256
    neighbor_decoder: NeighborDecoder = "gaussian-kl"
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.latent_dim < 1:
            raise ConfigError("input_dim and latent_dim must be >= 1")
        if self.q_samples < 2:
            raise ConfigError("q_samples must be >= 2")
        if not self.c > 0:
            raise ConfigError("covariance regularizer c must be > 0")
        if self.encoder_kind not in ("gcn-symmetric", "sage-mean", "mlp"):
            raise ConfigError(f"unknown encoder_kind {self.encoder_kind!r}")
        if self.cov_mode not in ("full", "diagonal"):
            raise ConfigError(f"unknown cov_mode {self.cov_mode!r}")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.neighbor_decoder not in ("gaussian-kl", "hungarian-ot"):
            raise ConfigError(f"unknown neighbor_decoder {self.neighbor_decoder!r}")
        if self.mlp_hidden is not None and self.mlp_hidden < 1:
            raise ConfigError("mlp_hidden must be >= 1")

    @property
    def projected(self) -> bool:
        return self.input_dim > self.projection_threshold

    @property
    def target_dim(self) -> int:
        return self.latent_dim if self.projected else self.input_dim

    @property
    def hidden(self) -> int:
        return self.mlp_hidden or self.latent_dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    """Trainable weights by name plus the frozen projection ``xi`` (None when bypassed)."""

    xi: np.ndarray | None
    weights: dict[str, DTensor] = field(default_factory=dict)

    def trainable(self) -> list[DTensor]:
        return list(self.weights.values())

    def __getitem__(self, name: str) -> DTensor:
        return self.weights[name]


# decoder heads: name -> (output width, as a function of the config)
_HEADS = {
    "psi_x": lambda cfg: cfg.target_dim,
    "psi_d": lambda cfg: 1,
    "phi_mu": lambda cfg: cfg.target_dim,
    "phi_sigma": lambda cfg: cfg.target_dim,
}


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded init: Gaussian ``xi`` scaled by 1/sqrt(k), fan-in uniform for the rest."""
    rng = np.random.default_rng(config.seed)
    k, p, t, h = config.input_dim, config.latent_dim, config.target_dim, config.hidden
    xi = None
    if config.projected:
        xi = rng.normal(size=(k, p)) / np.sqrt(k)
        xi.setflags(write=False)

    weights: dict[str, DTensor] = {}

    def linear(name: str, fan_in: int, fan_out: int, bias: bool = True):
        bound = 1.0 / np.sqrt(fan_in)
        weights[f"{name}.w"] = DTensor(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True, name=f"{name}.w"
        )
        if bias:
            weights[f"{name}.b"] = DTensor(
                rng.uniform(-bound, bound, size=(1, fan_out)), requires_grad=True, name=f"{name}.b"
            )

    linear("enc", t, p)
    if config.encoder_kind == "sage-mean":
        linear("enc_neigh", t, p, bias=False)
    for head, width in _HEADS.items():
        linear(f"{head}.0", p, h)
        linear(f"{head}.1", h, width(config))
    linear("fnn.0", t, h)
    linear("fnn.1", h, t)
    return ModelParams(xi, weights)


def _act(config: ModelConfig, x: DTensor) -> DTensor:
    return dm.relu(x) if config.activation == "relu" else dm.tanh(x)


def _dense(params: ModelParams, name: str, x: DTensor) -> DTensor:
    out = dm.matmul(x, params[f"{name}.w"])
    bias = params.weights.get(f"{name}.b")
    return dm.add_bias_row(out, bias) if bias is not None else out


def mlp(params: ModelParams, config: ModelConfig, name: str, x: DTensor) -> DTensor:
    """Two-layer perceptron ``name``: linear, activation, linear."""
    return _dense(params, f"{name}.1", _act(config, _dense(params, f"{name}.0", x)))


# ------------------------------------------------------------- graph context


@dataclass(frozen=True, eq=False)
class NeighborTargets:
    """Stop-gradient neighbor moments of ``h0``; rows of isolated nodes are zero."""

    mean: np.ndarray  # (N, t)
    cov: np.ndarray  # (N, t, t)
    has_neighbors: np.ndarray  # (N,) bool


def neighborhood_targets(index: NeighborIndex, h0: np.ndarray, chunk: int = 4096) -> NeighborTargets:
    """Per-node neighbor mean and (d-1)-denominator covariance of ``h0`` rows.

    Degree-1 nodes get their neighbor's row as the mean and a zero covariance.
    Work is one pass over the CSR edge list, chunked over nodes to bound memory.
    """
    h0 = np.asarray(h0.value if isinstance(h0, DTensor) else h0, dtype=np.float64)
    n, t = h0.shape
    deg = index.degrees
    src = np.repeat(np.arange(n), deg)
    sums = np.zeros((n, t))
    np.add.at(sums, src, h0[index.indices])
    has = deg > 0
    mean = np.zeros((n, t))
    mean[has] = sums[has] / deg[has, None]
    cov = np.zeros((n, t, t))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        e_lo, e_hi = index.indptr[lo], index.indptr[hi]
        if e_hi == e_lo:
            continue
        rows = src[e_lo:e_hi]
        diff = h0[index.indices[e_lo:e_hi]] - mean[rows]
        outer = np.einsum("ei,ej->eij", diff, diff)
        block = np.zeros((hi - lo, t, t))
        np.add.at(block, rows - lo, outer)
        cov[lo:hi] = block
    multi = deg > 1
    cov[multi] /= (deg[multi] - 1)[:, None, None]
    return NeighborTargets(mean, cov, has)


@dataclass(frozen=True, eq=False)
class GraphContext:
    """Everything about a graph the forward pass needs that does not depend on weights."""

    graph: AttributedGraph
    index: NeighborIndex
    h0: np.ndarray  # (N, t) constant
    agg: sp.csr_matrix | None
    degrees: np.ndarray  # (N, 1) float
    targets: NeighborTargets
    target_logdet: np.ndarray | None = None  # log det(cov + cI) per node, gaussian-kl only


def project_features(features: np.ndarray, params: ModelParams) -> np.ndarray:
    return features if params.xi is None else features @ params.xi


def prepare(graph: AttributedGraph, params: ModelParams, config: ModelConfig) -> GraphContext:
    if graph.num_features != config.input_dim:
        raise ConfigError(
            f"graph has {graph.num_features} features but model expects {config.input_dim}"
        )
    index = build_index(graph)
    h0 = project_features(graph.features, params)
    h0.setflags(write=False)
    agg = None
    if config.encoder_kind == "gcn-symmetric":
        agg = normalized_adjacency(graph, "symmetric")
    elif config.encoder_kind == "sage-mean":
        agg = normalized_adjacency(graph, "row-mean")
    targets = neighborhood_targets(index, h0)
    logdet = None
    if config.neighbor_decoder == "gaussian-kl":
        logdet = dm.target_logdet(targets.cov, config.c)
    return GraphContext(
        graph=graph,
        index=index,
        h0=h0,
        agg=agg,
        degrees=index.degrees.astype(np.float64)[:, None],
        targets=targets,
        target_logdet=logdet,
    )


# ------------------------------------------------------------------ forward


def encode(ctx: GraphContext, params: ModelParams, config: ModelConfig) -> tuple[np.ndarray, DTensor]:
    """One message-passing layer: returns ``(h0, h1)``."""
    h0 = DTensor(ctx.h0)
    if config.encoder_kind == "gcn-symmetric":
        pre = _dense(params, "enc", dm.sparse_matmul(ctx.agg, h0))
    elif config.encoder_kind == "sage-mean":
        pre = dm.add(_dense(params, "enc", h0), dm.matmul(dm.sparse_matmul(ctx.agg, h0), params["enc_neigh.w"]))
    else:
        pre = _dense(params, "enc", h0)
    return ctx.h0, _act(config, pre)


def decode_self(h1: DTensor, params: ModelParams, config: ModelConfig) -> DTensor:
    return mlp(params, config, "psi_x", h1)


def decode_degree(h1: DTensor, params: ModelParams, config: ModelConfig) -> DTensor:
    return mlp(params, config, "psi_d", h1)


def sample_neighborhood(
    h1: DTensor, params: ModelParams, config: ModelConfig, counts: np.ndarray, rng: np.random.Generator
) -> DTensor:
    """Reparameterized draws pushed through the FNN.

    Node ``u`` contributes ``counts[u]`` consecutive rows ``FNN(mu_u + std_u * eps)``
    with ``mu_u = phi_mu(h1_u)`` and ``std_u = exp(clamp(phi_sigma(h1_u)) / 2)``.
    """
    mu_hat = mlp(params, config, "phi_mu", h1)
    log_var = dm.clamp(mlp(params, config, "phi_sigma", h1), -LOG_VAR_BOUND, LOG_VAR_BOUND)
    std = dm.exp(dm.scale(log_var, 0.5))
    rows = np.repeat(np.arange(h1.shape[0]), counts)
    noise = rng.standard_normal((len(rows), config.target_dim))
    z = dm.add(dm.gather_rows(mu_hat, rows), dm.mul(dm.gather_rows(std, rows), DTensor(noise)))
    return mlp(params, config, "fnn", z)


def decode_neighborhood(
    h1: DTensor, params: ModelParams, config: ModelConfig, rng: np.random.Generator
) -> tuple[DTensor, DTensor]:
    """Decoded neighbor Gaussian per node: ``(mu_bar (N, t), cov_bar (N, t*t))``."""
    q = config.q_samples
    samples = sample_neighborhood(h1, params, config, np.full(h1.shape[0], q), rng)
    mu_bar = dm.group_mean(samples, q)
    cov_bar = dm.group_cov(samples, q, diagonal=config.cov_mode == "diagonal")
    return mu_bar, cov_bar


def ot_neighbor_loss(h0: np.ndarray, neighbors: np.ndarray, samples) -> DTensor:
    """Min-cost matching loss between ``d`` decoded samples and the ``d`` true neighbor rows.

    Cost is squared Euclidean distance; the gradient follows the optimal
    assignment, which is held fixed.
    """
    samples = dm.as_tensor(samples)
    nb = np.asarray(neighbors, dtype=np.int64)
    d = len(nb)
    if d == 0:
        raise ValueError("ot_neighbor_loss is undefined for an isolated node")
    if samples.shape[0] != d:
        raise ValueError(f"expected {d} decoded samples, got {samples.shape[0]}")
    target = np.asarray(h0)[nb]
    s = samples.value
    diff_all = s[:, None, :] - target[None, :, :]
    cost = np.einsum("ijk,ijk->ij", diff_all, diff_all)
    assign, best = dm.hungarian_min_cost(cost)
    diff = s - target[assign]
    return dm.custom_op(np.array([[best]]), (samples,), lambda g: (2.0 * g[0, 0] * diff,), "ot_match")


def ot_neighbor_losses(index: NeighborIndex, h0: np.ndarray, samples: DTensor) -> DTensor:
    """Matching loss for every node at once; ``samples`` is laid out in CSR order (``d_u`` rows per node)."""
    n = index.num_nodes
    s = samples.value
    target = np.asarray(h0)[index.indices]
    losses = np.zeros((n, 1))
    diffs = np.zeros_like(s)
    for u in range(n):
        lo, hi = index.indptr[u], index.indptr[u + 1]
        if hi == lo:
            continue
        a, b = s[lo:hi], target[lo:hi]
        diff_all = a[:, None, :] - b[None, :, :]
        cost = np.einsum("ijk,ijk->ij", diff_all, diff_all)
        assign, best = dm.hungarian_min_cost(cost)
        losses[u, 0] = best
        diffs[lo:hi] = a - b[assign]
    rows = np.repeat(np.arange(n), index.degrees)
    return dm.custom_op(losses, (samples,), lambda g: (2.0 * g[rows] * diffs,), "ot_match")


@dataclass(eq=False)
class LossBreakdown:
    """Per-node loss columns, each an (N, 1) tensor connected to the parameters."""

    feat: DTensor
    degree: DTensor
    neighbor: DTensor

    def as_array(self) -> np.ndarray:
        """(N, 3) array of (self, degree, neighbor) losses."""
        return np.hstack([self.feat.value, self.degree.value, self.neighbor.value])

    def sums(self) -> tuple[float, float, float]:
        return tuple(float(col.value.sum()) for col in (self.feat, self.degree, self.neighbor))


@dataclass(eq=False)
class ForwardOutputs:
    h0: np.ndarray
    h1: DTensor
    h0_hat: DTensor
    d_hat: DTensor
    mu_bar: DTensor | None
    cov_bar: DTensor | None
    targets: NeighborTargets
    losses: LossBreakdown


def uses_low_rank_kl(config: ModelConfig) -> bool:
    """Full covariances from ``q <= t`` samples are rank-deficient, so the KL is
    evaluated through their sample factor instead of a dense t x t inverse."""
    return config.cov_mode == "full" and config.q_samples <= config.target_dim


def forward(
    ctx: GraphContext, params: ModelParams, config: ModelConfig, rng: np.random.Generator
) -> ForwardOutputs:
    h0, h1 = encode(ctx, params, config)
    h0_hat = decode_self(h1, params, config)
    d_hat = decode_degree(h1, params, config)
    feat = dm.row_sq_dist(h0_hat, h0)
    degree = dm.row_sq_dist(d_hat, ctx.degrees)
    mask = DTensor(ctx.targets.has_neighbors.astype(np.float64)[:, None])
    mu_bar = cov_bar = None
    if config.neighbor_decoder == "gaussian-kl" and uses_low_rank_kl(config):
        q = config.q_samples
        samples = sample_neighborhood(h1, params, config, np.full(h1.shape[0], q), rng)
        kl = dm.gaussian_kl_samples(
            ctx.targets.mean, ctx.targets.cov, samples, q, config.c, ctx.target_logdet
        )
        neighbor = dm.mul(kl, mask)
    elif config.neighbor_decoder == "gaussian-kl":
        mu_bar, cov_bar = decode_neighborhood(h1, params, config, rng)
        kl = dm.gaussian_kl_rows(ctx.targets.mean, ctx.targets.cov, mu_bar, cov_bar, config.c)
        neighbor = dm.mul(kl, mask)
    else:
        samples = sample_neighborhood(h1, params, config, ctx.index.degrees, rng)
        neighbor = ot_neighbor_losses(ctx.index, h0, samples)
    losses = LossBreakdown(feat, degree, neighbor)
    arr = losses.as_array()
    if not np.isfinite(arr).all():
        node = int(np.argwhere(~np.isfinite(arr))[0, 0])
        raise NumericError(f"non-finite loss at node {node}")
    return ForwardOutputs(h0, h1, h0_hat, d_hat, mu_bar, cov_bar, ctx.targets, losses)


def per_node_losses(
    ctx: GraphContext, params: ModelParams, config: ModelConfig, rng: np.random.Generator
) -> LossBreakdown:
    return forward(ctx, params, config, rng).losses


def total_loss(breakdown: LossBreakdown, lam_x: float, lam_d: float, lam_n: float) -> DTensor:
    """Weighted sum over nodes of the three loss columns, as a 1x1 tensor."""
    if min(lam_x, lam_d, lam_n) < 0:
        raise ConfigError("loss weights must be non-negative")
    weighted = dm.add(
        dm.add(dm.scale(breakdown.feat, lam_x), dm.scale(breakdown.degree, lam_d)),
        dm.scale(breakdown.neighbor, lam_n),
    )
    return dm.total(weighted)
