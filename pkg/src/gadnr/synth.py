"""Stochastic-block-model graphs and the three anomaly injectors.

Every function draws from its own ``np.random.default_rng(seed)`` so results
depend only on the arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError
from .graph import AttributedGraph, build_index

InjectionKind = Literal["contextual", "structural", "joint"]


@dataclass(frozen=True)
class InjectionSpec:
    kind: InjectionKind
    n: int
    q_cand: int = 10
    m: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("contextual", "structural", "joint"):
            raise ConfigError(f"unknown injection kind {self.kind!r}")
        if self.n < 1:
            raise ConfigError("injection n must be >= 1")
        if self.kind == "contextual" and self.q_cand < 1:
            raise ConfigError("q_cand must be >= 1")
        if self.kind == "structural" and self.m < 2:
            raise ConfigError("clique size m must be >= 2")
        if self.kind == "joint" and self.m < 0:
            raise ConfigError("joint fan-out m must be >= 0")


def generate_sbm(
    blocks: Sequence[int] = (250, 250),
    p_in: float = 0.05,
    p_out: float = 0.005,
    feature_dim: int = 16,
    feature_shift: float = 1.0,
    seed: int = 0,
) -> AttributedGraph:
    """Undirected SBM with unit-variance Gaussian features.

    Block ``b`` has feature mean ``(b - (B-1)/2) * feature_shift * direction``
    for one random unit ``direction``, so consecutive blocks sit
    ``feature_shift`` apart. All labels are 0.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ConfigError("SBM probabilities must lie in [0, 1]")
    if not blocks or any(int(b) < 1 for b in blocks):
        raise ConfigError("SBM block sizes must be positive")
    if feature_dim < 1:
        raise ConfigError("feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    sizes = [int(b) for b in blocks]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n = int(starts[-1])

    pieces = []
    for a in range(len(sizes)):
        for b in range(a, len(sizes)):
            prob = p_in if a == b else p_out
            hit = rng.random((sizes[a], sizes[b])) < prob
            if a == b:
                hit = np.triu(hit, k=1)
            r, c = np.nonzero(hit)
            pieces.append(np.stack([r + starts[a], c + starts[b]], axis=1))
    edges = np.concatenate(pieces) if pieces else np.zeros((0, 2), np.int64)

    direction = rng.normal(size=feature_dim)
    direction /= np.linalg.norm(direction)
    block_of = np.repeat(np.arange(len(sizes)), sizes)
    offsets = (block_of - (len(sizes) - 1) / 2.0) * feature_shift
    features = rng.normal(size=(n, feature_dim)) + offsets[:, None] * direction[None, :]
    return AttributedGraph.from_edges(n, edges, features, np.zeros(n, dtype=np.int64))


def _merge_labels(graph: AttributedGraph, new: np.ndarray) -> np.ndarray:
    if graph.labels is None:
        return new.copy()
    return np.maximum(graph.labels, new)


def contextual_plan(
    num_nodes: int, n: int, q_cand: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Random part of contextual injection: ``n`` targets and an (n, q_cand) candidate pool per target.

    Pools are drawn without replacement and never contain their own target.
    """
    if n < 1 or n > num_nodes:
        raise ConfigError(f"contextual n={n} must lie in [1, {num_nodes}]")
    if q_cand < 1 or q_cand > num_nodes - 1:
        raise ConfigError(f"q_cand={q_cand} must lie in [1, {num_nodes - 1}]")
    rng = np.random.default_rng(seed)
    targets = rng.choice(num_nodes, size=n, replace=False)
    pools = np.empty((n, q_cand), dtype=np.int64)
    for i, u in enumerate(targets):
        pool = rng.choice(num_nodes - 1, size=q_cand, replace=False)
        pool[pool >= u] += 1  # skip the target itself
        pools[i] = pool
    return targets, pools


def inject_contextual(
    graph: AttributedGraph, n: int, q_cand: int, seed: int = 0
) -> tuple[AttributedGraph, np.ndarray]:
    """Swap the features of ``n`` targets with their farthest sampled candidate.

    Each target draws ``q_cand`` candidates (never itself) without replacement
    and takes the original feature row at the largest Euclidean distance.
    Returns the new graph (prior labels OR-ed in) and this injection's labels.
    """
    big_n = graph.num_nodes
    targets, pools = contextual_plan(big_n, n, q_cand, seed)
    x = graph.features
    new_x = x.copy()
    for u, pool in zip(targets, pools):
        dist = np.linalg.norm(x[pool] - x[u], axis=1)
        new_x[u] = x[pool[int(np.argmax(dist))]]
    labels = np.zeros(big_n, dtype=np.int64)
    labels[targets] = 1
    out = AttributedGraph.from_edges(big_n, graph.edges, new_x, _merge_labels(graph, labels))
    return out, labels


def structural_groups(num_nodes: int, n_cliques: int, m: int, seed: int = 0) -> np.ndarray:
    """Random part of structural injection: an (n_cliques, m) array of disjoint node groups."""
    if n_cliques < 1 or m < 2:
        raise ConfigError("structural injection needs n_cliques >= 1 and m >= 2")
    if n_cliques * m > num_nodes:
        raise ConfigError(f"{n_cliques} cliques of {m} need more than {num_nodes} nodes")
    rng = np.random.default_rng(seed)
    return rng.permutation(num_nodes)[: n_cliques * m].reshape(n_cliques, m)


def inject_structural(
    graph: AttributedGraph, n_cliques: int, m: int, seed: int = 0
) -> tuple[AttributedGraph, np.ndarray]:
    """Turn ``n_cliques`` disjoint random groups of ``m`` nodes into cliques."""
    big_n = graph.num_nodes
    groups = structural_groups(big_n, n_cliques, m, seed)
    iu, ju = np.triu_indices(m, k=1)
    new_edges = np.concatenate([np.stack([g[iu], g[ju]], axis=1) for g in groups])
    labels = np.zeros(big_n, dtype=np.int64)
    labels[groups.ravel()] = 1
    out = AttributedGraph.from_edges(
        big_n,
        np.concatenate([graph.edges, new_edges]),
        graph.features,
        _merge_labels(graph, labels),
        warn=False,
    )
    return out, labels


def inject_joint(
    graph: AttributedGraph, n: int, m: int, seed: int = 0
) -> tuple[AttributedGraph, np.ndarray]:
    """Connect each of ``n`` random targets to ``m`` random distinct non-neighbors.

    If fewer than ``m`` non-neighbors remain, all of them are used.
    """
    big_n = graph.num_nodes
    if n < 1 or n > big_n:
        raise ConfigError(f"joint n={n} must lie in [1, {big_n}]")
    if m < 0 or m > big_n - 1:
        raise ConfigError(f"joint m={m} must lie in [0, {big_n - 1}]")
    rng = np.random.default_rng(seed)
    index = build_index(graph)
    adj = [set(index.neighbors(u).tolist()) for u in range(big_n)]
    targets = rng.choice(big_n, size=n, replace=False)
    added = []
    for u in targets:
        u = int(u)
        free = np.array(
            [v for v in range(big_n) if v != u and v not in adj[u]], dtype=np.int64
        )
        take = min(m, len(free))
        if take == 0:
            continue
        for v in rng.choice(free, size=take, replace=False).tolist():
            adj[u].add(v)
            adj[v].add(u)
            added.append((u, v))
    labels = np.zeros(big_n, dtype=np.int64)
    labels[targets] = 1
    pairs = np.concatenate([graph.edges, np.array(added, dtype=np.int64).reshape(-1, 2)])
    out = AttributedGraph.from_edges(
        big_n, pairs, graph.features, _merge_labels(graph, labels), warn=False
    )
    return out, labels


def inject(graph: AttributedGraph, spec: InjectionSpec) -> tuple[AttributedGraph, np.ndarray]:
    if spec.kind == "contextual":
        return inject_contextual(graph, spec.n, spec.q_cand, spec.seed)
    if spec.kind == "structural":
        return inject_structural(graph, spec.n, spec.m, spec.seed)
    return inject_joint(graph, spec.n, spec.m, spec.seed)
