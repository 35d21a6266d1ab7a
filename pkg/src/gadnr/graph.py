"""Attributed graph data model, bundle I/O and adjacency operators."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
import scipy.sparse as sp

from .errors import DataError

log = logging.getLogger(__name__)

EDGE_FILE = "edges.txt"
FEATURE_FILE = "features.csv"
LABEL_FILE = "labels.txt"
MANIFEST_FILE = "manifest.json"


class EdgeCleanupWarning(UserWarning):
    """Emitted when self-loops or duplicate edges are dropped on construction."""

    def __init__(self, self_loops: int, duplicates: int):
        self.self_loops = self_loops
        self.duplicates = duplicates
        super().__init__(
            f"dropped {self_loops} self-loop(s) and {duplicates} duplicate edge(s)"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def canonical_edges(pairs: np.ndarray, num_nodes: int) -> tuple[np.ndarray, int, int]:
    """Symmetrize and deduplicate an (M, 2) array of node pairs.

    Returns ``(edges, n_self_loops, n_duplicates)`` where ``edges`` holds each
    undirected edge once as ``(lo, hi)`` with ``lo < hi``, sorted
    lexicographically. A pair listed in both directions is not a duplicate;
    the same ordered pair listed twice is.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        bad = pairs[(pairs < 0).any(1) | (pairs >= num_nodes).any(1)][0]
        raise DataError(f"edge ({bad[0]}, {bad[1]}) out of range for {num_nodes} nodes")
    loops = pairs[:, 0] == pairs[:, 1]
    n_loops = int(loops.sum())
    pairs = pairs[~loops]
    n_dup = len(pairs) - len(np.unique(pairs, axis=0)) if len(pairs) else 0
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(pairs) else np.zeros((0, 2), np.int64)
    return edges.astype(np.int64), n_loops, int(n_dup)


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected, unweighted graph with dense node features and optional 0/1 labels.

    Build instances with :meth:`from_edges`, which enforces the invariants.
    """

    num_nodes: int
    edges: np.ndarray  # (M, 2) int64, lo < hi, sorted, unique
    features: np.ndarray  # (N, k) float64
    labels: np.ndarray | None = None  # (N,) int64 in {0, 1}

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        pairs: Iterable | np.ndarray,
        features: np.ndarray,
        labels: np.ndarray | None = None,
        *,
        warn: bool = True,
    ) -> "AttributedGraph":
        features = np.array(features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        if features.ndim != 2 or features.shape[0] != num_nodes or features.shape[1] < 1:
            raise DataError(
                f"features must have shape ({num_nodes}, k>=1), got {features.shape}"
            )
        if not np.isfinite(features).all():
            raise DataError("features contain non-finite values")
        pairs = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs)
        edges, n_loops, n_dup = canonical_edges(pairs, num_nodes)
        if warn and (n_loops or n_dup):
            warnings.warn(EdgeCleanupWarning(n_loops, n_dup), stacklevel=2)
        if labels is not None:
            labels = np.array(labels, dtype=np.int64).reshape(-1)
            if labels.shape != (num_nodes,):
                raise DataError(f"expected {num_nodes} labels, got {labels.shape[0]}")
            if not np.isin(labels, (0, 1)).all():
                raise DataError("labels must be 0 or 1")
            labels = _frozen(labels)
        return cls(int(num_nodes), _frozen(edges), _frozen(features), labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def with_labels(self, labels: np.ndarray | None) -> "AttributedGraph":
        return AttributedGraph.from_edges(self.num_nodes, self.edges, self.features, labels)

    def same_as(self, other: "AttributedGraph") -> bool:
        """Exact equality: node count, edge set, bitwise features and labels."""
        if self.num_nodes != other.num_nodes or not np.array_equal(self.edges, other.edges):
            return False
        if self.features.shape != other.features.shape:
            return False
        if self.features.tobytes() != other.features.tobytes():
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """CSR-style adjacency: neighbors of ``u`` are ``indices[indptr[u]:indptr[u+1]]``, ascending."""

    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    @property
    def num_nodes(self) -> int:
        return len(self.degrees)


def build_index(graph: AttributedGraph) -> NeighborIndex:
    n = graph.num_nodes
    src = np.concatenate([graph.edges[:, 0], graph.edges[:, 1]])
    dst = np.concatenate([graph.edges[:, 1], graph.edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    degrees = np.bincount(src, minlength=n).astype(np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=indptr[1:])
    return NeighborIndex(_frozen(indptr), _frozen(dst.astype(np.int64)), _frozen(degrees))


def adjacency_matrix(graph: AttributedGraph) -> sp.csr_matrix:
    n = graph.num_nodes
    e = graph.edges
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    data = np.ones(len(rows), dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def normalized_adjacency(
    graph: AttributedGraph, mode: Literal["symmetric", "row-mean"] = "symmetric"
) -> sp.csr_matrix:
    """Aggregation operator.

    ``symmetric``: D^-1/2 (A + I) D^-1/2 with D the degrees of A + I.
    ``row-mean``: D^-1 A, with an all-zero row for isolated nodes.
    """
    a = adjacency_matrix(graph)
    n = graph.num_nodes
    if mode == "symmetric":
        a = a + sp.identity(n, format="csr")
        d = np.asarray(a.sum(axis=1)).ravel()
        inv_sqrt = sp.diags(1.0 / np.sqrt(d))
        return (inv_sqrt @ a @ inv_sqrt).tocsr()
    if mode == "row-mean":
        d = np.asarray(a.sum(axis=1)).ravel()
        inv = np.divide(1.0, d, out=np.zeros_like(d), where=d > 0)
        return (sp.diags(inv) @ a).tocsr()
    raise ValueError(f"unknown normalization mode {mode!r}")


# --------------------------------------------------------------------------- I/O


def _read_lines(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            yield from enumerate(fh, start=1)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_features(path: str | Path) -> np.ndarray:
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    for lineno, line in _read_lines(path):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def read_edges(path: str | Path, num_nodes: int | None = None) -> np.ndarray:
    path = Path(path)
    pairs: list[tuple[int, int]] = []
    for lineno, line in _read_lines(path):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected two node indices")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: node index is not an integer") from None
        if a < 0 or b < 0:
            raise DataError(f"{path}:{lineno}: negative node index")
        if num_nodes is not None and max(a, b) >= num_nodes:
            raise DataError(
                f"{path}:{lineno}: node {max(a, b)} out of range ({num_nodes} feature rows)"
            )
        pairs.append((a, b))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def read_labels(path: str | Path) -> np.ndarray:
    path = Path(path)
    out: list[int] = []
    for lineno, line in _read_lines(path):
        line = line.strip()
        if not line:
            continue
        if line not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {line!r}")
        out.append(int(line))
    return np.array(out, dtype=np.int64)


def load_graph(
    edge_path: str | Path, feature_path: str | Path, label_path: str | Path | None = None
) -> AttributedGraph:
    features = read_features(feature_path)
    n = features.shape[0]
    pairs = read_edges(edge_path, n)
    labels = None
    if label_path is not None:
        labels = read_labels(label_path)
        if len(labels) != n:
            raise DataError(f"{label_path}: expected {n} labels, got {len(labels)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EdgeCleanupWarning)
        graph = AttributedGraph.from_edges(n, pairs, features, labels)
    for w in caught:
        log.warning("%s: %s", edge_path, w.message)
        warnings.warn(w.message, stacklevel=2)
    return graph


def load_bundle(directory: str | Path) -> AttributedGraph:
    d = Path(directory)
    labels = d / LABEL_FILE
    return load_graph(d / EDGE_FILE, d / FEATURE_FILE, labels if labels.exists() else None)


def save_bundle(graph: AttributedGraph, directory: str | Path) -> list[Path]:
    """Write edges, features, optional labels and a JSON manifest; returns data files written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    edge_path = d / EDGE_FILE
    with open(edge_path, "w", encoding="utf-8") as fh:
        for a, b in graph.edges:
            fh.write(f"{a} {b}\n")
    written.append(edge_path)

    feat_path = d / FEATURE_FILE
    # repr() is the shortest string that round-trips a float64 exactly
    with open(feat_path, "w", encoding="utf-8") as fh:
        for row in graph.features.tolist():
            fh.write(",".join(repr(v) for v in row) + "\n")
    written.append(feat_path)

    label_path = d / LABEL_FILE
    if graph.labels is not None:
        with open(label_path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{int(v)}\n" for v in graph.labels)
        written.append(label_path)
    elif label_path.exists():
        label_path.unlink()

    manifest = {
        "nodes": graph.num_nodes,
        "features": graph.num_features,
        "edges": graph.num_edges,
        "has_labels": graph.labels is not None,
    }
    (d / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return written
