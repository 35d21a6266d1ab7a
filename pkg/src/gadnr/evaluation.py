"""ROC-AUC, neighbor-decoder timing benchmark and report files."""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve with anomalies (label 1) as positives.

    Mann-Whitney rank-sum with average ranks, so ties count one half.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"{len(s)} scores vs {len(y)} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average 1-based rank for every run of tied scores
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(s)]])
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ------------------------------------------------------------ benchmark


@dataclass(frozen=True)
class BenchRow:
    degree: int
    mode: str
    seconds_per_epoch: float


def bench_decoder(
    degrees: Sequence[int] = (5, 20, 50),
    modes: Sequence[str] = ("gaussian-kl", "hungarian-ot"),
    num_nodes: int = 2000,
    epochs: int = 3,
    warmup: int = 1,
    feature_dim: int = 16,
    latent_dim: int = 16,
    seed: int = 0,
) -> list[BenchRow]:
    """Median wall-clock seconds per training epoch for each (average degree, decoder mode).

    Graph generation, parameter init and target preparation are outside the
    timed region; each timed epoch covers forward, loss, backward and the
    optimizer step. BLAS is pinned to one thread.
    """
    from threadpoolctl import threadpool_limits

    from .model import ModelConfig, init_params, prepare
    from .synth import generate_sbm
    from .trainer import AdamState, TrainConfig, train_step

    if epochs < 3:
        raise ValueError("bench_decoder times at least 3 epochs")
    rows = []
    with threadpool_limits(limits=1):
        for deg in degrees:
            graph = generate_sbm(
                [num_nodes], p_in=deg / (num_nodes - 1), p_out=0.0,
                feature_dim=feature_dim, seed=seed + deg,
            )
            for mode in modes:
                mc = ModelConfig(
                    input_dim=feature_dim, latent_dim=latent_dim, neighbor_decoder=mode, seed=seed
                )
                tc = TrainConfig(epochs=warmup + epochs, seed=seed)
                params = init_params(mc)
                ctx = prepare(graph, params, mc)
                state = AdamState()
                rng = np.random.default_rng(seed)
                times = []
                for i in range(warmup + epochs):
                    t0 = time.perf_counter()
                    train_step(ctx, params, mc, tc, state, rng)
                    if i >= warmup:
                        times.append(time.perf_counter() - t0)
                rows.append(BenchRow(int(deg), mode, statistics.median(times)))
    return rows


def write_bench_csv(path: str | Path, rows: Iterable[BenchRow]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["degree", "mode", "seconds_per_epoch"])
        for r in rows:
            w.writerow([r.degree, r.mode, f"{r.seconds_per_epoch:.6g}"])


# -------------------------------------------------------------- reports


def write_scores(path: str | Path, scores: np.ndarray) -> None:
    """Write ``node_id,score`` in node order."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "score"])
        for i, v in enumerate(np.asarray(scores, dtype=np.float64).tolist()):
            w.writerow([i, repr(v)])


def read_scores(path: str | Path) -> np.ndarray:
    """Read a score CSV (``node_id,score[,label]``, any row order) into a node-ordered vector."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows or "node_id" not in rows[0] or "score" not in rows[0]:
        raise DataError(f"{path}: expected a node_id,score header")
    try:
        ids = np.array([int(r["node_id"]) for r in rows])
        vals = np.array([float(r["score"]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed score row ({exc})") from None
    if sorted(ids.tolist()) != list(range(len(ids))):
        raise DataError(f"{path}: node ids must cover 0..{len(ids) - 1} exactly once")
    out = np.empty(len(ids))
    out[ids] = vals
    return out


def report(
    out_dir: str | Path,
    scores,
    labels,
    seed: int | None = None,
    config: dict | None = None,
) -> dict:
    """Write ``metrics.json`` and ``ranked_scores.csv`` (descending score) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    metrics = {
        "auc": roc_auc(s, y),
        "n_nodes": int(len(s)),
        "n_anomalies": int(y.sum()),
        "seed": seed,
        "config": config or {},
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    order = np.lexsort((np.arange(len(s)), -s))
    with open(out / "ranked_scores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "score", "label"])
        for i in order:
            w.writerow([int(i), repr(float(s[i])), int(y[i])])
    return metrics


def read_ranked(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Reload a ranked CSV as node-ordered ``(scores, labels)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ids = np.array([int(r["node_id"]) for r in rows])
    scores = np.empty(len(rows))
    labels = np.empty(len(rows), dtype=np.int64)
    scores[ids] = [float(r["score"]) for r in rows]
    labels[ids] = [int(r["label"]) for r in rows]
    return scores, labels


def aggregate(metric_files: Iterable[str | Path]) -> dict:
    """Mean and population std (ddof=0) of ``auc`` across per-seed metrics files."""
    aucs = [json.loads(Path(p).read_text(encoding="utf-8"))["auc"] for p in metric_files]
    if not aucs:
        raise DataError("no metrics files to aggregate")
    return {"auc_mean": float(np.mean(aucs)), "auc_std": float(np.std(aucs)), "runs": len(aucs)}
