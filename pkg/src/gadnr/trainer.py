"""Full-batch Adam training, anomaly scoring, checkpoints and loss-component ablations."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import diffmath as dm
from .diffmath import DTensor
from .errors import ConfigError, DataError, NumericError
from .evaluation import roc_auc
from .graph import AttributedGraph
from .model import (
    GraphContext,
    ModelConfig,
    ModelParams,
    forward,
    init_params,
    prepare,
    total_loss,
)

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "GADNR1"
HISTORY_HEADER = ("epoch", "total", "feat", "degree", "neighbor")

# fixed decoder weights used for every dataset
DEFAULT_LAMBDAS = (0.8, 0.5, 0.001)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam_x: float = DEFAULT_LAMBDAS[0]
    lam_d: float = DEFAULT_LAMBDAS[1]
    lam_n: float = DEFAULT_LAMBDAS[2]
    seed: int = 0
    checkpoint_path: str | None = None
    history_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if min(self.lam_x, self.lam_d, self.lam_n) < 0:
            raise ConfigError("loss weights must be non-negative")

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lam_x, self.lam_d, self.lam_n)


@dataclass(frozen=True)
class ScoreConfig:
    lam_x: float = DEFAULT_LAMBDAS[0]
    lam_d: float = DEFAULT_LAMBDAS[1]
    lam_n: float = DEFAULT_LAMBDAS[2]

    def __post_init__(self):
        if min(self.lam_x, self.lam_d, self.lam_n) < 0:
            raise ConfigError("score weights must be non-negative")

    @classmethod
    def from_train(cls, tc: TrainConfig) -> "ScoreConfig":
        return cls(tc.lam_x, tc.lam_d, tc.lam_n)


# --------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0


def adam_step(
    params: Sequence[DTensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.value.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if not np.isfinite(p.value).all():
            raise NumericError(f"parameter {p.name} became non-finite at Adam step {state.step}")
    return state


# ----------------------------------------------------------------- training


def train_step(
    ctx: GraphContext,
    params: ModelParams,
    model_config: ModelConfig,
    train_config: TrainConfig,
    state: AdamState,
    rng: np.random.Generator,
) -> tuple[float, tuple[float, float, float]]:
    """Forward, weighted loss, backward and one Adam update; returns (total, column sums)."""
    weights = params.trainable()
    dm.zero_grad(weights)
    with dm.Tape() as tape:
        out = forward(ctx, params, model_config, rng)
        loss = total_loss(out.losses, *train_config.lambdas)
    tape.backward(loss)
    adam_step(
        weights,
        [w.grad for w in weights],
        state,
        train_config.learning_rate,
        train_config.beta1,
        train_config.beta2,
        train_config.adam_eps,
    )
    return loss.item(), out.losses.sums()


def train(
    graph: AttributedGraph, model_config: ModelConfig, train_config: TrainConfig
) -> tuple[ModelParams, list[tuple[int, float, float, float, float]]]:
    """Train from a fresh seeded init; returns params and per-epoch (epoch, total, feat, degree, neighbor).

    Each history row holds the losses of the forward pass taken before that
    epoch's update.
    """
    params = init_params(model_config)
    ctx = prepare(graph, params, model_config)
    rng = np.random.default_rng(train_config.seed)
    state = AdamState()
    history = []
    for epoch in range(1, train_config.epochs + 1):
        try:
            value, sums = train_step(ctx, params, model_config, train_config, state, rng)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch}: {exc}") from exc
        history.append((epoch, value, *sums))
    dm.zero_grad(params.trainable())
    if train_config.checkpoint_path:
        save_checkpoint(train_config.checkpoint_path, params, model_config, train_config)
    if train_config.history_path:
        write_history(train_config.history_path, history)
    return params, history


def score_breakdown(
    graph: AttributedGraph, params: ModelParams, model_config: ModelConfig, seed: int = 0
) -> np.ndarray:
    """(N, 3) per-node (self, degree, neighbor) losses from one seeded forward pass."""
    ctx = prepare(graph, params, model_config)
    with dm.no_grad():
        out = forward(ctx, params, model_config, np.random.default_rng(seed))
    return out.losses.as_array()


def combine_scores(breakdown: np.ndarray, score_config: ScoreConfig) -> np.ndarray:
    sc = score_config
    return sc.lam_x * breakdown[:, 0] + sc.lam_d * breakdown[:, 1] + sc.lam_n * breakdown[:, 2]


def score_nodes(
    graph: AttributedGraph,
    params: ModelParams,
    model_config: ModelConfig,
    score_config: ScoreConfig,
    seed: int = 0,
) -> np.ndarray:
    """Anomaly score per node; larger means harder to reconstruct."""
    return combine_scores(score_breakdown(graph, params, model_config, seed), score_config)


# -------------------------------------------------------------- ablations

VARIANTS = ("full", "no-feat", "no-degree", "no-neighbor")
_ZEROED = {"full": None, "no-feat": "lam_x", "no-degree": "lam_d", "no-neighbor": "lam_n"}


def variant_configs(
    variant: str, train_config: TrainConfig, score_config: ScoreConfig
) -> tuple[TrainConfig, ScoreConfig]:
    if variant not in _ZEROED:
        raise ConfigError(f"unknown ablation variant {variant!r}; choose from {VARIANTS}")
    key = _ZEROED[variant]
    if key is None:
        return train_config, score_config
    return replace(train_config, **{key: 0.0}), replace(score_config, **{key: 0.0})


def ablate(
    graph: AttributedGraph,
    model_config: ModelConfig,
    train_config: TrainConfig,
    which: Iterable[str] = VARIANTS,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    score_config: ScoreConfig | None = None,
) -> dict[str, list[float]]:
    """Train and score each variant (one lambda/lambda' pair zeroed) per seed; AUC lists by variant."""
    which = list(which)
    if not which:
        raise ConfigError("ablate needs at least one variant")
    if graph.labels is None:
        raise DataError("ablate needs a labeled graph")
    score_config = score_config or ScoreConfig.from_train(train_config)
    results: dict[str, list[float]] = {}
    for variant in which:
        tc, sc = variant_configs(variant, train_config, score_config)
        aucs = []
        for s in seeds:
            mc = replace(model_config, seed=model_config.seed + 1000 * s)
            tcs = replace(tc, seed=tc.seed + 1000 * s, checkpoint_path=None, history_path=None)
            params, _ = train(graph, mc, tcs)
            scores = score_nodes(graph, params, mc, sc, seed=tcs.seed + 1)
            aucs.append(roc_auc(scores, graph.labels))
        results[variant] = aucs
        log.info("ablate %s: mean AUC %.4f", variant, float(np.mean(aucs)))
    return results


# ------------------------------------------------------------ persistence


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    model_config: ModelConfig,
    train_config: TrainConfig | None = None,
) -> None:
    def enc(a: np.ndarray) -> dict:
        return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}

    payload = {
        "magic": CHECKPOINT_MAGIC,
        "model_config": model_config.to_dict(),
        "lambdas": list(train_config.lambdas) if train_config else None,
        "xi": None if params.xi is None else enc(params.xi),
        "weights": {name: enc(t.value) for name, t in params.weights.items()},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ModelConfig, tuple[float, float, float] | None]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")

    def dec(obj) -> np.ndarray:
        return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])

    config = ModelConfig(**payload["model_config"])
    xi = None if payload["xi"] is None else dec(payload["xi"])
    weights = {
        name: DTensor(dec(obj), requires_grad=True, name=name)
        for name, obj in payload["weights"].items()
    }
    lambdas = tuple(payload["lambdas"]) if payload.get("lambdas") else None
    return ModelParams(xi, weights), config, lambdas


def write_history(path: str | Path, history) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_HEADER)
        for epoch, *vals in history:
            w.writerow([epoch, *(repr(float(v)) for v in vals)])
