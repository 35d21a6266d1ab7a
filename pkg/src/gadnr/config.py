"""Run configuration: TOML file plus ``--section.key value`` overrides.

Precedence is defaults < config file < flags. Unknown sections or keys are
errors. All randomness derives from ``run.seed`` through fixed offsets:

    synth  seed + 0     inject  seed + 1     model init  seed + 2
    train noise  seed + 3     score noise  seed + 4
"""

from __future__ import annotations

import dataclasses
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_OFFSETS = {"synth": 0, "inject": 1, "model": 2, "train": 3, "score": 4}


def _f(default, help: str, **kw):
    if isinstance(default, list):
        return field(default_factory=lambda d=default: list(d), metadata={"help": help}, **kw)
    return field(default=default, metadata={"help": help}, **kw)


@dataclass
class RunSection:
    seed: int = _f(0, "master seed; every sub-seed is derived from it")


@dataclass
class IOSection:
    input: str = _f("", "input bundle directory")
    out: str = _f("", "output directory (synth/inject/eval/ablate) or CSV file (bench)")
    checkpoint: str = _f("checkpoint.json", "model checkpoint path")
    history: str = _f("loss_history.csv", "training loss history CSV")
    scores: str = _f("scores.csv", "node score CSV")
    labels: str = _f("", "label file for eval (default: labels.txt of --input)")


@dataclass
class SynthSection:
    blocks: list[int] = _f([250, 250], "SBM block sizes")
    p_in: float = _f(0.05, "intra-block edge probability")
    p_out: float = _f(0.005, "inter-block edge probability")
    feature_dim: int = _f(16, "feature dimension k")
    feature_shift: float = _f(1.0, "distance between consecutive block feature means")


@dataclass
class InjectSection:
    kind: str = _f("contextual", "contextual | structural | joint")
    n: int = _f(10, "anomalies (contextual, joint) or cliques (structural)")
    q_cand: int = _f(10, "candidate pool size for contextual swaps")
    m: int = _f(10, "clique size (structural) or fan-out (joint)")


@dataclass
class ModelSection:
    latent_dim: int = _f(16, "latent dimension p")
    encoder_kind: str = _f("gcn-symmetric", "gcn-symmetric | sage-mean | mlp")
    q_samples: int = _f(10, "reparameterized samples per node")
    cov_mode: str = _f("full", "full | diagonal decoded covariance")
    c: float = _f(1e-2, "covariance regularizer added as c*I")
    activation: str = _f("relu", "relu | tanh")
    mlp_hidden: int = _f(0, "decoder MLP hidden width (0 = latent_dim)")
    projection_threshold: int = _f(256, "apply the random projection when k exceeds this")
    neighbor_decoder: str = _f("gaussian-kl", "gaussian-kl | hungarian-ot")


@dataclass
class TrainSection:
    epochs: int = _f(100, "full-batch epochs")
    learning_rate: float = _f(1e-2, "Adam step size")
    beta1: float = _f(0.9, "Adam first-moment decay")
    beta2: float = _f(0.999, "Adam second-moment decay")
    adam_eps: float = _f(1e-8, "Adam epsilon")
    lam_x: float = _f(0.8, "self-reconstruction weight")
    lam_d: float = _f(0.5, "degree reconstruction weight")
    lam_n: float = _f(0.001, "neighborhood reconstruction weight")


@dataclass
class ScoreSection:
    lam_x: float | None = _f(None, "score weight for self loss (default: training weight)")
    lam_d: float | None = _f(None, "score weight for degree loss (default: training weight)")
    lam_n: float | None = _f(None, "score weight for neighbor loss (default: training weight)")


@dataclass
class AblateSection:
    variants: list[str] = _f(["full", "no-feat", "no-degree", "no-neighbor"], "variants to run")
    seeds: list[int] = _f([0, 1, 2, 3, 4], "seed offsets, one training run per variant and seed")


@dataclass
class BenchSection:
    degrees: list[int] = _f([5, 20, 50], "average degrees of the synthetic graphs")
    modes: list[str] = _f(["gaussian-kl", "hungarian-ot"], "neighbor decoders to time")
    nodes: int = _f(2000, "nodes per synthetic graph")
    epochs: int = _f(3, "timed epochs (median reported)")
    warmup: int = _f(1, "untimed warm-up epochs")


SECTIONS: dict[str, type] = {
    "run": RunSection,
    "io": IOSection,
    "synth": SynthSection,
    "inject": InjectSection,
    "model": ModelSection,
    "train": TrainSection,
    "score": ScoreSection,
    "ablate": AblateSection,
    "bench": BenchSection,
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    io: IOSection = field(default_factory=IOSection)
    synth: SynthSection = field(default_factory=SynthSection)
    inject: InjectSection = field(default_factory=InjectSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    score: ScoreSection = field(default_factory=ScoreSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def seed_for(self, role: str) -> int:
        return self.run.seed + SEED_OFFSETS[role]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def section_fields(section: str) -> list[dataclasses.Field]:
    return list(dataclasses.fields(SECTIONS[section]))


def _field_type(section: str, key: str):
    hints = typing.get_type_hints(SECTIONS[section])
    return hints[key]


def coerce(section: str, key: str, value: Any) -> Any:
    """Convert a TOML value or flag string to the declared type of ``section.key``."""
    path = f"{section}.{key}"
    tp = _field_type(section, key)
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)]
        if value is None or (isinstance(value, str) and value.lower() in ("", "none")):
            return None
        tp, origin, args = inner[0], typing.get_origin(inner[0]), typing.get_args(inner[0])
    try:
        if origin is list:
            elem = args[0]
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if not isinstance(value, list):
                raise TypeError("expected a list")
            return [_scalar(elem, v) for v in value]
        return _scalar(tp, value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid value {value!r} ({exc})") from None


def _scalar(tp, value):
    if tp is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "1", "yes"):
            return True
        if isinstance(value, str) and value.lower() in ("false", "0", "no"):
            return False
        raise ValueError("expected a boolean")
    if tp is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError("expected an integer")
        return int(value)
    if tp is float:
        if isinstance(value, bool):
            raise ValueError("expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    raise TypeError(f"unsupported type {tp}")


def apply(cfg: RunConfig, section: str, key: str, value: Any) -> None:
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    obj = getattr(cfg, section)
    if key not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown config key {section}.{key}")
    setattr(obj, key, coerce(section, key, value))


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from an optional TOML file and ``{"section.key": value}`` overrides."""
    cfg = RunConfig()
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section, table in data.items():
            if not isinstance(table, dict):
                raise ConfigError(f"{section}: expected a [section] table")
            for key, value in table.items():
                apply(cfg, section, key, value)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        apply(cfg, section, key, value)
    return cfg
