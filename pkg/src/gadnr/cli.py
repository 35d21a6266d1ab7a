"""Command-line entry point: ``gadnr <subcommand> [--config run.toml] [--section.key value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import RunConfig
from .errors import ConfigError, DataError, GadnrError
from .evaluation import bench_decoder, read_scores, report, write_bench_csv, write_scores
from .graph import LABEL_FILE, load_bundle, read_labels, save_bundle
from .model import ModelConfig
from .synth import InjectionSpec, generate_sbm, inject
from .trainer import (
    ScoreConfig,
    TrainConfig,
    ablate,
    load_checkpoint,
    score_nodes,
    train,
)

log = logging.getLogger("gadnr")

SUBCOMMANDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "synth": ("write a stochastic-block-model bundle", ("run", "io", "synth")),
    "inject": ("inject anomalies into a bundle", ("run", "io", "inject")),
    "train": ("train a model, write checkpoint and loss history", ("run", "io", "model", "train")),
    "score": ("score nodes with a trained checkpoint", ("run", "io", "score")),
    "eval": ("compute AUC and ranked scores", ("run", "io")),
    "ablate": ("loss-component ablation sweep", ("run", "io", "model", "train", "score", "ablate")),
    "bench": ("time the two neighbor decoders", ("run", "io", "bench")),
}


def _require(value: str, name: str) -> str:
    if not value:
        raise ConfigError(f"io.{name} is required for this subcommand")
    return value


def model_config(cfg: RunConfig, input_dim: int, seed: int | None = None) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        input_dim=input_dim,
        latent_dim=m.latent_dim,
        encoder_kind=m.encoder_kind,
        q_samples=m.q_samples,
        cov_mode=m.cov_mode,
        c=m.c,
        activation=m.activation,
        mlp_hidden=m.mlp_hidden or None,
        projection_threshold=m.projection_threshold,
        neighbor_decoder=m.neighbor_decoder,
        seed=cfg.seed_for("model") if seed is None else seed,
    )


def train_config(cfg: RunConfig, with_paths: bool = True) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        epochs=t.epochs,
        learning_rate=t.learning_rate,
        beta1=t.beta1,
        beta2=t.beta2,
        adam_eps=t.adam_eps,
        lam_x=t.lam_x,
        lam_d=t.lam_d,
        lam_n=t.lam_n,
        seed=cfg.seed_for("train"),
        checkpoint_path=cfg.io.checkpoint if with_paths else None,
        history_path=cfg.io.history if with_paths else None,
    )


def score_config(cfg: RunConfig, fallback: tuple[float, float, float]) -> ScoreConfig:
    s = cfg.score
    vals = [fb if v is None else v for v, fb in zip((s.lam_x, s.lam_d, s.lam_n), fallback)]
    return ScoreConfig(*vals)


# ------------------------------------------------------------ subcommands


def cmd_synth(cfg: RunConfig) -> None:
    s = cfg.synth
    graph = generate_sbm(s.blocks, s.p_in, s.p_out, s.feature_dim, s.feature_shift, cfg.seed_for("synth"))
    save_bundle(graph, _require(cfg.io.out, "out"))
    print(f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges to {cfg.io.out}")


def cmd_inject(cfg: RunConfig) -> None:
    graph = load_bundle(_require(cfg.io.input, "input"))
    i = cfg.inject
    spec = InjectionSpec(i.kind, i.n, i.q_cand, i.m, cfg.seed_for("inject"))
    out, labels = inject(graph, spec)
    save_bundle(out, _require(cfg.io.out, "out"))
    print(f"{spec.kind}: labeled {int(labels.sum())} nodes ({int(out.labels.sum())} total) -> {cfg.io.out}")


def cmd_train(cfg: RunConfig) -> None:
    graph = load_bundle(_require(cfg.io.input, "input"))
    mc = model_config(cfg, graph.num_features)
    tc = train_config(cfg)
    _, history = train(graph, mc, tc)
    print(f"trained {tc.epochs} epochs, final loss {history[-1][1]:.6g} -> {tc.checkpoint_path}")


def cmd_score(cfg: RunConfig) -> None:
    graph = load_bundle(_require(cfg.io.input, "input"))
    params, mc, lambdas = load_checkpoint(_require(cfg.io.checkpoint, "checkpoint"))
    sc = score_config(cfg, lambdas or train_config(cfg, with_paths=False).lambdas)
    scores = score_nodes(graph, params, mc, sc, seed=cfg.seed_for("score"))
    write_scores(_require(cfg.io.scores, "scores"), scores)
    print(f"scored {len(scores)} nodes -> {cfg.io.scores}")


def cmd_eval(cfg: RunConfig) -> None:
    scores = read_scores(_require(cfg.io.scores, "scores"))
    if cfg.io.labels:
        labels = read_labels(cfg.io.labels)
    else:
        labels = read_labels(Path(_require(cfg.io.input, "input")) / LABEL_FILE)
    if len(labels) != len(scores):
        raise DataError(f"{len(scores)} scores but {len(labels)} labels")
    if labels.min() == labels.max():
        raise DataError("labels contain a single class; AUC is undefined")
    metrics = report(
        _require(cfg.io.out, "out"), scores, labels, seed=cfg.run.seed,
        config={"scores": cfg.io.scores, "labels": cfg.io.labels or cfg.io.input},
    )
    print(f"auc={metrics['auc']:.6f} ({metrics['n_anomalies']}/{metrics['n_nodes']} anomalies)")


def cmd_ablate(cfg: RunConfig) -> None:
    graph = load_bundle(_require(cfg.io.input, "input"))
    mc = model_config(cfg, graph.num_features)
    tc = train_config(cfg, with_paths=False)
    sc = score_config(cfg, tc.lambdas)
    results = ablate(graph, mc, tc, cfg.ablate.variants, cfg.ablate.seeds, sc)
    summary = {
        v: {"auc": aucs, "mean": float(np.mean(aucs)), "std": float(np.std(aucs))}
        for v, aucs in results.items()
    }
    out = Path(_require(cfg.io.out, "out"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(
        json.dumps({"seeds": cfg.ablate.seeds, "variants": summary}, indent=2) + "\n", encoding="utf-8"
    )
    for v, s in summary.items():
        print(f"{v:12s} auc {s['mean']:.4f} +- {s['std']:.4f}")


def cmd_bench(cfg: RunConfig) -> None:
    b = cfg.bench
    rows = bench_decoder(b.degrees, b.modes, b.nodes, b.epochs, b.warmup, seed=cfg.run.seed)
    path = cfg.io.out or "bench.csv"
    write_bench_csv(path, rows)
    for r in rows:
        print(f"degree {r.degree:3d} {r.mode:13s} {r.seconds_per_epoch:.4f} s/epoch")


COMMANDS = {
    "synth": cmd_synth,
    "inject": cmd_inject,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
}


# ----------------------------------------------------------------- parsing


def _fmt_default(f) -> str:
    import dataclasses

    if f.default_factory is not dataclasses.MISSING:
        return ",".join(str(v) for v in f.default_factory())
    return "none" if f.default is None else str(f.default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gadnr",
        description="Graph anomaly detection by neighborhood reconstruction.",
        epilog="Sub-seeds: synth=seed, inject=seed+1, model=seed+2, train=seed+3, score=seed+4.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, sections) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="TOML", help="TOML run configuration file")
        counts = Counter(f.name for s in sections for f in cfgmod.section_fields(s))
        for section in sections:
            group = p.add_argument_group(f"[{section}]")
            for f in cfgmod.section_fields(section):
                flags = [f"--{section}.{f.name}"]
                if counts[f.name] == 1:
                    flags.append(f"--{f.name.replace('_', '-')}")
                group.add_argument(
                    *flags,
                    dest=f"{section}.{f.name}",
                    metavar="V",
                    default=argparse.SUPPRESS,
                    help=f"{f.metadata['help']} (default: {_fmt_default(f)})",
                )
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {k: v for k, v in vars(args).items() if "." in k}
    try:
        cfg = cfgmod.load_config(args.config, overrides)
        COMMANDS[args.command](cfg)
    except GadnrError as exc:
        print(f"gadnr {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gadnr {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
