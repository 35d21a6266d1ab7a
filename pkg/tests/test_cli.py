import json

import numpy as np
import pytest

from gadnr.cli import run
from gadnr.config import RunConfig, load_config
from gadnr.errors import ConfigError
from gadnr.graph import AttributedGraph, load_bundle, save_bundle


@pytest.fixture
def sbm(tmp_path):
    assert run(["synth", "--out", str(tmp_path / "sbm"), "--blocks", "30,30", "--p-in", "0.2",
                "--feature-dim", "4", "--seed", "1"]) == 0
    return tmp_path / "sbm"


def test_help_lists_every_key(capsys):
    assert run(["train", "--help"]) == 0
    out = capsys.readouterr().out
    for key in ("--run.seed", "--io.input", "--model.latent_dim", "--train.epochs", "--train.lam_n"):
        assert key in out
    assert "(default: 0.001)" in out


def test_flags_override_file(tmp_path):
    cfg_file = tmp_path / "run.toml"
    cfg_file.write_text("[train]\nepochs = 7\nlam_x = 0.3\n[run]\nseed = 5\n")
    cfg = load_config(cfg_file, {"train.epochs": "9"})
    assert cfg.train.epochs == 9 and cfg.train.lam_x == 0.3
    assert cfg.seed_for("train") == 8 and cfg.seed_for("synth") == 5


def test_unknown_key_is_config_error(tmp_path):
    (tmp_path / "run.toml").write_text("[train]\nepoch = 7\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "run.toml")
    assert run(["train", "--config", str(tmp_path / "run.toml")]) == 2


def test_bad_value_exit_2(sbm, capsys):
    assert run(["train", "--input", str(sbm), "--epochs", "many"]) == 2
    err = capsys.readouterr().err
    assert "train.epochs" in err and len(err.strip().splitlines()) == 1


def test_missing_input_exit_3(tmp_path):
    assert run(["train", "--input", str(tmp_path / "nope")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_4(tmp_path, capsys):
    g = AttributedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)], np.full((4, 2), 1e200))
    save_bundle(g, tmp_path / "huge")
    code = run(["train", "--input", str(tmp_path / "huge"), "--epochs", "2",
                "--checkpoint", str(tmp_path / "ck.json"), "--history", str(tmp_path / "h.csv")])
    assert code == 4
    assert "non-finite" in capsys.readouterr().err


def test_inject_count_and_or(sbm, tmp_path):
    out1, out2 = tmp_path / "i1", tmp_path / "i2"
    assert run(["inject", "--input", str(sbm), "--out", str(out1), "--kind", "contextual", "--n", "7", "--q-cand", "10"]) == 0
    assert load_bundle(out1).labels.sum() == 7
    assert run(["inject", "--input", str(out1), "--out", str(out2), "--kind", "structural", "--n", "1", "--m", "5"]) == 0
    g2 = load_bundle(out2)
    assert 7 <= g2.labels.sum() <= 12


def test_eval_perfect_scores(tmp_path):
    (tmp_path / "s.csv").write_text("node_id,score\n0,0.9\n1,0.1\n2,0.2\n")
    (tmp_path / "l.txt").write_text("1\n0\n0\n")
    assert run(["eval", "--scores", str(tmp_path / "s.csv"), "--labels", str(tmp_path / "l.txt"),
                "--out", str(tmp_path / "ev")]) == 0
    assert json.loads((tmp_path / "ev" / "metrics.json").read_text())["auc"] == 1.0


def test_eval_single_class_is_data_error(tmp_path):
    (tmp_path / "s.csv").write_text("node_id,score\n0,0.9\n1,0.1\n")
    (tmp_path / "l.txt").write_text("0\n0\n")
    assert run(["eval", "--scores", str(tmp_path / "s.csv"), "--labels", str(tmp_path / "l.txt"),
                "--out", str(tmp_path / "ev")]) == 3


def pipeline(sbm, work):
    inj = work / "inj"
    ck, sc = work / "ck.json", work / "scores.csv"
    assert run(["inject", "--input", str(sbm), "--out", str(inj), "--kind", "structural", "--n", "1", "--m", "6"]) == 0
    assert run(["train", "--input", str(inj), "--epochs", "5", "--checkpoint", str(ck), "--history", str(work / "h.csv")]) == 0
    assert run(["score", "--input", str(inj), "--checkpoint", str(ck), "--scores", str(sc)]) == 0
    assert run(["eval", "--input", str(inj), "--scores", str(sc), "--out", str(work / "ev")]) == 0
    return sc.read_bytes(), json.loads((work / "ev" / "metrics.json").read_text())["auc"]


def test_end_to_end_reproducible(sbm, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    s1, auc1 = pipeline(sbm, tmp_path / "a")
    s2, auc2 = pipeline(sbm, tmp_path / "b")
    assert s1 == s2 and auc1 == auc2


def test_ablate_and_bench_commands(sbm, tmp_path):
    inj = tmp_path / "inj"
    assert run(["inject", "--input", str(sbm), "--out", str(inj), "--kind", "joint", "--n", "4", "--m", "8"]) == 0
    assert run(["ablate", "--input", str(inj), "--out", str(tmp_path / "ab"), "--epochs", "2",
                "--variants", "full,no-neighbor", "--seeds", "0"]) == 0
    data = json.loads((tmp_path / "ab" / "ablation.json").read_text())
    assert set(data["variants"]) == {"full", "no-neighbor"}
    assert run(["ablate", "--input", str(inj), "--out", str(tmp_path / "ab2"), "--variants", ""]) == 2
    assert run(["bench", "--out", str(tmp_path / "b.csv"), "--degrees", "4", "--nodes", "60",
                "--modes", "gaussian-kl", "--warmup", "0"]) == 0
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 2


def test_default_config_is_valid():
    cfg = RunConfig()
    assert cfg.model.q_samples == 10 and cfg.train.epochs == 100
