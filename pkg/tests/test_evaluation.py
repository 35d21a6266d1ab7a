import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadnr.errors import DataError
from gadnr.evaluation import (
    aggregate,
    bench_decoder,
    read_ranked,
    read_scores,
    report,
    roc_auc,
    write_bench_csv,
    write_scores,
)

from oracles import pairwise_auc


def test_auc_perfect():
    assert roc_auc([0.9, 0.8, 0.1], [1, 0, 0]) == 1.0


def test_auc_half():
    assert roc_auc([0.9, 0.8, 0.1], [0, 1, 0]) == 0.5


def test_auc_all_ties():
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5


def test_auc_single_class():
    with pytest.raises(ValueError):
        roc_auc([1.0, 2.0], [0, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=60))
def test_auc_matches_pairwise(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [int(y) for _, y in pairs]
    if len(set(labels)) < 2:
        return
    assert roc_auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


def test_scores_round_trip(tmp_path):
    s = np.random.default_rng(0).normal(size=7)
    write_scores(tmp_path / "s.csv", s)
    assert read_scores(tmp_path / "s.csv").tobytes() == s.tobytes()


def test_scores_bad_ids(tmp_path):
    (tmp_path / "s.csv").write_text("node_id,score\n0,1.0\n2,0.5\n")
    with pytest.raises(DataError):
        read_scores(tmp_path / "s.csv")


def test_report_perfect_and_reread(tmp_path):
    s = np.array([0.1, 0.9, 0.4, 0.8])
    y = np.array([0, 1, 0, 1])
    m = report(tmp_path, s, y, seed=3, config={"x": 1})
    assert m["auc"] == 1.0
    saved = json.loads((tmp_path / "metrics.json").read_text())
    assert saved["auc"] == 1.0 and saved["n_anomalies"] == 2 and saved["seed"] == 3
    s2, y2 = read_ranked(tmp_path / "ranked_scores.csv")
    assert roc_auc(s2, y2) == m["auc"]
    first = (tmp_path / "ranked_scores.csv").read_text().splitlines()[1]
    assert first.startswith("1,")


def test_aggregate_by_hand(tmp_path):
    aucs = [0.7, 0.8, 0.75, 0.9, 0.85]
    files = []
    for i, a in enumerate(aucs):
        p = tmp_path / f"m{i}.json"
        p.write_text(json.dumps({"auc": a}))
        files.append(p)
    agg = aggregate(files)
    mean = sum(aucs) / 5
    std = (sum((a - mean) ** 2 for a in aucs) / 5) ** 0.5
    assert agg["auc_mean"] == pytest.approx(mean) and agg["auc_std"] == pytest.approx(std)


def test_bench_smoke(tmp_path):
    rows = bench_decoder(degrees=(5,), num_nodes=120, epochs=3, warmup=0)
    assert {r.mode for r in rows} == {"gaussian-kl", "hungarian-ot"}
    assert all(r.seconds_per_epoch > 0 for r in rows)
    write_bench_csv(tmp_path / "b.csv", rows)
    assert (tmp_path / "b.csv").read_text().startswith("degree,mode,seconds_per_epoch")
