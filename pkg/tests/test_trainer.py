import numpy as np
import pytest

from gadnr.diffmath import DTensor
from gadnr.errors import ConfigError, DataError
from gadnr.model import ModelConfig
from gadnr.synth import generate_sbm, inject_structural
from gadnr.trainer import (
    DEFAULT_LAMBDAS,
    AdamState,
    ScoreConfig,
    TrainConfig,
    ablate,
    adam_step,
    load_checkpoint,
    score_breakdown,
    score_nodes,
    train,
)


@pytest.fixture(scope="module")
def small():
    g = generate_sbm([15, 15], 0.3, 0.03, feature_dim=3, seed=0)
    g, _ = inject_structural(g, 1, 4, seed=1)
    return g


def test_default_lambdas():
    assert DEFAULT_LAMBDAS == (0.8, 0.5, 0.001)
    assert TrainConfig().lambdas == DEFAULT_LAMBDAS


def test_epochs_must_be_positive():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_adam_zero_grad_unchanged():
    p = DTensor(np.array([[1.0, -2.0]]), requires_grad=True)
    adam_step([p], [np.zeros((1, 2))], AdamState(), lr=0.1)
    np.testing.assert_array_equal(p.value, [[1.0, -2.0]])


def test_adam_first_step_sign():
    p = DTensor(np.array([[0.0, 0.0]]), requires_grad=True)
    adam_step([p], [np.array([[3.0, -0.01]])], AdamState(), lr=0.1)
    np.testing.assert_allclose(p.value, [[-0.1, 0.1]], rtol=1e-5)


def test_adam_step_counter():
    p = DTensor(np.array([[1.0]]), requires_grad=True)
    st = AdamState()
    g = [np.array([[0.5]])]
    adam_step([p], g, st, lr=0.01)
    adam_step([p], g, st, lr=0.01)
    assert st.step == 2
    # constant gradient keeps the bias-corrected update at exactly lr per step
    assert p.value[0, 0] == pytest.approx(1.0 - 0.02, rel=1e-6)


def test_loss_decreases_quadratic_regime(small):
    mc = ModelConfig(input_dim=3, latent_dim=4, seed=0)
    tc = TrainConfig(epochs=20, learning_rate=1e-3, lam_d=0.0, lam_n=0.0)
    _, hist = train(small, mc, tc)
    totals = [h[1] for h in hist]
    assert totals[-1] < totals[0]
    assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))


def test_training_deterministic(small):
    mc = ModelConfig(input_dim=3, latent_dim=4, seed=3)
    tc = TrainConfig(epochs=5, seed=9)
    p1, h1 = train(small, mc, tc)
    p2, h2 = train(small, mc, tc)
    assert h1 == h2
    assert all(p1[k].value.tobytes() == p2[k].value.tobytes() for k in p1.weights)


def test_checkpoint_round_trip(small, tmp_path):
    mc = ModelConfig(input_dim=3, latent_dim=4)
    tc = TrainConfig(
        epochs=3, checkpoint_path=str(tmp_path / "ck.json"), history_path=str(tmp_path / "h.csv")
    )
    params, hist = train(small, mc, tc)
    back, mc2, lambdas = load_checkpoint(tmp_path / "ck.json")
    assert mc2 == mc and lambdas == tc.lambdas
    assert all(back[k].value.tobytes() == params[k].value.tobytes() for k in params.weights)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,total,feat,degree,neighbor" and len(lines) == 4


def test_bad_checkpoint(tmp_path):
    (tmp_path / "x.json").write_text('{"magic": "nope"}')
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "x.json")


@pytest.fixture(scope="module")
def trained(small):
    mc = ModelConfig(input_dim=3, latent_dim=4)
    params, _ = train(small, mc, TrainConfig(epochs=5))
    return small, params, mc


def test_zero_score_weights(trained):
    g, params, mc = trained
    assert (score_nodes(g, params, mc, ScoreConfig(0, 0, 0)) == 0).all()


def test_self_only_scores(trained):
    g, params, mc = trained
    s = score_nodes(g, params, mc, ScoreConfig(1, 0, 0), seed=2)
    np.testing.assert_array_equal(s, score_breakdown(g, params, mc, seed=2)[:, 0])


def test_positive_scaling_keeps_ranking(trained):
    g, params, mc = trained
    a = score_nodes(g, params, mc, ScoreConfig(0.8, 0.5, 0.001), seed=1)
    b = score_nodes(g, params, mc, ScoreConfig(8.0, 5.0, 0.01), seed=1)
    assert (np.argsort(a, kind="stable") == np.argsort(b, kind="stable")).all()


def test_score_weights_non_negative():
    with pytest.raises(ConfigError):
        ScoreConfig(-1, 0, 0)


def test_ablate_empty_variants(small):
    with pytest.raises(ConfigError):
        ablate(small, ModelConfig(input_dim=3), TrainConfig(epochs=1), [])


def test_ablate_unknown_variant(small):
    with pytest.raises(ConfigError):
        ablate(small, ModelConfig(input_dim=3), TrainConfig(epochs=1), ["no-everything"])


def test_ablate_shape(small):
    res = ablate(small, ModelConfig(input_dim=3, latent_dim=4), TrainConfig(epochs=2), ["full", "no-feat"], seeds=[0, 1])
    assert set(res) == {"full", "no-feat"}
    assert all(len(v) == 2 and all(0 <= a <= 1 for a in v) for v in res.values())
