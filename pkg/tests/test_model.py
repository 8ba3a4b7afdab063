import time

import numpy as np
import pytest

from conftest import make_samples
from intermulti import tensor as T
from intermulti.config import ABLATIONS, UNSUPPORTED_ABLATIONS, ConfigError, ModelConfig
from intermulti.data import collate
from intermulti.model import InterMulti, expected_parameter_count, loss, predict

# A0 at default dims, derived by hand:
#   GRU cell (D_in -> 32): 3*32*D_in + 3*32*32 + 3*32
#   encoder: 2 cells (D_m) + 2 cells (64) + FC 64->64
#     text 32,192 + visual 31,424 + acoustic 30,656 = 94,272
#   compaction: 6 * (64*16 + 16) = 6,240
#   fusion: 2 branches * 3 blocks * (64*16 + 16) = 6,240
#   head: 96*32 + 32 + 32*1 + 1 = 3,137
A0_PARAMETERS = 109_889


def randomize_biases(model, rng):
    for _, p in model.named_parameters():
        if p.ndim == 1:
            p.data[...] = 0.2 * rng.normal(size=p.shape)


def test_a0_parameter_count():
    model = InterMulti(ModelConfig())
    assert model.num_parameters() == A0_PARAMETERS
    assert expected_parameter_count(ModelConfig()) == A0_PARAMETERS


@pytest.mark.parametrize("ablation", sorted(set(ABLATIONS) - UNSUPPORTED_ABLATIONS))
def test_parameter_count_formula(ablation):
    cfg = ModelConfig(ablation=ablation)
    assert InterMulti(cfg).num_parameters() == expected_parameter_count(cfg)


def test_a12_delta():
    # each of the 6 blocks swaps a 64->16 map for a 32->16 map: 6 * (64 - 32) * 16
    delta = 6 * ((16 // 2) ** 2 - 2 * 16) * 16
    assert delta == 3072
    assert (InterMulti(ModelConfig()).num_parameters()
            - InterMulti(ModelConfig(ablation="A12")).num_parameters()) == delta


def test_classification_head_width():
    cfg = ModelConfig(task="classification", n_classes=4)
    assert InterMulti(cfg).head_out.weight.shape == (4, 32)
    assert InterMulti(cfg).num_parameters() == A0_PARAMETERS + 3 * 32 + 3


@pytest.mark.parametrize("ablation", sorted(UNSUPPORTED_ABLATIONS))
def test_unsupported_ablations(ablation):
    with pytest.raises(NotImplementedError, match="not implemented"):
        InterMulti(ModelConfig(ablation=ablation))


def test_unknown_ablation():
    with pytest.raises(ConfigError, match="A99"):
        ModelConfig(ablation="A99")


def test_forward_shapes(rng, toy_cfg):
    model = InterMulti(toy_cfg)
    samples = make_samples(rng, 3)
    preds, reps = model(samples)
    assert preds.shape == (3,)
    assert reps.F0.shape == (3, toy_cfg.rep_dim + 2 * toy_cfg.compact_dim)
    assert reps.S.shape == reps.i_t.shape == (3, toy_cfg.rep_dim)
    assert reps.I.shape == reps.M.shape == (3, toy_cfg.compact_dim)
    np.testing.assert_array_equal(reps.F0[:, :toy_cfg.rep_dim], reps.S)
    np.testing.assert_array_equal(reps.F0[:, toy_cfg.rep_dim:toy_cfg.rep_dim + 16], reps.I)


def test_default_pipeline_widths(rng):
    model = InterMulti(ModelConfig())
    samples = make_samples(rng, 2, dims=(16, 12, 8))
    _, reps = model(samples)
    for m in "tva":
        assert getattr(reps, f"h_{m}").shape == (2, 64)
        assert reps.i_tilde[m].shape == reps.h_tilde[m].shape == (2, 16)
    assert reps.i_pairs["tv"].shape == reps.h_pairs["ta"].shape == (2, 16)
    assert reps.F0.shape == (2, 96)


def test_forward_is_reproducible(rng, toy_cfg):
    sample = make_samples(rng, 1)
    a = InterMulti(toy_cfg)(sample)[0].data
    b = InterMulti(toy_cfg)(sample)[0].data
    assert a.tobytes() == b.tobytes()


def test_batch_equals_single_forwards(rng, toy_cfg):
    model = InterMulti(toy_cfg)
    randomize_biases(model, rng)
    samples = make_samples(rng, 3)
    batched, reps = model(samples)
    for n, s in enumerate(samples):
        single, rep1 = model([s])
        np.testing.assert_allclose(batched.data[n], single.data[0], rtol=0, atol=1e-14)
        np.testing.assert_allclose(reps.F0[n], rep1.F0[0], rtol=0, atol=1e-14)


def test_decoupling_holds_inside_model(rng, toy_cfg):
    model = InterMulti(toy_cfg)
    _, reps = model(make_samples(rng, 5))
    assert np.max(np.abs(reps.i_t + reps.i_v + reps.i_a)) < 1e-10
    np.testing.assert_allclose(reps.S + reps.i_v, reps.h_v, rtol=0, atol=1e-12)


@pytest.mark.parametrize("ablation,m", [("A7", "t"), ("A8", "v"), ("A9", "a")])
def test_modality_drop(rng, toy_cfg, ablation, m):
    cfg = toy_cfg.replace(ablation=ablation)
    model = InterMulti(cfg)
    assert m not in model.encoders
    preds, reps = model(make_samples(rng, 2))
    np.testing.assert_array_equal(getattr(reps, f"h_{m}"), 0.0)
    assert np.all(np.isfinite(preds.data))


def test_drop_via_config_field(rng, toy_cfg):
    model = InterMulti(toy_cfg.replace(drop_modalities=["v", "a"]))
    assert set(model.encoders) == {"t"}
    _, reps = model(make_samples(rng, 2))
    np.testing.assert_array_equal(reps.h_a, 0.0)


@pytest.mark.parametrize("ablation", ["A1", "A2", "A3", "A4", "A5", "A6", "A11", "A12", "A13"])
def test_ablation_forward_and_width(rng, toy_cfg, ablation):
    cfg = toy_cfg.replace(ablation=ablation)
    model = InterMulti(cfg)
    preds, reps = model(make_samples(rng, 2))
    assert reps.F0.shape[1] == model.head_hidden.weight.shape[1]
    assert np.all(np.isfinite(preds.data))


def test_forward_errors(rng, toy_cfg):
    model = InterMulti(toy_cfg)
    with pytest.raises(ValueError):
        model([])
    with pytest.raises(T.ShapeError):
        model(make_samples(rng, 2, dims=(6, 4, 3)))


# ---------------------------------------------------------------- loss

def test_loss_perfect_regression():
    assert loss(T.constant(np.array([0.5, -1.0])), np.array([0.5, -1.0]), "regression").item() == 0.0


def test_loss_uniform_classifier():
    value = loss(T.constant(np.zeros((5, 4))), np.array([0, 1, 2, 3, 0]), "classification").item()
    assert value == pytest.approx(np.log(4), abs=1e-15)


def test_cross_entropy_matches_log_softmax(rng):
    logits = rng.normal(size=(8, 5)) * 4
    labels = rng.integers(0, 5, size=8)
    total = 0.0
    for n in range(8):
        row = logits[n]
        top = max(row)
        log_z = top + np.log(sum(np.exp(v - top) for v in row))
        total -= row[labels[n]] - log_z
    assert abs(loss(T.constant(logits), labels, "classification").item() - total / 8) < 1e-12


def test_mse_matches_definition(rng):
    p, y = rng.normal(size=7), rng.normal(size=7)
    assert loss(T.constant(p), y, "regression").item() == pytest.approx(np.mean((p - y) ** 2), rel=1e-14)


def test_loss_task_mismatch():
    with pytest.raises(ValueError, match="integer"):
        loss(T.constant(np.zeros((2, 3))), np.array([0.5, 1.0]), "classification")
    with pytest.raises(ValueError, match="real"):
        loss(T.constant(np.zeros(2)), np.array([1, 2]), "regression")


# ---------------------------------------------------------------- gradients

def full_model_grad_check(cfg, rng, task="regression"):
    model = InterMulti(cfg)
    randomize_biases(model, rng)
    samples = make_samples(rng, 3, dims=(cfg.d_text, cfg.d_visual, cfg.d_acoustic),
                           max_len=4, task=task, n_classes=cfg.n_classes)
    batch = collate(samples)

    def f(*_):
        preds, _ = model(batch)
        return loss(preds, batch.labels, task)

    start = time.perf_counter()
    result = T.grad_check_detail(f, model.parameters())
    return result, time.perf_counter() - start


@pytest.mark.parametrize("ablation", ["A11", "A12", "A15"])
def test_ablation_gradients(rng, ablation):
    cfg = ModelConfig(d_text=3, d_visual=2, d_acoustic=2, gru_hidden=2, rep_dim=4,
                      compact_dim=4, head_hidden=3, ablation=ablation)
    result, _ = full_model_grad_check(cfg, rng)
    assert result.max_rel_error < 1e-4


def test_classification_gradient(rng):
    cfg = ModelConfig(d_text=3, d_visual=2, d_acoustic=2, gru_hidden=2, rep_dim=4,
                      compact_dim=4, head_hidden=3, task="classification", n_classes=3)
    result, _ = full_model_grad_check(cfg, rng, task="classification")
    assert result.max_rel_error < 1e-4


def test_predict_matches_forward(rng, toy_cfg):
    model = InterMulti(toy_cfg)
    samples = make_samples(rng, 7)
    preds, reps = predict(model, samples, batch_size=3)
    full, full_reps = model(samples)
    np.testing.assert_allclose(preds, full.data, rtol=0, atol=1e-14)
    assert reps.S.shape == full_reps.S.shape
