import numpy as np
import pytest

from conftest import make_samples
from intermulti import tensor as T
from intermulti import training
from intermulti.checkpoint import (CheckpointError, decode_checkpoint, encode_checkpoint,
                                   load_checkpoint, save_checkpoint)
from intermulti.config import ModelConfig
from intermulti.data import DataError, FeatureDataset, UtteranceSample, collate
from intermulti.model import InterMulti, loss
from intermulti.training import (Adam, DivergenceError, batch_loss, clip_grad_norm, evaluate_loss,
                                 train, train_step)

SMALL = dict(d_text=5, d_visual=4, d_acoustic=3, gru_hidden=4, rep_dim=8, compact_dim=4, head_hidden=6)


def split(samples, n_train):
    return (FeatureDataset(samples[:n_train], "regression", "train"),
            FeatureDataset(samples[n_train:], "regression", "val"))


def test_adam_first_steps_match_formula(rng):
    p = T.parameter(rng.normal(size=4))
    start = p.data.copy()
    opt = Adam({"p": p}, lr=0.1)
    g1, g2 = rng.normal(size=4), rng.normal(size=4)
    p.grad = g1.copy()
    opt.step()
    # first bias-corrected step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p.data, start - 0.1 * g1 / (np.abs(g1) + 1e-8), rtol=1e-12)
    p.grad = g2.copy()
    opt.step()
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
    m_hat, v_hat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
    expected = start - 0.1 * g1 / (np.abs(g1) + 1e-8) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(p.data, expected, rtol=1e-12)


def test_clip_grad_norm():
    a, b = T.parameter(np.zeros(2)), T.parameter(np.zeros(1))
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    assert clip_grad_norm([a, b], 1.0) == 5.0
    np.testing.assert_allclose(np.concatenate([a.grad, b.grad]), [0.6, 0.0, 0.8])
    a.grad, b.grad = np.array([0.3, 0.0]), np.array([0.4])
    clip_grad_norm([a, b], 1.0)
    np.testing.assert_array_equal(a.grad, [0.3, 0.0])


def test_single_step_decreases_each_sample_loss(rng):
    cfg = ModelConfig(**SMALL, lr=1e-5)
    model = InterMulti(cfg)
    initial = model.state_dict()
    for sample in make_samples(rng, 20):
        model.load_state_dict(initial)
        opt = Adam(dict(model.named_parameters()), cfg.lr)
        before = train_step(model, opt, [sample], cfg.grad_clip)
        after = batch_loss(model, [sample]).item()
        assert after < before


def test_constant_labels_are_learned_and_stop_early(rng):
    samples = [UtteranceSample(s.text, s.visual, s.acoustic, 1.0) for s in make_samples(rng, 30)]
    train_set, val_set = split(samples, 20)
    cfg = ModelConfig(**SMALL, lr=0.01, patience=5, max_epochs=300, batch_size=10)
    model, state = train(cfg, train_set, val_set)
    assert state.stopped_early and state.epoch < cfg.max_epochs
    assert state.best_val_loss < 0.05 * state.history[0].val_loss
    assert state.epoch - state.best_epoch == cfg.patience


def test_best_weights_restored(rng):
    train_set, val_set = split(make_samples(rng, 30), 20)
    cfg = ModelConfig(**SMALL, lr=0.05, patience=2, max_epochs=15, batch_size=7)
    model, state = train(cfg, train_set, val_set)
    assert evaluate_loss(model, val_set.samples) == state.best_val_loss
    assert [r.improved for r in state.history].count(True) >= 1
    assert state.history[state.best_epoch - 1].val_loss == state.best_val_loss


def test_seeded_runs_have_identical_logs(rng):
    train_set, val_set = split(make_samples(rng, 25), 18)
    cfg = ModelConfig(**SMALL, lr=0.01, max_epochs=3, batch_size=8, seed=11)
    _, a = train(cfg, train_set, val_set)
    _, b = train(cfg, train_set, val_set)
    assert a.history == b.history
    _, c = train(cfg.replace(seed=12), train_set, val_set)
    assert a.history != c.history


def test_last_partial_batch_is_used(rng, monkeypatch):
    train_set, val_set = split(make_samples(rng, 12), 9)
    seen = []
    original = training.train_step

    def spy(model, opt, samples, grad_clip):
        seen.append(len(samples))
        return original(model, opt, samples, grad_clip)

    monkeypatch.setattr(training, "train_step", spy)
    train(ModelConfig(**SMALL, max_epochs=1, batch_size=4), train_set, val_set)
    assert seen == [4, 4, 1]


def test_divergence_names_first_nan_op(rng):
    train_set, val_set = split(make_samples(rng, 6), 4)
    cfg = ModelConfig(**SMALL, max_epochs=1)
    model = InterMulti(cfg)
    model.compactors.specific["v"].weight.data[0, 0] = np.nan
    with pytest.raises(DivergenceError) as info:
        train(cfg, train_set, val_set, model=model)
    assert info.value.op == "linear"
    assert "linear" in str(info.value)


def test_empty_split_rejected():
    with pytest.raises(DataError, match="empty"):
        FeatureDataset([], "regression", "val")


def test_classification_training_runs(rng):
    samples = make_samples(rng, 16, task="classification", n_classes=3)
    train_set = FeatureDataset(samples[:12], "classification", "train")
    val_set = FeatureDataset(samples[12:], "classification", "val")
    cfg = ModelConfig(**SMALL, task="classification", n_classes=3, max_epochs=2, lr=0.01)
    model, state = train(cfg, train_set, val_set)
    assert np.isfinite(state.best_val_loss)
    preds, _ = model(collate(val_set.samples))
    assert preds.shape == (4, 3)
    assert loss(preds, collate(val_set.samples).labels, "classification").item() > 0


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    cfg = ModelConfig(**SMALL, ablation="A12", seed=4)
    model = InterMulti(cfg)
    for _, p in model.named_parameters():
        p.data[...] = rng.normal(size=p.shape)
    path = tmp_path / "m.imck"
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert loaded.cfg == cfg
    a, b = model.state_dict(), loaded.state_dict()
    assert list(a) == list(b)
    for name in a:
        assert a[name].tobytes() == b[name].tobytes()
    sample = make_samples(rng, 2)
    assert model(sample)[0].data.tobytes() == loaded(sample)[0].data.tobytes()


def test_checkpoint_encoding_is_deterministic():
    model = InterMulti(ModelConfig(**SMALL))
    assert encode_checkpoint(model.cfg, model.state_dict()) == \
        encode_checkpoint(model.cfg, InterMulti(ModelConfig(**SMALL)).state_dict())


def test_checkpoint_corruption():
    model = InterMulti(ModelConfig(**SMALL))
    buf = encode_checkpoint(model.cfg, model.state_dict())
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"NOPE" + buf[4:])
    with pytest.raises(CheckpointError, match="truncated"):
        decode_checkpoint(buf[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        decode_checkpoint(buf + b"\0")


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "absent.imck")


def test_state_dict_mismatch():
    model = InterMulti(ModelConfig(**SMALL))
    state = model.state_dict()
    state.pop(next(iter(state)))
    with pytest.raises(KeyError, match="missing"):
        model.load_state_dict(state)
