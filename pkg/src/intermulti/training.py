"""Adam training loop with early stopping on validation loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import ModelConfig, derived_rng
from .data import FeatureDataset, collate
from .model import InterMulti, loss

log = logging.getLogger(__name__)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


class DivergenceError(RuntimeError):
    def __init__(self, message: str, op: str | None = None):
        super().__init__(message)
        self.op = op


class Adam:
    def __init__(self, params: dict[str, T.Tensor], lr: float,
                 betas: tuple[float, float] = (BETA1, BETA2), eps: float = ADAM_EPS):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale all gradients in place so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if total > max_norm:
        factor = max_norm / total
        for p in params:
            p.grad *= factor
    return total


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    improved: bool


@dataclass
class TrainState:
    optimizer: Adam
    epoch: int = 0
    best_val_loss: float = float("inf")
    best_epoch: int = 0
    epochs_since_best: int = 0
    stopped_early: bool = False
    history: list[EpochRecord] = field(default_factory=list)


def batch_loss(model: InterMulti, samples) -> T.Tensor:
    batch = collate(samples)
    preds, _ = model(batch)
    return loss(preds, batch.labels, model.cfg.task)


def evaluate_loss(model: InterMulti, samples, batch_size: int = 512) -> float:
    total = 0.0
    with T.no_grad():
        for lo in range(0, len(samples), batch_size):
            chunk = samples[lo:lo + batch_size]
            total += batch_loss(model, chunk).item() * len(chunk)
    return total / len(samples)


def _diagnose(model: InterMulti, samples) -> DivergenceError:
    try:
        with T.detect_anomaly(), T.no_grad():
            batch_loss(model, samples)
    except T.NonFiniteError as exc:
        return DivergenceError(f"training diverged: {exc}", exc.op)
    return DivergenceError("training diverged: non-finite loss", "loss")


def train_step(model: InterMulti, opt: Adam, samples, grad_clip: float) -> float:
    params = list(opt.params.values())
    for p in params:
        p.zero_grad()
    value = batch_loss(model, samples)
    if not np.isfinite(value.item()):
        raise _diagnose(model, samples)
    value.backward()
    clip_grad_norm(params, grad_clip)
    opt.step()
    return value.item()


def train(cfg: ModelConfig, train_set: FeatureDataset, val_set: FeatureDataset,
          model: InterMulti | None = None, on_epoch=None) -> tuple[InterMulti, TrainState]:
    """Fit until validation loss stalls for ``cfg.patience`` epochs, then restore the best weights."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train: empty split")
    if model is None:
        model = InterMulti(cfg)
    params = dict(model.named_parameters())
    state = TrainState(Adam(params, cfg.lr))
    shuffle = derived_rng(cfg.seed, "shuffle")
    samples = train_set.samples
    best = model.state_dict()

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle.permutation(len(samples))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            chunk = [samples[k] for k in order[lo:lo + cfg.batch_size]]
            total += train_step(model, state.optimizer, chunk, cfg.grad_clip) * len(chunk)
        train_loss = total / len(samples)
        val_loss = evaluate_loss(model, val_set.samples)
        if not np.isfinite(val_loss):
            raise _diagnose(model, val_set.samples)
        improved = val_loss < state.best_val_loss
        if improved:
            state.best_val_loss, state.best_epoch = val_loss, epoch
            state.epochs_since_best = 0
            best = model.state_dict()
        else:
            state.epochs_since_best += 1
        state.epoch = epoch
        record = EpochRecord(epoch, train_loss, val_loss, improved)
        state.history.append(record)
        log.info("epoch %d train %.6f val %.6f%s", epoch, train_loss, val_loss,
                 " *" if improved else "")
        if on_epoch is not None:
            on_epoch(record)
        if state.epochs_since_best >= cfg.patience:
            state.stopped_early = True
            break

    model.load_state_dict(best)
    return model, state
