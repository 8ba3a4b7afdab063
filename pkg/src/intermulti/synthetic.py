"""Planted-interaction benchmark: labels mix shared, specific, and cross-modal latents.

Per sample we draw a shared latent z and one specific latent per modality.
Every timestep of modality m is a fixed random linear embedding of (z, z_m)
plus Gaussian noise. The label is

    3 * tanh(u / 3),   u = alpha*z + interaction*z_t*z_v + sum_m beta_m*z_m

so it stays inside (-3, 3). The z_t*z_v term is invisible to any linear model
of the inputs, which is what the least-squares baseline measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config import derived_rng
from .data import FeatureDataset, UtteranceSample

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 5000
    seq_len_t: int = 6
    seq_len_v: int = 6
    seq_len_a: int = 6
    d_text: int = 16
    d_visual: int = 12
    d_acoustic: int = 8
    alpha: float = 1.0
    beta_t: float = 1.0
    beta_v: float = 0.5
    beta_a: float = 0.5
    interaction: float = 1.5
    sigma: float = 0.1
    seed: int = 42

    def validate(self) -> None:
        weights = (self.alpha, self.beta_t, self.beta_v, self.beta_a, self.interaction)
        if any(w < 0 for w in weights):
            raise ValueError("latent weights must be non-negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one latent weight must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.n_samples < 20:
            raise ValueError("n_samples must be at least 20 so every split is non-empty")
        for name in ("seq_len_t", "seq_len_v", "seq_len_a", "d_text", "d_visual", "d_acoustic"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if min(self.d_text, self.d_visual, self.d_acoustic) < 2:
            raise ValueError("feature widths must be at least 2 to embed two latents")

    @property
    def lengths(self) -> dict[str, int]:
        return {"t": self.seq_len_t, "v": self.seq_len_v, "a": self.seq_len_a}

    @property
    def dims(self) -> dict[str, int]:
        return {"t": self.d_text, "v": self.d_visual, "a": self.d_acoustic}

    @property
    def betas(self) -> dict[str, float]:
        return {"t": self.beta_t, "v": self.beta_v, "a": self.beta_a}


def latent_score(spec: SyntheticSpec, z, z_t, z_v, z_a):
    return (spec.alpha * z + spec.interaction * z_t * z_v
            + spec.beta_t * z_t + spec.beta_v * z_v + spec.beta_a * z_a)


def squash(u):
    return 3.0 * np.tanh(np.asarray(u) / 3.0)


def generate_arrays(spec: SyntheticSpec):
    """Raw draws: per-modality feature tensors [N, L, D], labels [N], latents [N, 4]."""
    spec.validate()
    rng = derived_rng(spec.seed, "synthetic")
    n = spec.n_samples
    embed = {m: rng.normal(size=(spec.lengths[m], spec.dims[m], 2)) / np.sqrt(2.0) for m in "tva"}
    latents = rng.normal(size=(n, 4))  # columns: z, z_t, z_v, z_a
    feats = {}
    for k, m in enumerate("tva", start=1):
        pair = latents[:, [0, k]]  # (z, z_m)
        clean = np.einsum("ldk,nk->nld", embed[m], pair)
        noise = rng.normal(size=clean.shape) * spec.sigma
        feats[m] = clean + noise
    labels = squash(latent_score(spec, *latents.T))
    return feats, labels, latents


def split_bounds(n: int) -> tuple[int, int]:
    n_train = int(round(n * SPLIT_FRACTIONS[0]))
    n_val = int(round(n * SPLIT_FRACTIONS[1]))
    return n_train, n_train + n_val


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    feats, labels, _ = generate_arrays(spec)
    samples = [
        UtteranceSample(feats["t"][n], feats["v"][n], feats["a"][n], float(labels[n]))
        for n in range(spec.n_samples)
    ]
    a, b = split_bounds(spec.n_samples)
    return (FeatureDataset(samples[:a], "regression", "train"),
            FeatureDataset(samples[a:b], "regression", "val"),
            FeatureDataset(samples[b:], "regression", "test"))


def mean_features(samples: list[UtteranceSample]) -> np.ndarray:
    """Per-modality time-averaged features, concatenated, plus an intercept column."""
    rows = [np.concatenate([s.text.mean(0), s.visual.mean(0), s.acoustic.mean(0), [1.0]])
            for s in samples]
    return np.array(rows)


def linear_baseline(train: FeatureDataset, evaluate: FeatureDataset) -> float:
    """Validation MSE of the least-squares linear map on concatenated sequence means."""
    with np.errstate(over="ignore", invalid="ignore"):
        X, y = mean_features(train.samples), train.labels()
        X_eval = mean_features(evaluate.samples)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(X_eval))):
        raise ValueError("linear baseline: sequence means overflow float64")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = X_eval @ coef - evaluate.labels()
    return float(np.mean(resid ** 2))


def _gauss_hermite(order: int):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w / np.sqrt(2.0 * np.pi)


def label_moments(spec: SyntheticSpec, order: int = 60) -> tuple[float, float]:
    """Mean and standard deviation of the label by Gauss-Hermite quadrature."""
    x, w = _gauss_hermite(order)
    z, zt, zv, za = np.meshgrid(x, x, x, x, indexing="ij")
    weight = np.einsum("i,j,k,l->ijkl", w, w, w, w)
    y = squash(latent_score(spec, z, zt, zv, za))
    mean = float(np.sum(weight * y))
    var = float(np.sum(weight * (y - mean) ** 2))
    return mean, float(np.sqrt(var))


def label_cdf(spec: SyntheticSpec, y, order: int = 80) -> np.ndarray:
    """P(label <= y), integrating out z_t and z_v; z and z_a enter as one Gaussian."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    x, w = _gauss_hermite(order)
    zt, zv = np.meshgrid(x, x, indexing="ij")
    weight = np.outer(w, w)
    mu = spec.interaction * zt * zv + spec.beta_t * zt + spec.beta_v * zv
    s = float(np.hypot(spec.alpha, spec.beta_a))
    out = np.empty_like(y)
    for k, yk in enumerate(y):
        if yk <= -3.0:
            out[k] = 0.0
            continue
        if yk >= 3.0:
            out[k] = 1.0
            continue
        u = 3.0 * np.arctanh(yk / 3.0)
        if s == 0.0:
            inner = (mu <= u).astype(np.float64)
        else:
            inner = ndtr((u - mu) / s)
        out[k] = float(np.sum(weight * inner))
    return out
