"""The assembled network: encoders, self-decoupling, fusion, prediction head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import STREAM_IDS, UNSUPPORTED_ABLATIONS, ModelConfig, derived_rng
from .data import Batch, collate
from .decouple import Compactors, dependency_table
from .encoder import UnimodalEncoder
from .layers import Linear, Module
from .thhf import THHF

_SEGMENTS = {
    "A1": ("S", "M"),
    "A2": ("S", "I"),
    "A3": ("M", "I"),
    "A4": ("S",),
    "A5": ("M",),
    "A6": ("I",),
    "A11": ("i_t", "i_v", "i_a", "h_t", "h_v", "h_a", "S"),
}


def fusion_segments(ablation: str) -> tuple[str, ...]:
    """Names of the pieces concatenated into the head input, in order.

    Lower-case ``i_m``/``h_m`` here mean the compacted representations.
    """
    return _SEGMENTS.get(ablation, ("S", "I", "M"))


def head_input_width(cfg: ModelConfig) -> int:
    widths = {"S": cfg.rep_dim, "I": cfg.compact_dim, "M": cfg.compact_dim}
    return sum(widths.get(s, cfg.compact_dim) for s in fusion_segments(cfg.ablation))


def component_rngs(seed: int) -> dict[str, np.random.Generator]:
    """One generator per component, so a component's init depends only on (seed, name)."""
    return {name: derived_rng(seed, name) for name in STREAM_IDS if name not in ("shuffle", "synthetic")}


@dataclass
class RepresentationSet:
    """Numpy copies of one forward pass's intermediates, one row per sample."""

    h_t: np.ndarray
    h_v: np.ndarray
    h_a: np.ndarray
    S: np.ndarray
    i_t: np.ndarray
    i_v: np.ndarray
    i_a: np.ndarray
    F0: np.ndarray
    i_tilde: dict = field(default_factory=dict)
    h_tilde: dict = field(default_factory=dict)
    i_pairs: dict = field(default_factory=dict)
    h_pairs: dict = field(default_factory=dict)
    I: np.ndarray | None = None
    M: np.ndarray | None = None

    def sample(self, n: int) -> dict:
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, dict):
                out.update({f"{key}_{k}": v[n] for k, v in value.items()})
            elif value is not None:
                out[key] = value[n]
        return out

    @staticmethod
    def stack(parts: list[RepresentationSet]) -> RepresentationSet:
        def cat(values):
            return None if values[0] is None else np.concatenate(values, axis=0)

        first = parts[0]
        kwargs = {}
        for key, value in vars(first).items():
            if isinstance(value, dict):
                kwargs[key] = {k: np.concatenate([getattr(p, key)[k] for p in parts])
                               for k in value}
            else:
                kwargs[key] = cat([getattr(p, key) for p in parts])
        return RepresentationSet(**kwargs)


class InterMulti(Module):
    def __init__(self, cfg: ModelConfig):
        if cfg.ablation in UNSUPPORTED_ABLATIONS:
            raise NotImplementedError(f"ablation {cfg.ablation} is not implemented")
        self.cfg = cfg
        rngs = component_rngs(cfg.seed)
        dims = cfg.input_dims
        self.encoders = {
            m: UnimodalEncoder(m, dims[m], cfg.gru_hidden, cfg.rep_dim, rngs[f"enc_{m}"])
            for m in "tva" if m not in cfg.dropped
        }
        segments = fusion_segments(cfg.ablation)
        uses_i = "I" in segments or "i_t" in segments
        uses_h = "M" in segments or "h_t" in segments
        self.compactors = Compactors(cfg.rep_dim, cfg.compact_dim, rngs,
                                     specific=uses_i, full=uses_h)
        if cfg.ablation == "A11" or not ("I" in segments or "M" in segments):
            self.thhf = None
        else:
            self.thhf = THHF(cfg.compact_dim, cfg.dominant, cfg.ablation, rngs,
                             specific="I" in segments, full="M" in segments)
        self.head_hidden = Linear(head_input_width(cfg), cfg.head_hidden, rngs["head_hidden"])
        self.head_out = Linear(cfg.head_hidden, cfg.output_dim, rngs["head_out"])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing {missing}, unexpected {extra}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=T.DTYPE)
            if value.shape != p.shape:
                raise T.ShapeError(f"parameter {name}: shape {value.shape} != {p.shape}")
            p.data[...] = value

    def encode_all(self, batch: Batch) -> dict[str, T.Tensor]:
        dims = self.cfg.input_dims
        h = {}
        for m in "tva":
            if m in self.cfg.dropped:
                h[m] = T.constant(np.zeros((batch.size, self.cfg.rep_dim)))
                continue
            seq = batch.seqs[m]
            if seq.shape[2] != dims[m]:
                raise T.ShapeError(f"modality {m}: feature dim {seq.shape[2]} != configured {dims[m]}")
            h[m] = self.encoders[m](seq, batch.lengths[m])
        return h

    def forward(self, batch) -> tuple[T.Tensor, RepresentationSet]:
        """Predictions ([B] for regression, [B, K] logits otherwise) and intermediates."""
        if not isinstance(batch, Batch):
            batch = collate(batch)
        if batch.size == 0:
            raise ValueError("forward: empty batch")
        h = self.encode_all(batch)
        dec = self.compactors(h)
        fusion = self.thhf(dec.i_tilde, dec.h_tilde) if self.thhf is not None else None
        pieces = {"S": dec.S}
        if fusion is not None:
            pieces["I"], pieces["M"] = fusion.I, fusion.M
        for m in "tva":
            if m in dec.i_tilde:
                pieces[f"i_{m}"] = dec.i_tilde[m]
            if m in dec.h_tilde:
                pieces[f"h_{m}"] = dec.h_tilde[m]
        F0 = T.concat([pieces[s] for s in fusion_segments(self.cfg.ablation)], axis=1)
        out = self.head_out(T.relu(self.head_hidden(F0)))
        if self.cfg.task == "regression":
            out = T.reshape(out, (batch.size,))
        reps = RepresentationSet(
            h_t=h["t"].data, h_v=h["v"].data, h_a=h["a"].data,
            S=dec.S.data, i_t=dec.i["t"].data, i_v=dec.i["v"].data, i_a=dec.i["a"].data,
            F0=F0.data,
            i_tilde={m: x.data for m, x in dec.i_tilde.items()},
            h_tilde={m: x.data for m, x in dec.h_tilde.items()},
            i_pairs={k: x.data for k, x in fusion.i_pairs.items()} if fusion else {},
            h_pairs={k: x.data for k, x in fusion.h_pairs.items()} if fusion else {},
            I=fusion.I.data if fusion and fusion.I is not None else None,
            M=fusion.M.data if fusion and fusion.M is not None else None,
        )
        return out, reps

    __call__ = forward


def forward(model: InterMulti, batch) -> tuple[T.Tensor, RepresentationSet]:
    return model.forward(batch)


def loss(predictions: T.Tensor, labels, task: str) -> T.Tensor:
    """Cross-entropy over class ids, or mean squared error over intensities."""
    labels = np.asarray(labels)
    if task == "classification":
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("loss: classification needs integer class labels")
        if predictions.ndim != 2:
            raise T.ShapeError(f"loss: classification needs [N, K] logits, got {predictions.shape}")
        return T.softmax_cross_entropy(predictions, labels)
    if task == "regression":
        if not np.issubdtype(labels.dtype, np.floating):
            raise ValueError("loss: regression needs real-valued labels")
        return T.mse(predictions, labels.astype(T.DTYPE))
    raise ValueError(f"loss: unknown task {task!r}")


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count from the config dimensions."""
    H, R, C = cfg.gru_hidden, cfg.rep_dim, cfg.compact_dim

    def gru(d_in):
        return 3 * H * d_in + 3 * H * H + 3 * H

    def enc(d_in):
        return 2 * gru(d_in) + 2 * gru(2 * H) + (2 * H * R + R)

    total = sum(enc(d) for m, d in cfg.input_dims.items() if m not in cfg.dropped)
    segments = fusion_segments(cfg.ablation)
    compact = R * C + C
    if "I" in segments or "i_t" in segments:
        total += 3 * compact
    if "M" in segments or "h_t" in segments:
        total += 3 * compact
    if cfg.ablation != "A11":
        pooled = 2 * C if cfg.ablation == "A12" else (C // 2) ** 2
        block = pooled * C + C
        total += 3 * block * sum(s in segments for s in ("I", "M"))
    total += head_input_width(cfg) * cfg.head_hidden + cfg.head_hidden
    total += cfg.head_hidden * cfg.output_dim + cfg.output_dim
    return total


def predict(model: InterMulti, samples, batch_size: int = 256):
    """Gradient-free inference over a list of samples, in order."""
    preds, reps = [], []
    with T.no_grad():
        for lo in range(0, len(samples), batch_size):
            out, r = model.forward(collate(samples[lo:lo + batch_size]))
            preds.append(out.data.copy())
            reps.append(r)
    return np.concatenate(preds, axis=0), RepresentationSet.stack(reps)


def representation_dependencies(model: InterMulti, samples) -> dict[str, float]:
    _, reps = predict(model, samples)
    return dependency_table(reps)
