"""Per-modality utterance encoders: two stacked BiGRU layers and a tanh FC.

Sequences arrive padded to a common length with a per-sample valid length.
The forward direction freezes its state once past the valid length, the
backward direction stays at zero until it reaches the last valid step, so
padding never influences the result.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import Linear, Module, uniform_init


class GruCellParams(Module):
    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        self.W_z = uniform_init(rng, hidden, d_in)
        self.W_r = uniform_init(rng, hidden, d_in)
        self.W_n = uniform_init(rng, hidden, d_in)
        self.U_z = uniform_init(rng, hidden, hidden)
        self.U_r = uniform_init(rng, hidden, hidden)
        self.U_n = uniform_init(rng, hidden, hidden)
        self.b_z = T.parameter(np.zeros(hidden))
        self.b_r = T.parameter(np.zeros(hidden))
        self.b_n = T.parameter(np.zeros(hidden))

    @property
    def d_in(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]


def gru_step(p: GruCellParams, x_t: T.Tensor, h_prev: T.Tensor) -> T.Tensor:
    """One GRU update; x_t is [D_in] or [B, D_in], h_prev matches in rank."""
    if x_t.shape[-1] != p.d_in or h_prev.shape[-1] != p.hidden or x_t.ndim != h_prev.ndim:
        raise T.ShapeError(
            f"gru_step: input {x_t.shape} / state {h_prev.shape} do not fit "
            f"cell with D_in={p.d_in}, H={p.hidden}"
        )
    z = T.sigmoid(T.add(T.linear(x_t, p.W_z, p.b_z), T.linear(h_prev, p.U_z)))
    r = T.sigmoid(T.add(T.linear(x_t, p.W_r, p.b_r), T.linear(h_prev, p.U_r)))
    n = T.tanh(T.add(T.linear(x_t, p.W_n, p.b_n), T.linear(T.mul(r, h_prev), p.U_n)))
    # (1 - z) * n + z * h, rearranged to avoid a scalar-minus op
    return T.add(n, T.mul(z, T.sub(h_prev, n)))


def _scan(cell: GruCellParams, steps: list[T.Tensor], lengths: np.ndarray,
          reverse: bool) -> tuple[list[T.Tensor], T.Tensor]:
    batch = lengths.shape[0]
    h = T.constant(np.zeros((batch, cell.hidden)))
    outs: list[T.Tensor] = [h] * len(steps)
    longest = min(int(lengths.max()), len(steps))
    order = range(longest - 1, -1, -1) if reverse else range(longest)
    for t in order:
        h_new = gru_step(cell, steps[t], h)
        active = lengths > t
        if active.all():
            h = h_new
        else:
            h = T.where(np.repeat(active[:, None], cell.hidden, axis=1), h_new, h)
        outs[t] = h
    return outs, h


class BiGRU(Module):
    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        self.fwd = GruCellParams(d_in, hidden, rng)
        self.bwd = GruCellParams(d_in, hidden, rng)

    def __call__(self, steps: list[T.Tensor], lengths: np.ndarray):
        """Returns per-step [B, 2H] outputs and the two final states."""
        f_out, f_last = _scan(self.fwd, steps, lengths, reverse=False)
        b_out, b_last = _scan(self.bwd, steps, lengths, reverse=True)
        merged = [T.concat([f, b], axis=1) for f, b in zip(f_out, b_out)]
        return merged, f_last, b_last


class UnimodalEncoder(Module):
    def __init__(self, modality: str, d_in: int, hidden: int, out_dim: int,
                 rng: np.random.Generator):
        self.modality = modality
        self.d_in = d_in
        self.layer1 = BiGRU(d_in, hidden, rng)
        self.layer2 = BiGRU(2 * hidden, hidden, rng)
        self.proj = Linear(2 * hidden, out_dim, rng)

    def __call__(self, seq, lengths) -> T.Tensor:
        """Encode a padded batch ``seq`` [B, L, D] to [B, out_dim].

        ``seq`` may be a numpy array (treated as constant input) or a Tensor,
        in which case gradients flow back into it.
        """
        lengths = np.asarray(lengths, dtype=np.int64).reshape(-1)
        data = seq.data if isinstance(seq, T.Tensor) else np.asarray(seq, dtype=T.DTYPE)
        if data.ndim != 3:
            raise T.ShapeError(f"encoder[{self.modality}]: expected [B, L, D], got {data.shape}")
        batch, length, dim = data.shape
        if dim != self.d_in:
            raise T.ShapeError(
                f"encoder[{self.modality}]: feature dim {dim} != configured {self.d_in}")
        if lengths.shape[0] != batch:
            raise T.ShapeError(f"encoder[{self.modality}]: {lengths.shape[0]} lengths for batch {batch}")
        if np.any(lengths < 1) or np.any(lengths > length):
            raise ValueError(f"encoder[{self.modality}]: mask length out of range [1, {length}]")
        # padding past the longest valid step is never read
        longest = int(lengths.max())
        if isinstance(seq, T.Tensor) and seq.requires_grad:
            steps = [T.reshape(T.slice_axis(seq, t, t + 1, axis=1), (batch, dim))
                     for t in range(longest)]
        else:
            steps = [T.constant(data[:, t, :]) for t in range(longest)]
        out1, _, _ = self.layer1(steps, lengths)
        _, f_last, b_last = self.layer2(out1, lengths)
        return T.tanh(self.proj(T.concat([f_last, b_last], axis=1)))


def encode(enc: UnimodalEncoder, seq, mask_len: int) -> T.Tensor:
    """Single-sequence form: [L, D] with ``mask_len`` valid steps -> [out_dim]."""
    data = seq.data if isinstance(seq, T.Tensor) else np.asarray(seq, dtype=T.DTYPE)
    if data.ndim != 2:
        raise T.ShapeError(f"encode: expected [L, D], got {data.shape}")
    if not 1 <= mask_len <= data.shape[0]:
        raise ValueError(f"encode: mask_len {mask_len} out of range [1, {data.shape[0]}]")
    batched = T.reshape(seq, (1,) + data.shape) if isinstance(seq, T.Tensor) else data[None]
    out = enc(batched, [mask_len])
    return T.reshape(out, (out.shape[1],))
