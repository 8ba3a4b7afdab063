"""Parameter-free split of unimodal representations into shared and specific parts."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import tensor as T
from .layers import Linear, Module

PAIR_KEYS = ("ia_it", "ia_iv", "it_iv", "ia_S", "it_S", "iv_S")
CONTROL_KEYS = ("ha_ht", "ha_hv", "ht_hv")


class DecoupledSet(NamedTuple):
    S: T.Tensor
    i: dict  # modality -> specific residual, rep_dim wide
    i_tilde: dict  # modality -> compacted specific representation
    h_tilde: dict  # modality -> compacted full representation


def self_decouple(h_t: T.Tensor, h_v: T.Tensor, h_a: T.Tensor):
    """Shared part is the mean of the three inputs, specific parts the residuals."""
    if not h_t.shape == h_v.shape == h_a.shape:
        raise T.ShapeError(
            f"self_decouple: representation shapes differ {h_t.shape}, {h_v.shape}, {h_a.shape}")
    S = T.scale(T.add(T.add(h_t, h_v), h_a), 1.0 / 3.0)
    return S, T.sub(h_t, S), T.sub(h_v, S), T.sub(h_a, S)


def compact(x: T.Tensor, fc: Linear) -> T.Tensor:
    if x.shape[-1] != fc.n_in:
        raise T.ShapeError(f"compact: input width {x.shape[-1]} != {fc.n_in}")
    return T.tanh(fc(x))


class Compactors(Module):
    """The six 64->16 maps: one per modality for each of the specific and full streams.

    Ablations that never read a stream leave its maps out.
    """

    def __init__(self, rep_dim: int, compact_dim: int, rngs: dict,
                 specific: bool = True, full: bool = True):
        self.specific = ({m: Linear(rep_dim, compact_dim, rngs[f"spec_{m}"]) for m in "tva"}
                         if specific else {})
        self.full = ({m: Linear(rep_dim, compact_dim, rngs[f"full_{m}"]) for m in "tva"}
                     if full else {})

    def __call__(self, h: dict) -> DecoupledSet:
        S, i_t, i_v, i_a = self_decouple(h["t"], h["v"], h["a"])
        i = {"t": i_t, "v": i_v, "a": i_a}
        return DecoupledSet(
            S=S,
            i=i,
            i_tilde={m: compact(i[m], fc) for m, fc in self.specific.items()},
            h_tilde={m: compact(h[m], fc) for m, fc in self.full.items()},
        )


def dependency_metric(u, v) -> float:
    """Mean over samples of |u_n . v_n| for two [N, D] arrays."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.size == 0 or v.size == 0:
        raise ValueError("dependency_metric: empty dataset")
    if u.ndim == 1:
        u = u[None]
    if v.ndim == 1:
        v = v[None]
    if u.shape != v.shape:
        raise ValueError(f"dependency_metric: pair shapes differ {u.shape} vs {v.shape}")
    return float(np.mean(np.abs(np.einsum("nd,nd->n", u, v))))


def dependency_table(reps) -> dict[str, float]:
    """The six shared/specific pairs over a dataset of pre-compaction vectors.

    ``reps`` needs ``i_t, i_v, i_a, S`` as [N, rep_dim] arrays.
    """
    i_t, i_v, i_a, S = reps.i_t, reps.i_v, reps.i_a, reps.S
    return {
        "ia_it": dependency_metric(i_a, i_t),
        "ia_iv": dependency_metric(i_a, i_v),
        "it_iv": dependency_metric(i_t, i_v),
        "ia_S": dependency_metric(i_a, S),
        "it_S": dependency_metric(i_t, S),
        "iv_S": dependency_metric(i_v, S),
    }


def control_table(reps) -> dict[str, float]:
    """Same metric on the undecoupled h pairs, for comparison."""
    return {
        "ha_ht": dependency_metric(reps.h_a, reps.h_t),
        "ha_hv": dependency_metric(reps.h_a, reps.h_v),
        "ht_hv": dependency_metric(reps.h_t, reps.h_v),
    }
