"""Hierarchical high-order fusion over the compacted representations.

Each branch fuses the dominant modality with each of the other two through a
gated outer-product block, then merges the two results with an ungated
outer-product block. The specific branch yields I, the full branch yields M.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import tensor as T
from .layers import Linear, Module

# block kinds: how two vectors are combined and whether the result gates the dominant one
DOMINATED = "dominated"
FLAT = "flat"
DOMINATED_CONCAT = "dominated_concat"
FLAT_CONCAT = "flat_concat"


class HighOrderBlock(Module):
    def __init__(self, width: int, kind: str, rng: np.random.Generator):
        if kind not in (DOMINATED, FLAT, DOMINATED_CONCAT, FLAT_CONCAT):
            raise ValueError(f"unknown block kind {kind!r}")
        self.kind = kind
        self.width = width
        n_in = 2 * width if kind.endswith("concat") else (width // 2) ** 2
        self.fc = Linear(n_in, width, rng)

    def __call__(self, a: T.Tensor, b: T.Tensor) -> T.Tensor:
        if self.kind == DOMINATED:
            return dominated_fusion(a, b, self)
        if self.kind == FLAT:
            return flat_fusion(a, b, self)
        joined = T.concat([a, b], axis=a.ndim - 1)
        if self.kind == DOMINATED_CONCAT:
            return T.mul(a, T.sigmoid(self.fc(joined)))
        return self.fc(joined)


def pooled_interaction(a: T.Tensor, b: T.Tensor) -> T.Tensor:
    """Outer product, 2x2 max-pool, flatten: [16] x [16] -> [64], batched on a leading axis."""
    if a.shape != b.shape or a.ndim not in (1, 2):
        raise T.ShapeError(f"fusion inputs must share shape [D] or [B, D], got {a.shape}, {b.shape}")
    if a.ndim == 1:
        return T.flatten(T.maxpool2d(T.outer(a, b)))
    return T.flatten(T.maxpool2d(T.batch_outer(a, b)), 1)


def _check_width(a: T.Tensor, b: T.Tensor, block: HighOrderBlock) -> None:
    if a.shape[-1] != block.width or b.shape[-1] != block.width:
        raise T.ShapeError(
            f"fusion block expects width {block.width}, got {a.shape[-1]} and {b.shape[-1]}")


def dominated_fusion(dominant: T.Tensor, other: T.Tensor, block: HighOrderBlock) -> T.Tensor:
    _check_width(dominant, other, block)
    gate = T.sigmoid(block.fc(pooled_interaction(dominant, other)))
    return T.mul(dominant, gate)


def flat_fusion(a: T.Tensor, b: T.Tensor, block: HighOrderBlock) -> T.Tensor:
    _check_width(a, b, block)
    return block.fc(pooled_interaction(a, b))


class FusionBranch(Module):
    def __init__(self, width: int, dominant: str, pair_kind: str, merge_kind: str,
                 rng: np.random.Generator):
        self.dominant = dominant
        self.others = tuple(m for m in "tva" if m != dominant)
        self.pair = {o: HighOrderBlock(width, pair_kind, rng) for o in self.others}
        self.merge = HighOrderBlock(width, merge_kind, rng)

    def __call__(self, x: dict):
        d = self.dominant
        fused = {d + o: self.pair[o](x[d], x[o]) for o in self.others}
        first, second = (d + o for o in self.others)
        return fused, self.merge(fused[second], fused[first])


class FusionOutputs(NamedTuple):
    i_pairs: dict  # e.g. {"tv": i_tv, "ta": i_ta}
    h_pairs: dict
    I: T.Tensor
    M: T.Tensor


def block_kinds(ablation: str) -> tuple[str, str]:
    if ablation == "A12":
        return DOMINATED_CONCAT, FLAT_CONCAT
    if ablation == "A13":
        return FLAT, FLAT
    return DOMINATED, FLAT


class THHF(Module):
    """Specific and full branches with disjoint parameters."""

    def __init__(self, width: int, dominant: str, ablation: str, rngs: dict,
                 specific: bool = True, full: bool = True):
        pair_kind, merge_kind = block_kinds(ablation)
        self.specific = (FusionBranch(width, dominant, pair_kind, merge_kind, rngs["thhf_specific"])
                         if specific else None)
        self.full = (FusionBranch(width, dominant, pair_kind, merge_kind, rngs["thhf_full"])
                     if full else None)

    def __call__(self, i_tilde: dict, h_tilde: dict) -> FusionOutputs:
        i_pairs, I = self.specific(i_tilde) if self.specific else ({}, None)
        h_pairs, M = self.full(h_tilde) if self.full else ({}, None)
        return FusionOutputs(i_pairs, h_pairs, I, M)
