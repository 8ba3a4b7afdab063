"""Checkpoint files: config plus named float64 parameter arrays.

Layout (little-endian)::

    magic    4 bytes  b"IMCK"
    version  u32      currently 1
    cfg_len  u32      byte length of the config JSON
    cfg      cfg_len  UTF-8 JSON of ModelConfig, keys sorted
    count    u32      number of parameter arrays
    then per array, in model registry order:
        name_len u16, name (UTF-8)
        ndim     u8,  ndim x u32 extents
        values   prod(extents) x f64, row-major
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import InterMulti

MAGIC = b"IMCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(cfg: ModelConfig, state: dict[str, np.ndarray]) -> bytes:
    cfg_bytes = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg_bytes)), cfg_bytes,
             struct.pack("<I", len(state))]
    for name, arr in state.items():
        raw = name.encode()
        arr = np.asarray(arr, dtype=np.float64)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes, source: str = "<bytes>") -> tuple[ModelConfig, dict[str, np.ndarray]]:
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{source}: truncated checkpoint")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    version, cfg_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    cfg = ModelConfig.from_dict(json.loads(take(cfg_len).decode()))
    (count,) = struct.unpack("<I", take(4))
    state = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape))
        state[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(buf):
        raise CheckpointError(f"{source}: trailing bytes after parameters")
    return cfg, state


def save_checkpoint(path, model: InterMulti) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(model.cfg, model.state_dict()))
    os.replace(tmp, path)


def load_checkpoint(path) -> InterMulti:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    cfg, state = decode_checkpoint(buf, str(path))
    model = InterMulti(cfg)
    model.load_state_dict(state)
    return model
