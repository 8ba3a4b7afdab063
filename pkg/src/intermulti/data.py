"""Utterance samples, batching, and the on-disk feature container.

Container layout (all little-endian)::

    magic   4 bytes  b"IMFT"
    version u32      currently 1
    count   u32      number of samples
    then per sample:
        kind   u8    0 = intensity (f64 follows), 1 = class id (u16 follows)
        label  f64 | u16
        for each modality in t, v, a order:
            L  u32   sequence length
            D  u32   feature width
            L*D f64  values, row-major

A manifest is line-delimited JSON, one ``{"file": ..., "split": ...}`` object
per container file; relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"IMFT"
VERSION = 1
KIND_REGRESSION = 0
KIND_CLASS = 1
SPLITS = ("train", "val", "test")
LABEL_RANGE = (-3.0, 3.0)


class DataError(ValueError):
    pass


@dataclass(eq=False)
class UtteranceSample:
    text: np.ndarray  # [L_t, D_t]
    visual: np.ndarray  # [L_v, D_v]
    acoustic: np.ndarray  # [L_a, D_a]
    label: float | int

    def __post_init__(self):
        for name in ("text", "visual", "acoustic"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
                raise DataError(f"{name} features must be a non-empty [L, D] array, got {arr.shape}")
            setattr(self, name, arr)

    @property
    def label_kind(self) -> int:
        return KIND_CLASS if isinstance(self.label, (int, np.integer)) else KIND_REGRESSION

    def modality(self, m: str) -> np.ndarray:
        return {"t": self.text, "v": self.visual, "a": self.acoustic}[m]

    def dims(self) -> tuple[int, int, int]:
        return self.text.shape[1], self.visual.shape[1], self.acoustic.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, UtteranceSample):
            return NotImplemented
        return (self.label_kind == other.label_kind
                and self.label == other.label
                and all(np.array_equal(self.modality(m), other.modality(m)) for m in "tva"))


@dataclass(eq=False)
class FeatureDataset:
    samples: list[UtteranceSample]
    task: str
    split: str

    def __post_init__(self):
        validate_samples(self.samples, self.task)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.samples[0].dims()

    def labels(self) -> np.ndarray:
        kind = np.int64 if self.task == "classification" else np.float64
        return np.array([s.label for s in self.samples], dtype=kind)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (self.task == other.task and self.split == other.split
                and len(self) == len(other)
                and all(a == b for a, b in zip(self.samples, other.samples)))


def validate_samples(samples: list[UtteranceSample], task: str) -> None:
    if not samples:
        raise DataError("dataset is empty")
    want = KIND_CLASS if task == "classification" else KIND_REGRESSION
    dims = samples[0].dims()
    for n, s in enumerate(samples):
        if s.dims() != dims:
            raise DataError(f"sample {n}: feature dims {s.dims()} differ from {dims}")
        if s.label_kind != want:
            raise DataError(f"sample {n}: label {s.label!r} does not match task {task}")
        if want == KIND_REGRESSION:
            if not (np.isfinite(s.label) and LABEL_RANGE[0] <= s.label <= LABEL_RANGE[1]):
                raise DataError(f"sample {n}: label {s.label} outside {list(LABEL_RANGE)}")
        elif s.label < 0:
            raise DataError(f"sample {n}: negative class id {s.label}")


@dataclass
class Batch:
    seqs: dict  # modality -> [B, L_max, D] zero-padded
    lengths: dict  # modality -> [B] valid lengths
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.labels.shape[0]


def collate(samples: list[UtteranceSample]) -> Batch:
    if not samples:
        raise ValueError("cannot collate an empty batch")
    seqs, lengths = {}, {}
    for m in "tva":
        arrays = [s.modality(m) for s in samples]
        lens = np.array([a.shape[0] for a in arrays], dtype=np.int64)
        dim = arrays[0].shape[1]
        if any(a.shape[1] != dim for a in arrays):
            raise DataError(f"modality {m}: feature widths differ within batch")
        padded = np.zeros((len(arrays), int(lens.max()), dim))
        for n, a in enumerate(arrays):
            padded[n, : a.shape[0]] = a
        seqs[m], lengths[m] = padded, lens
    if samples[0].label_kind == KIND_CLASS:
        labels = np.array([s.label for s in samples], dtype=np.int64)
    else:
        labels = np.array([s.label for s in samples], dtype=np.float64)
    return Batch(seqs, lengths, labels)


# ---------------------------------------------------------------- container IO

def encode_container(samples: list[UtteranceSample]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(samples))]
    for s in samples:
        if s.label_kind == KIND_CLASS:
            if not 0 <= s.label <= 0xFFFF:
                raise DataError(f"class id {s.label} does not fit in u16")
            parts.append(struct.pack("<BH", KIND_CLASS, int(s.label)))
        else:
            parts.append(struct.pack("<Bd", KIND_REGRESSION, float(s.label)))
        for m in "tva":
            arr = s.modality(m)
            parts.append(struct.pack("<II", *arr.shape))
            parts.append(arr.astype("<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf, self.pos, self.source = buf, 0, source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataError(f"{self.source}: truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_container(buf: bytes, source: str = "<bytes>") -> list[UtteranceSample]:
    r = _Reader(buf, source)
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise DataError(f"{source}: malformed header (bad magic or too short)")
    r.pos = 4
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise DataError(f"{source}: unsupported container version {version}")
    samples = []
    for n in range(count):
        what = f"sample {n}"
        (kind,) = r.unpack("<B", what)
        if kind == KIND_REGRESSION:
            (label,) = r.unpack("<d", what)
        elif kind == KIND_CLASS:
            (label,) = r.unpack("<H", what)
            label = int(label)
        else:
            raise DataError(f"{source}: sample {n}: unknown label kind {kind}")
        feats = []
        for m in "tva":
            length, dim = r.unpack("<II", what)
            if length == 0 or dim == 0:
                raise DataError(f"{source}: sample {n}: empty {m} sequence")
            raw = r.take(8 * length * dim, what)
            feats.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(length, dim))
        samples.append(UtteranceSample(*feats, label=label))
    if r.pos != len(buf):
        raise DataError(f"{source}: {len(buf) - r.pos} trailing bytes after {count} samples")
    return samples


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_container(path, samples: list[UtteranceSample]) -> None:
    _atomic_write(Path(path), encode_container(samples))


def read_container(path) -> list[UtteranceSample]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    return decode_container(buf, str(path))


# ---------------------------------------------------------------- manifests

def read_manifest(path) -> list[dict]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from exc
    entries = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(entry, dict) or set(entry) != {"file", "split"}:
            raise DataError(f"{path}:{lineno}: entries need exactly the fields 'file' and 'split'")
        if entry["split"] not in SPLITS:
            raise DataError(f"{path}:{lineno}: unknown split {entry['split']!r}")
        entries.append(entry)
    return entries


def load_dataset(manifest, split: str, task: str | None = None) -> FeatureDataset:
    """All samples of ``split``, in manifest order then file order."""
    manifest = Path(manifest)
    entries = [e for e in read_manifest(manifest) if e["split"] == split]
    if not entries:
        raise DataError(f"{manifest}: no files for split {split!r}")
    samples: list[UtteranceSample] = []
    for e in entries:
        samples.extend(read_container(manifest.parent / e["file"]))
    if not samples:
        raise DataError(f"{manifest}: split {split!r} has no samples")
    if task is None:
        task = "classification" if samples[0].label_kind == KIND_CLASS else "regression"
    return FeatureDataset(samples, task, split)


def write_dataset(out_dir, datasets: list[FeatureDataset], manifest_name: str = "manifest.jsonl") -> Path:
    """Write one container per split plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for d in datasets:
        name = f"{d.split}.imft"
        write_container(out_dir / name, d.samples)
        lines.append(json.dumps({"file": name, "split": d.split}))
    manifest = out_dir / manifest_name
    _atomic_write(manifest, ("\n".join(lines) + "\n").encode())
    return manifest
