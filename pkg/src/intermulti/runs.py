"""Training runs and ablation grids that write their results to disk."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .checkpoint import save_checkpoint
from .config import ABLATIONS, UNSUPPORTED_ABLATIONS, ConfigError, ModelConfig
from .data import FeatureDataset
from .decouple import control_table, dependency_table
from .metrics import metrics
from .model import InterMulti, predict
from .synthetic import linear_baseline
from .training import train

RECORD_VERSION = 1
WALL_CLOCK_KEY = "wall_clock_seconds"

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    config: dict
    seed: int
    epochs: list[dict]
    best_epoch: int
    stopped_early: bool
    num_parameters: int
    metrics: dict
    dependency: dict
    dependency_control: dict
    linear_baseline_val_mse: float | None
    wall_clock_seconds: float = 0.0
    version: int = RECORD_VERSION
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunRecord:
        return cls(**json.loads(text))


def masked_record_json(text: str) -> str:
    """The record JSON with the wall-clock field zeroed, for determinism checks."""
    d = json.loads(text)
    d[WALL_CLOCK_KEY] = 0.0
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def epochs_csv(history) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "val_loss", "improved"])
    for r in history:
        writer.writerow([r.epoch, repr(float(r.train_loss)), repr(float(r.val_loss)), int(r.improved)])
    return buf.getvalue()


def eval_split(datasets: dict) -> str:
    return "test" if "test" in datasets else "val"


def evaluate(model: InterMulti, dataset: FeatureDataset) -> dict:
    preds, _ = predict(model, dataset.samples)
    return metrics(preds, dataset.labels(), model.cfg.task).to_dict()


def run_training(cfg: ModelConfig, datasets: dict[str, FeatureDataset], out_dir) -> RunRecord:
    """Train on ``datasets['train']``, early-stop on ``'val'``, report every split present."""
    for split in ("train", "val"):
        if split not in datasets:
            raise ConfigError(f"run needs a '{split}' split")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    model, state = train(cfg, datasets["train"], datasets["val"])
    report = {split: evaluate(model, d) for split, d in sorted(datasets.items())}
    _, reps = predict(model, datasets[eval_split(datasets)].samples)
    baseline = None
    if cfg.task == "regression":
        try:
            baseline = linear_baseline(datasets["train"], datasets["val"])
        except ValueError as exc:
            log.warning("%s; recording no baseline", exc)
    record = RunRecord(
        config=cfg.to_dict(),
        seed=cfg.seed,
        epochs=[asdict(r) for r in state.history],
        best_epoch=state.best_epoch,
        stopped_early=state.stopped_early,
        num_parameters=model.num_parameters(),
        metrics=report,
        dependency=dependency_table(reps),
        dependency_control=control_table(reps),
        linear_baseline_val_mse=baseline,
        extra={"best_val_loss": state.best_val_loss},
    )
    record.wall_clock_seconds = time.perf_counter() - start
    save_checkpoint(out_dir / "checkpoint.imck", model)
    write_atomic(out_dir / "epochs.csv", epochs_csv(state.history))
    write_atomic(out_dir / "run.json", record.to_json())
    return record


def check_grid(ids) -> list[str]:
    ids = list(ids)
    if not ids:
        raise ConfigError("ablation grid is empty")
    for a in ids:
        if a not in ABLATIONS:
            raise ConfigError(f"unknown ablation id {a!r}")
        if a in UNSUPPORTED_ABLATIONS:
            raise ConfigError(f"ablation {a} ({ABLATIONS[a]}) is not implemented")
    return ids


TABLE_COLUMNS = ["ablation", "name", "params", "best_epoch", "val_loss", "mae", "corr",
                 "acc2_nonneg", "f1_nonneg", "acc2_pos", "f1_pos", "acc7", "accuracy"]


def table_row(ablation: str, record: RunRecord, split: str) -> dict:
    m = record.metrics[split]
    row = {"ablation": ablation, "name": ABLATIONS[ablation], "params": record.num_parameters,
           "best_epoch": record.best_epoch, "val_loss": record.extra["best_val_loss"]}
    for key in TABLE_COLUMNS[5:]:
        row[key] = m.get(key)
    for k, v in m.get("per_class", {}).items():
        row[f"f1_class{k}"] = v["f1"]
    return row


def table_csv(rows: list[dict]) -> str:
    columns = list(TABLE_COLUMNS)
    for row in rows:
        columns += [k for k in row if k not in columns]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else
                             repr(float(row[k])) if isinstance(row.get(k), float) else row[k])
                         for k in columns})
    return buf.getvalue()


def _grid_entry(args):
    ablation, cfg, datasets, out_dir = args
    return run_training(cfg.replace(ablation=ablation), datasets, Path(out_dir) / ablation)


def run_ablation_grid(ids, cfg: ModelConfig, datasets: dict[str, FeatureDataset], out_dir,
                      parallel: int = 1) -> list[dict]:
    """Train each ablation on identical data and seed; write per-run records and ablation.csv."""
    ids = check_grid(ids)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(a, cfg, datasets, str(out_dir)) for a in ids]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(_grid_entry, jobs))
    else:
        records = [_grid_entry(j) for j in jobs]
    split = eval_split(datasets)
    rows = [table_row(a, r, split) for a, r in zip(ids, records)]
    write_atomic(out_dir / "ablation.csv", table_csv(rows))
    return rows
