"""Command-line entry point: ``intermulti {synth,train,eval,ablate,depmetric}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, ModelConfig
from .data import SPLITS, DataError, load_dataset, read_manifest, write_dataset
from .decouple import dependency_table
from .model import predict
from .runs import evaluate, run_ablation_grid, run_training, write_atomic
from .synthetic import SyntheticSpec, generate_synthetic, linear_baseline
from .training import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("intermulti")


def load_config(args) -> ModelConfig:
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        cfg = ModelConfig.from_json(text, str(path))
    else:
        cfg = ModelConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "max_epochs", None) is not None:
        changes["max_epochs"] = args.max_epochs
    if isinstance(getattr(args, "ablation", None), str):
        changes["ablation"] = args.ablation
    return cfg.replace(**changes) if changes else cfg


def load_splits(manifest, task: str | None) -> dict:
    out = {}
    for split in SPLITS:
        try:
            out[split] = load_dataset(manifest, split, task)
        except DataError as exc:
            if "no files for split" in str(exc) and split == "test":
                continue
            raise
    return out


def check_dims(cfg: ModelConfig, datasets: dict) -> None:
    want = (cfg.d_text, cfg.d_visual, cfg.d_acoustic)
    for split, d in datasets.items():
        if d.dims != want:
            raise DataError(f"{split} split has feature dims {d.dims}, config expects {want}")


def emit(payload: dict, out: str | None, name: str) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        write_atomic(path / name, text)
    sys.stdout.write(text)


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_samples=args.n, seq_len_t=args.seq_len, seq_len_v=args.seq_len, seq_len_a=args.seq_len,
        alpha=args.alpha, beta_t=args.beta[0], beta_v=args.beta[1], beta_a=args.beta[2],
        interaction=args.interaction, sigma=args.sigma,
        seed=args.seed if args.seed is not None else SyntheticSpec.seed,
    )
    try:
        splits = generate_synthetic(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = write_dataset(args.out, list(splits))
    summary = {
        "spec": asdict(spec),
        "manifest": manifest.name,
        "sizes": {d.split: len(d) for d in splits},
        "linear_baseline_val_mse": linear_baseline(splits[0], splits[1]),
    }
    emit(summary, args.out, "synth.json")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args)
    datasets = load_splits(args.data, cfg.task)
    check_dims(cfg, datasets)
    record = run_training(cfg, datasets, args.out)
    log.info("wrote %s", Path(args.out) / "run.json")
    summary = {"best_epoch": record.best_epoch, "metrics": record.metrics,
               "linear_baseline_val_mse": record.linear_baseline_val_mse}
    sys.stdout.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data, args.split, model.cfg.task)
    check_dims(model.cfg, {args.split: dataset})
    emit({"split": args.split, "metrics": evaluate(model, dataset)}, args.out, "eval.json")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load_config(args)
    ids = [a for chunk in args.ablation for a in chunk.split(",") if a]
    datasets = load_splits(args.data, cfg.task)
    check_dims(cfg, datasets)
    rows = run_ablation_grid(ids, cfg, datasets, args.out, parallel=args.parallel)
    sys.stdout.write((Path(args.out) / "ablation.csv").read_text())
    log.info("%d ablation runs written under %s", len(rows), args.out)
    return EXIT_OK


def cmd_depmetric(args) -> int:
    model = load_checkpoint(args.checkpoint)
    split = args.split
    if split is None:
        present = {e["split"] for e in read_manifest(args.data)}
        split = "test" if "test" in present else "val"
    dataset = load_dataset(args.data, split, model.cfg.task)
    check_dims(model.cfg, {dataset.split: dataset})
    _, reps = predict(model, dataset.samples)
    emit(dependency_table(reps), args.out, "depmetric.json")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intermulti", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, out=True, out_required=False):
        p.add_argument("--config", help="JSON file mirroring ModelConfig")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--data", required=True, help="dataset manifest (.jsonl)")
        if out:
            p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="write the planted-interaction benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, default=SyntheticSpec.n_samples)
    p.add_argument("--seq-len", type=int, default=SyntheticSpec.seq_len_t)
    p.add_argument("--alpha", type=float, default=SyntheticSpec.alpha)
    p.add_argument("--beta", type=float, nargs=3, metavar=("T", "V", "A"),
                   default=[SyntheticSpec.beta_t, SyntheticSpec.beta_v, SyntheticSpec.beta_a])
    p.add_argument("--interaction", type=float, default=SyntheticSpec.interaction)
    p.add_argument("--sigma", type=float, default=SyntheticSpec.sigma)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model")
    common(p, out_required=True)
    p.add_argument("--ablation")
    p.add_argument("--max-epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics of a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train an ablation grid")
    common(p, out_required=True)
    p.add_argument("--ablation", action="append", required=True,
                   help="ablation id(s), repeatable or comma-separated")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("depmetric", help="dependency between decoupled representations")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_depmetric)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NotImplementedError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
