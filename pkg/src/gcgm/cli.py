"""Command-line entry point: ``gcgm gen | train | eval | inspect-pool``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError, NonFiniteValue, SchemaError
from .evaluation import evaluate, random_assignment, spectral_match
from .graph import SyntheticConfig, generate_dataset, load_dataset, save_dataset, training_graphs
from .losses import LossConfig
from .matcher import ModelConfig, Setting, load_model, save_model
from .pool import AugPairEntry, BiasConfig, Sampler, pool_snapshot, write_pool_snapshot
from .training import TrainConfig, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("gcgm")


@dataclass
class RunConfig:
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    val_fraction: float = 0.2
    baseline_seed: int = 0

    def to_dict(self) -> dict:
        return {"synthetic": dataclasses.asdict(self.synthetic), "train": self.train.to_dict(),
                "val_fraction": self.val_fraction, "baseline_seed": self.baseline_seed}


def _line_of(text: str, key: str) -> int:
    needle = f'"{key}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return 1


def _build(cls, data: Any, section: str, path: str, text: str, nested: dict | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:{_line_of(text, section)}: section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown field {section}.{key}")
        if nested and key in nested:
            value = _build(nested[key], value, f"{section}.{key}", path, text)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:{_line_of(text, section)}: {section}: {exc}") from exc


def load_run_config(path: str | None) -> RunConfig:
    """Parse a JSON run config; missing fields take defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    cfg = _build(RunConfig, raw, "config", path, text, nested={
        "synthetic": SyntheticConfig, "train": TrainConfig})
    if isinstance(cfg.train, TrainConfig):
        t = cfg.train
        for attr, cls in (("bias", BiasConfig), ("loss", LossConfig), ("model", ModelConfig)):
            if isinstance(getattr(t, attr), dict):
                setattr(t, attr, _build(cls, getattr(t, attr), f"train.{attr}", path, text))
    try:
        cfg.synthetic.validate()
        cfg.train.validate()
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not 0.0 <= cfg.val_fraction < 1.0:
        raise ConfigError(f"{path}:{_line_of(text, 'val_fraction')}: val_fraction must be in [0, 1)")
    return cfg


def _echo_config(cfg: RunConfig, out_path: str) -> None:
    with open(f"{out_path}.config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_gen(args) -> int:
    cfg = load_run_config(args.config)
    ds = generate_dataset(cfg.synthetic)
    save_dataset(ds, args.out)
    _echo_config(cfg, args.out)
    pairs = ds.all_pairs()
    sizes = sorted({(p.source.num_nodes, p.target.num_nodes) for p in pairs})
    print(f"wrote {args.out}: {len(ds.classes)} classes, {len(pairs)} pairs, "
          f"node counts (source, target) {sizes}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.sampler:
        cfg.train.bias.sampler = Sampler(args.sampler)
    ds = load_dataset(args.data)
    train_pairs, val_pairs = ds.split(cfg.val_fraction)
    graphs = training_graphs(train_pairs)
    if not graphs:
        raise SchemaError(f"{args.data}: dataset holds no training graphs")
    model, tlog, pool = train(graphs, val_pairs, cfg.train)
    save_model(model, args.out, extra={
        "pool": [e.to_dict() for e in pool],
        "train_config": cfg.train.to_dict(),
        "best_epoch": tlog.best_epoch,
    })
    tlog.write_csv(args.log)
    write_pool_snapshot(pool, f"{args.out}.pool.json")
    _echo_config(cfg, args.out)
    print(f"trained {len(tlog.rows)} epochs on {len(graphs)} graphs; "
          f"best val F1 {tlog.best_val_f1:.4f} at epoch {tlog.best_epoch}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    ds = load_dataset(args.data)
    pairs = ds.all_pairs()
    if args.baseline == "sm":
        matcher, method = spectral_match, "sm"
    elif args.baseline == "random":
        matcher, method = random_assignment(cfg.baseline_seed), "random"
    else:
        if not args.model:
            raise ConfigError("eval needs --model unless --baseline is given")
        matcher, method = load_model(args.model)[0], "gcgm"
    report = evaluate(matcher, pairs, args.setting, method=method, threads=args.threads)
    report.write_csv(args.out)
    report.write_json(f"{args.out}.json")
    print(f"{method} {report.setting}: F1 {report.mean:.4f} +/- {report.std:.4f} "
          f"over {len(report.f1)} pairs")
    return EXIT_OK


def cmd_inspect_pool(args) -> int:
    _, raw = load_model(args.model)
    if "pool" not in raw:
        raise SchemaError(f"{args.model}: checkpoint has no pool section")
    pool = [AugPairEntry.from_dict(d) for d in raw["pool"]]
    write_pool_snapshot(pool, args.out)
    for row in pool_snapshot(pool)[:10]:
        phi = "-" if row["phi"] is None else f"{row['phi']:.3f}"
        print(f"{row['weight']:9.4f}  phi={phi:>5}  n={row['count']:<4d} {row['label']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcgm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1,
                        help="maximum worker threads (default 1, serial and deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic Delaunay dataset")
    p.add_argument("--config", help="JSON run config (defaults when omitted)")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="self-supervised pre-training")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--config", help="JSON run config (defaults when omitted)")
    p.add_argument("--out", required=True, help="model checkpoint to write")
    p.add_argument("--log", required=True, help="per-epoch CSV log to write")
    p.add_argument("--sampler", choices=[s.value for s in Sampler],
                   help="override the config's augmentation sampler")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model or baseline on a dataset")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--model", help="model checkpoint")
    p.add_argument("--config", help="JSON run config (only baseline_seed is read)")
    p.add_argument("--setting", choices=[s.value for s in Setting], default="intsec",
                   help="intsec keeps shared nodes only; unfilt keeps outliers")
    p.add_argument("--out", required=True, help="per-pair CSV report to write")
    p.add_argument("--baseline", choices=["sm", "random"],
                   help="evaluate spectral matching or random assignment instead of a model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-pool", parents=[common], help="dump a trained model's augmentation pool")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--out", required=True, help="JSON snapshot to write")
    p.set_defaults(func=cmd_inspect_pool)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("ignore", category=UserWarning)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteValue as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
