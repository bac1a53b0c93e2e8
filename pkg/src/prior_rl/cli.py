"""Command line entry point: ``prior-rl {train,eval,gen-dataset,validate-prop1,report}``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .core import ConfigError, PriorRLError
from .dataset import Behavior, generate_dataset, load_dataset
from .envs import make_env
from .posterior import validate_prop1, write_prop1_csv
from .prior import make_prior
from .report import aggregate_report, write_report
from .train import METRIC_COLUMNS, Trainer
from .value import load_checkpoint, save_checkpoint

log = logging.getLogger("prior_rl")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class OutputExists(PriorRLError):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def file_sha1(path: Path) -> str:
    data = path.read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _guard(paths: Sequence[Path], overwrite: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not overwrite:
        raise OutputExists(f"refusing to overwrite {', '.join(existing)}; pass --overwrite")


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    for name in ("alpha", "beta", "k", "lr", "gamma", "total_env_steps", "epochs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[f"learner.{name}"] = value
    if getattr(args, "dataset", None):
        overrides["dataset"] = args.dataset
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected KEY=VALUE")
        overrides[key.strip()] = _parse_value(value)
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return cfg.with_overrides(overrides) if overrides else cfg


def _seeds(cfg: ExperimentConfig, seed: Optional[int]) -> list[int]:
    return list(cfg.seeds) if seed is None else [seed]


def write_metrics(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())
            fh.flush()


def run_training(cfg: ExperimentConfig, seeds: Sequence[int], overwrite: bool = False,
                 transport=None) -> list[Path]:
    out = Path(cfg.output_dir)
    targets = [out / f"metrics_seed{s}.csv" for s in seeds] + [out / f"ckpt_seed{s}.npz" for s in seeds]
    _guard(targets, overwrite)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(cfg.dataset) if cfg.dataset else None
    written = []
    for seed in seeds:
        trainer = Trainer(cfg, seed, dataset, transport)
        metrics = out / f"metrics_seed{seed}.csv"
        t0 = time.perf_counter()
        try:
            write_metrics(metrics, trainer.run())
        except Exception:
            diag = out / f"error_seed{seed}.json"
            diag.write_text(json.dumps(trainer.diagnostic, indent=2, sort_keys=True) + "\n")
            raise
        ckpt = save_checkpoint(out / f"ckpt_seed{seed}.npz", trainer.params, learner=cfg.learner.kind,
                               seed=seed, env_steps=trainer.env_steps, updates=trainer.updates)
        # timings live beside the metrics so the metrics bytes stay reproducible
        (out / f"timing_seed{seed}.json").write_text(
            json.dumps({"seed": seed, "wall_time_s": time.perf_counter() - t0}) + "\n")
        written += [metrics, ckpt]
        log.info("seed %d done: %s", seed, metrics)
    manifest = {
        "config": cfg.to_dict(),
        "config_sha1": cfg.content_hash(),
        "seeds": list(seeds),
        "files": {p.name: file_sha1(p) for p in written},
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return written + [mpath]


# -- subcommands ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = resolve_config(args)
    for p in run_training(cfg, _seeds(cfg, args.seed), args.overwrite):
        print(p)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    ckpt = Path(args.checkpoint or Path(cfg.output_dir) / f"ckpt_seed{seed}.npz")
    if not ckpt.is_file():
        raise ConfigError("checkpoint", f"file not found: {ckpt}")
    params, meta = load_checkpoint(ckpt, dim=cfg.learner.dim, hidden=cfg.learner.hidden)
    if meta.get("learner") not in (None, cfg.learner.kind):
        raise ConfigError("checkpoint", f"trained as {meta['learner']!r}, config says {cfg.learner.kind!r}")
    trainer = Trainer(cfg.replace(dataset=None) if cfg.learner.kind not in ("cql", "cql_prior", "bc")
                      else cfg, seed)
    trainer.params = params
    mean, se, returns = trainer.evaluate(args.episodes)
    if args.out:
        path = Path(args.out)
        _guard([path], args.overwrite)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "return"])
            for i, r in enumerate(returns):
                w.writerow([i, f"{r:.9g}"])
    print(f"eval_return_mean={mean:.9g} eval_return_stderr={se:.9g} episodes={len(returns)}")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.set:
        cfg = cfg.with_overrides({k: _parse_value(v) for k, _, v in (s.partition("=") for s in args.set)})
    out = Path(args.out or Path(cfg.output_dir) / "dataset.jsonl")
    _guard([out], args.overwrite)
    env = make_env(cfg.env)
    prior = make_prior(cfg.prior, env)
    k = args.k or cfg.prior.k
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    ds = generate_dataset(env, Behavior.parse(args.behavior), args.n, args.ratio, prior, k, rng, out,
                          extra_provenance={"seed": 0 if args.seed is None else args.seed})
    c = ds.counts()
    print(f"{out}: {c['total']} transitions ({c['good']} good, {c['bad']} bad)")
    return EXIT_OK


def cmd_validate_prop1(args) -> int:
    out = Path(args.out or "prop1.csv")
    _guard([out], args.overwrite)
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    rows, warnings = validate_prop1(args.prior, args.q, args.alpha, args.ks, args.n_samples, rng)
    write_prop1_csv(out, rows, warnings, args.alpha)
    for r in rows:
        print(f"k={r.k:<4d} tv={r.tv_distance:.6f}")
    for w in warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_report(args) -> int:
    files = [Path(f) for f in args.files]
    for d in args.runs or []:
        files += sorted(Path(d).glob("metrics_seed*.csv"))
    if not files:
        raise ConfigError("files", "no metrics files given")
    missing = [str(f) for f in files if not f.is_file()]
    if missing:
        raise ConfigError("files", f"not found: {', '.join(missing)}")
    out = Path(args.out or "report")
    _guard([out / "curves.csv", out / "summary.csv"], args.overwrite)
    report = aggregate_report(files)
    for p in write_report(report, out):
        print(p)
    for w in report.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="run a single seed")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--overwrite", action="store_true", help="replace existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="prior-rl", description="RL with action priors from a proposal model")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train one or more seeds")
    t.set_defaults(func=cmd_train)
    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--checkpoint")
    e.add_argument("--episodes", type=int)
    e.set_defaults(func=cmd_eval)
    for sp in (t, e):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--k", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--total-env-steps", dest="total_env_steps", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--dataset")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted override, e.g. learner.backup_mode=soft_logsumexp")

    g = sub.add_parser("gen-dataset", parents=[common], help="collect an offline dataset")
    g.add_argument("--n", type=int, default=1000, help="target number of transitions")
    g.add_argument("--ratio", type=float, default=0.5, help="fraction of transitions from good episodes")
    g.add_argument("--behavior", default="scripted:0.5", help="scripted:Q | random | checkpoint:PATH[:EPS]")
    g.add_argument("--k", type=int, help="candidates per state (default: prior.k)")
    g.add_argument("--set", action="append", metavar="KEY=VALUE")
    g.set_defaults(func=cmd_gen_dataset)

    v = sub.add_parser("validate-prop1", parents=[common], help="Monte-Carlo check of the k -> inf limit")
    v.add_argument("--alpha", type=float, default=1.0)
    v.add_argument("--ks", type=_ints, default=[1, 2, 8, 32, 128])
    v.add_argument("--n-samples", dest="n_samples", type=int, default=100_000)
    v.add_argument("--prior", type=_floats, default=[0.5, 0.3, 0.2])
    v.add_argument("--q", type=_floats, default=[1.0, 0.0, 0.0])
    v.set_defaults(func=cmd_validate_prop1)

    r = sub.add_parser("report", parents=[common], help="aggregate metrics CSVs")
    r.add_argument("files", nargs="*")
    r.add_argument("--runs", action="append", help="directory of metrics_seed*.csv files")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("train", "eval") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PriorRLError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
