"""Command-line interface.

Verbs: train, eval, generalize, distance, sweep, export-latents. Every run
echoes its fully resolved config into the run directory, so a command line
plus a seed is a complete description of the run. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import trainer
from .config import PROFILES, TrainConfig, apply_overrides, full_config, parse_text


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (flat 'section.key = value' lines)")
    parser.add_argument("--profile", choices=sorted(PROFILES),
                        help="named base profile the config/overrides build on")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int, help="master seed override")


def _load_config(args) -> TrainConfig:
    base = PROFILES[args.profile]() if args.profile else full_config()
    if args.config:
        cfg = parse_text(Path(args.config).read_text(), base=base)
    else:
        cfg = base
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg.validate()


def _parse_seeds(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def cmd_train(args) -> int:
    cfg = _load_config(args)
    run_dir = trainer.train(cfg, run_dir=args.run_dir, resume_from=args.resume_from)
    print(f"run directory: {run_dir}")
    return 0


def cmd_eval(args) -> int:
    snapshot = trainer.load_policy(args.snapshot)
    env_cfg = snapshot.cfg.env
    if args.background:
        env_cfg = dataclasses.replace(env_cfg, background=args.background)
    mean, std, _ = trainer.evaluate(snapshot, env_cfg, args.episodes, args.eval_seed)
    print(f"episodes={args.episodes} background={env_cfg.background} "
          f"mean_return={mean:.3f} std={std:.3f}")
    return 0


def cmd_generalize(args) -> int:
    row = trainer.generalization_eval(
        args.snapshot, args.train_bg, args.test_bg, episodes=args.episodes, seed=args.eval_seed
    )
    print("train_bg,test_bg,mean,std,gap")
    print(f"{row['train_bg']},{row['test_bg']},{row['mean']:.6g},{row['std']:.6g},{row['gap']:.6g}")
    return 0


def cmd_distance(args) -> int:
    encoders = {}
    reference_cfg = None
    for item in args.snapshots:
        if "=" not in item:
            raise ValueError(f"--snapshot expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        snap = trainer.load_policy(path)
        encoders[name] = snap.encoder
        if name == args.reference:
            reference_cfg = snap.cfg
    if reference_cfg is None:
        raise ValueError(f"reference method {args.reference!r} missing from --snapshot list")
    rows = trainer.representation_distance(
        encoders, reference_cfg.env, n_pairs=args.pairs, seed=args.eval_seed,
        reference=args.reference,
    )
    print("pairing,method,raw,normalized")
    for row in rows:
        norm = "degenerate" if row["normalized"] is None else f"{row['normalized']:.4f}"
        print(f"{row['pairing']},{row['method']},{row['raw']:.6g},{norm}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.grid == "paper":
        psi, adv = trainer.PAPER_SWEEP_PSI, trainer.PAPER_SWEEP_ADV
    else:
        parts = dict(part.split("=", 1) for part in args.grid.split(";"))
        psi = [float(v) for v in parts["psi"].split(",")]
        adv = [float(v) for v in parts["adv"].split(",")]
    seeds = _parse_seeds(args.seeds) or [cfg.seed]
    run_root = Path(args.run_dir) if args.run_dir else trainer.default_run_dir(cfg).parent / "sweep"
    rows = trainer.sweep(cfg, psi, adv, seeds, run_root)
    print("lambda_psi,lambda_adv,mean_return")
    for row in rows:
        print(f"{row['lambda_psi']:g},{row['lambda_adv']:g},{row['mean_return']:.6g}")
    print(f"results table: {run_root / 'sweep_results.csv'}")
    return 0


def cmd_export_latents(args) -> int:
    snapshot = trainer.load_policy(args.snapshot)
    labeled = trainer.collect_labeled_observations(
        snapshot.cfg.env, n_states=args.states, seed=args.eval_seed
    )
    out = trainer.export_latents(snapshot.encoder, labeled, args.out)
    print(f"wrote {len(labeled)} rows to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdrl",
        description="Train and evaluate self-predictive-dynamics agents on pixel control tasks.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_train = sub.add_parser("train", help="run one training job")
    _add_config_args(p_train)
    p_train.add_argument("--run-dir", help="run directory (default derives from the config)")
    p_train.add_argument("--resume-from", help="checkpoint file to resume from")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained snapshot")
    p_eval.add_argument("--snapshot", required=True, help="checkpoint file")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--background", help="override the evaluation background kind")
    p_eval.add_argument("--eval-seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_gen = sub.add_parser("generalize", help="evaluate one snapshot under two backgrounds")
    p_gen.add_argument("--snapshot", required=True)
    p_gen.add_argument("--train-bg", required=True)
    p_gen.add_argument("--test-bg", required=True)
    p_gen.add_argument("--episodes", type=int, default=10)
    p_gen.add_argument("--eval-seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_generalize)

    p_dist = sub.add_parser("distance", help="representation-distance table across methods")
    p_dist.add_argument("--snapshot", dest="snapshots", action="append", required=True,
                        metavar="NAME=PATH", help="method snapshot (repeatable)")
    p_dist.add_argument("--reference", default="spd", help="method normalized to 1.00")
    p_dist.add_argument("--pairs", type=int, default=50)
    p_dist.add_argument("--eval-seed", type=int, default=0)
    p_dist.set_defaults(func=cmd_distance)

    p_sweep = sub.add_parser("sweep", help="loss-weight grid sweep")
    _add_config_args(p_sweep)
    p_sweep.add_argument("--grid", default="paper",
                         help="'paper' or 'psi=v,v;adv=v,v' explicit values")
    p_sweep.add_argument("--seeds", default="", help="comma-separated seeds (default: config seed)")
    p_sweep.add_argument("--run-dir", help="root directory for sweep cells")
    p_sweep.set_defaults(func=cmd_sweep)

    p_latents = sub.add_parser("export-latents", help="dump encoder latents for projection")
    p_latents.add_argument("--snapshot", required=True)
    p_latents.add_argument("--out", required=True, help="output CSV path")
    p_latents.add_argument("--states", type=int, default=50)
    p_latents.add_argument("--eval-seed", type=int, default=0)
    p_latents.set_defaults(func=cmd_export_latents)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
