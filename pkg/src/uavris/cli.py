"""Command-line entry point: train, evaluate, sweep, and export.

Each training run gets its own directory named from the variant, spatial
discount, seed, and config hash, holding a manifest, the exact config
snapshot, per-episode metrics, and parameter checkpoints.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, export as export_mod
from .config import (
    VARIANTS,
    ConfigError,
    ExperimentConfig,
    RunManifest,
    parse_config,
    parse_override,
)
from .training import TrainingDiverged, evaluate, load_checkpoint, train


def run_dir_name(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.variant}-a{cfg.alpha:g}-seed{seed}-{cfg.config_hash()}"


def run_training(cfg: ExperimentConfig, seed: int, out_root: Path, force: bool = False) -> Path:
    run_dir = out_root / run_dir_name(cfg, seed)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        existing = RunManifest.load(manifest_path)
        if existing.config_hash == cfg.config_hash() and not force:
            raise FileExistsError(
                f"{run_dir} already holds a run with this config hash; use --force to overwrite"
            )
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.start(cfg, seed, __version__)
    manifest.write(manifest_path)
    (run_dir / "config.yaml").write_text(cfg.to_yaml())

    stream = export_mod.MetricsStream(run_dir / "metrics.csv")
    train(cfg, seed, checkpoint_dir=run_dir / "checkpoints", on_episode=stream.append)

    files = sorted(str(p.relative_to(run_dir)) for p in run_dir.rglob("*") if p.is_file())
    manifest.finish(files)
    manifest.write(manifest_path)
    return run_dir


def cmd_train(args) -> int:
    overrides = dict(parse_override(s) for s in args.set or [])
    cfg = parse_config(args.config, overrides)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    out_root = Path(args.out or cfg.out_dir)
    for seed in seeds:
        run_dir = run_training(cfg, seed, out_root, force=args.force)
        print(f"run complete: {run_dir}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = Path(args.ckpt)
    run_dir = ckpt.parent.parent if ckpt.parent.name == "checkpoints" else ckpt.parent
    config_path = Path(args.config) if args.config else run_dir / "config.yaml"
    if not config_path.exists():
        print(f"error: no config found at {config_path}", file=sys.stderr)
        return 2
    cfg = parse_config(config_path)
    controller = load_checkpoint(ckpt, cfg)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else cfg.seeds
    episodes = evaluate(controller, cfg, seeds, episodes_per_seed=args.episodes, greedy=not args.sample)
    out_dir = Path(args.out) if args.out else run_dir
    eval_path = export_mod.write_eval(out_dir / "eval.csv", episodes)
    phase_path = export_mod.write_phases(out_dir / "phases.csv", episodes, (cfg.ris_rows, cfg.ris_cols))
    print(f"wrote {eval_path} and {phase_path}")
    return 0


def cmd_sweep(args) -> int:
    overrides = dict(parse_override(s) for s in args.set or [])
    base = parse_config(args.config, overrides)
    # full grid by default: every protocol variant at each spatial discount
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else [0.8, 0.9, 1.0]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else base.seeds
    out_root = Path(args.out or base.out_dir)
    failures = 0
    for variant in variants:
        for alpha in alphas:
            cfg = parse_config(args.config, {**overrides, "variant": variant, "alpha": alpha})
            for seed in seeds:
                try:
                    run_dir = run_training(cfg, seed, out_root, force=args.force)
                    print(f"run complete: {run_dir}")
                except (TrainingDiverged, FileExistsError) as exc:
                    print(f"run failed ({variant}, alpha={alpha}, seed={seed}): {exc}", file=sys.stderr)
                    failures += 1
    return 1 if failures else 0


def cmd_export(args) -> int:
    run_dir = Path(args.run)
    cfg = None
    config_path = run_dir / "config.yaml"
    if config_path.exists():
        cfg = parse_config(config_path)
    path = export_mod.export(run_dir, args.what, Path(args.out) if args.out else None, cfg)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavris", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one or more seeds of a config")
    p_train.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    p_train.add_argument("--seed", type=int, help="override the config seed list with one seed")
    p_train.add_argument("--out", help="output root directory")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE", help="inline config override")
    p_train.add_argument("--force", action="store_true", help="overwrite an existing identical run")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="roll out a checkpoint and export logs")
    p_eval.add_argument("--ckpt", required=True, help="checkpoint .npz path")
    p_eval.add_argument("--config", help="config path (defaults to the run's snapshot)")
    p_eval.add_argument("--seeds", help="comma-separated evaluation seeds")
    p_eval.add_argument("--episodes", type=int, default=1, help="episodes per seed")
    p_eval.add_argument("--sample", action="store_true", help="sample actions instead of greedy")
    p_eval.add_argument("--out", help="output directory (defaults to the run dir)")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="train a grid of variants x alphas x seeds")
    p_sweep.add_argument("--config", help="base YAML config")
    p_sweep.add_argument("--variants", help="comma-separated protocol variants")
    p_sweep.add_argument("--alphas", help="comma-separated spatial discounts")
    p_sweep.add_argument("--seeds", help="comma-separated seeds")
    p_sweep.add_argument("--out", help="output root directory")
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE", help="inline config override")
    p_sweep.add_argument("--force", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_export = sub.add_parser("export", help="materialize a named CSV from a run directory")
    p_export.add_argument("--run", required=True, help="run directory")
    p_export.add_argument("--what", required=True, choices=export_mod.EXPORT_KINDS)
    p_export.add_argument("--out", help="output CSV path")
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, FileExistsError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
