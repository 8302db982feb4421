"""Command-line entry point.

Verbs: synth, ingest, extract-flow, extract-mb, sample, train, evaluate, run.
Every verb that involves randomness accepts --seed, which overrides both the
run seed and the synthetic-dataset seed from the config file. The cache root
honours the MOTIONSCORE_CACHE environment variable.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from .cache import CACHE_ENV
from .config import PipelineConfig, load_config
from .datasets import DatasetManifest, ingest
from .errors import MotionScoreError
from .flow import TvL1Params
from .pipeline import (Pipeline, extract_flow_dir, extract_mb_dir, pipeline_run,
                       render_report, sample_manifest)
from .synthetic import generate_synthetic
from .training import FoldPlan, evaluate

log = logging.getLogger("motionscore")


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed,
                      training=replace(cfg.training, seed=args.seed))
        if cfg.dataset.synth is not None:
            cfg = replace(cfg, dataset=replace(
                cfg.dataset, synth=replace(cfg.dataset.synth, rng_seed=args.seed)))
    return cfg


def _parse_tvl1_overrides(pairs) -> TvL1Params:
    kwargs = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = {"lambda": "lam"}.get(key, key)
        if key in ("pyramid_levels", "warps_per_level", "iterations_per_warp"):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return TvL1Params(**kwargs)


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    if cfg.dataset.synth is None:
        raise SystemExit("config has no dataset.synth section")
    out = Path(args.out) if args.out else Path(cfg.workdir) / "dataset"
    manifest = generate_synthetic(cfg.dataset.synth, out)
    print(f"generated {len(manifest.entries)} clips under {out}")
    return 0


def cmd_ingest(args) -> int:
    manifest = ingest(args.root, args.manifest)
    subjects = manifest.subjects()
    print(f"ok: {len(manifest.entries)} clips, {len(subjects)} subjects")
    return 0


def cmd_extract_flow(args) -> int:
    params = _parse_tvl1_overrides(args.param)
    written = extract_flow_dir(args.input, args.out, params)
    print(f"wrote {len(written)} flow fields to {args.out}")
    return 0


def cmd_extract_mb(args) -> int:
    written = extract_mb_dir(args.input, args.out)
    print(f"wrote {len(written)} motion-boundary fields to {args.out}")
    return 0


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    pipe = Pipeline(cfg)
    manifest = pipe.ensure_dataset()
    lines = sample_manifest(cfg, manifest, args.mode, args.modality)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(lines)} snippet lines to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    if args.task:
        cfg = replace(cfg, task={"hand": "hand_movement", "gait": "gait"}[args.task])
    if args.modality not in cfg.modalities:
        cfg = replace(cfg, modalities=(args.modality,))
    pipe = Pipeline(cfg)
    manifest = pipe.ensure_dataset()
    plan = pipe.fold_plan(manifest)
    if not 0 <= args.fold < plan.k:
        raise SystemExit(f"fold {args.fold} outside 0..{plan.k - 1}")
    ckpt = pipe.ensure_model(manifest, plan, args.modality, args.fold)
    dest = Path(cfg.workdir) / "models" / args.modality / f"fold{args.fold}.ckpt"
    dest.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(ckpt, dest)
    print(f"trained {args.modality} fold {args.fold}: {dest}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    modalities = tuple(args.fuse.split(","))
    cfg = replace(cfg, modalities=modalities)
    pipe = Pipeline(cfg)
    manifest = pipe.ensure_dataset()
    plan = FoldPlan.load(args.plan)
    models_dir = Path(args.models)
    model_paths = {}
    for m in modalities:
        for fold in range(plan.k):
            path = models_dir / m / f"fold{fold}.ckpt"
            if not path.exists():
                raise SystemExit(f"missing model checkpoint {path}")
            model_paths[(m, fold)] = path
    report = pipe.evaluate_models(manifest, plan, model_paths)
    text = render_report(cfg, plan, report)
    out = Path(cfg.workdir) / "report.txt"
    out.write_text(text)
    sys.stdout.write(text)
    print(f"report written to {out}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    result = pipeline_run(cfg, workdir=Path(args.workdir) if args.workdir else None)
    sys.stdout.write(result.report_text)
    print(f"report written to {result.report_path} "
          f"(cache: {result.cache_hits} hits, {result.cache_misses} misses)",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionscore",
        description="Video motion-assessment pipeline: optical flow, motion "
                    "boundaries, attention-weighted snippet scoring.",
        epilog=f"Cache root override: ${CACHE_ENV}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seed=True):
        p.add_argument("--config", required=True, help="pipeline config YAML")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override run and dataset seeds")

    p = sub.add_parser("synth", help="render the synthetic dataset")
    add_common(p)
    p.add_argument("--out", help="output root (default <workdir>/dataset)")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="validate a dataset manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("extract-flow", help="optical flow for one frame directory")
    p.add_argument("--in", dest="input", required=True, help="directory of PNG frames")
    p.add_argument("--out", required=True, help="output .flo directory")
    p.add_argument("--param", action="append", metavar="k=v",
                   help="TV-L1 parameter override (e.g. lambda=0.2)")
    p.set_defaults(fn=cmd_extract_flow)

    p = sub.add_parser("extract-mb", help="motion boundaries for one flow directory")
    p.add_argument("--in", dest="input", required=True, help="directory of .flo files")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extract_mb)

    p = sub.add_parser("sample", help="emit the snippet-sampling manifest")
    add_common(p)
    p.add_argument("--mode", choices=("train", "test"), required=True)
    p.add_argument("--modality", choices=("rgb", "flow", "mb"), default="rgb")
    p.add_argument("--out", help="write lines to a file instead of stdout")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("train", help="train one modality on one fold")
    add_common(p)
    p.add_argument("--task", choices=("hand", "gait"))
    p.add_argument("--modality", choices=("rgb", "flow", "mb"), required=True)
    p.add_argument("--fold", type=int, required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate trained fold models with fusion")
    add_common(p)
    p.add_argument("--plan", required=True, help="folds.json")
    p.add_argument("--models", required=True, help="directory of <modality>/fold<i>.ckpt")
    p.add_argument("--fuse", required=True, help="comma-separated modalities")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline: flow, boundaries, training, report")
    add_common(p)
    p.add_argument("--workdir", help="override the config workdir")
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MotionScoreError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
