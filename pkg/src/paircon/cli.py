"""Command line entry point: prepare, run, train, explain, report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import EmotionLabel, Role, load_dataset, save_image_directory, save_npz, write_fer_csv
from .experiment import (
    SpecError,
    emit_report,
    load_model_from_checkpoint,
    load_spec,
    load_spec_datasets,
    read_rows,
    run_experiment,
)

logger = logging.getLogger("paircon")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", type=Path, help="key=value configuration file")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--seed", type=int, help="base seed (overrides the config's 'seed')")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paircon", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest, preprocess and cache datasets")
    _common(p)
    p.add_argument("--synthetic", action="store_true", help="generate the glyph dataset pair instead of reading data paths")
    p.add_argument("--n-a", type=int, default=280, help="synthetic dataset A size")
    p.add_argument("--n-b", type=int, default=2800, help="synthetic dataset B size")

    p = sub.add_parser("run", help="run the full experiment grid")
    _common(p)
    p.add_argument("--save-checkpoints", action="store_true")

    p = sub.add_parser("train", help="run all repetitions of a single grid cell")
    _common(p)
    p.add_argument("--no-checkpoints", action="store_true")

    p = sub.add_parser("explain", help="Grad-CAM overlays for checkpoints over an image set")
    _common(p)
    p.add_argument("--checkpoint", type=Path, action="append", required=True)
    p.add_argument("--images", type=Path, required=True, help="image directory, FER csv or .npz cache")
    p.add_argument("--target", help="explain this class instead of each image's own label")
    p.add_argument("--scale", type=int, default=4, help="upscale factor of the PNGs")

    p = sub.add_parser("report", help="re-aggregate an existing rows.csv")
    _common(p)
    p.add_argument("--rows", type=Path, required=True)
    return parser


def cmd_prepare(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    if args.synthetic:
        from .synthetic import make_glyph_pair

        a, b = make_glyph_pair(args.n_a, args.n_b, seed=args.seed or 0)
        save_image_directory(a, args.out / "a_images")
        write_fer_csv(b, args.out / "b.csv")
    else:
        spec = load_spec(args.config, args.overrides, args.seed)
        if spec.dataset_a_path is None:
            raise SpecError("data.a_path is required")
        a = load_dataset(spec.dataset_a_path, Role.A)
        b = load_dataset(spec.dataset_b_path, Role.B) if spec.dataset_b_path else None
    save_npz(a, args.out / "a.npz")
    print(f"A: {len(a)} images, class counts {a.class_counts().tolist()} -> {args.out / 'a.npz'}")
    if b is not None:
        save_npz(b, args.out / "b.npz")
        print(f"B: {len(b)} images, class counts {b.class_counts().tolist()} -> {args.out / 'b.npz'}")
    return 0


def _run(args, single_cell: bool) -> int:
    spec = load_spec(args.config, args.overrides, args.seed)
    if single_cell and len(spec.cells()) != 1:
        raise SpecError(f"train runs a single cell, the config describes {len(spec.cells())}; narrow it with --set")
    datasets = load_spec_datasets(spec)
    outcome = run_experiment(
        spec,
        args.out,
        jobs=args.jobs,
        datasets=datasets,
        save_checkpoints=(not args.no_checkpoints) if single_cell else args.save_checkpoints,
        record_batches=single_cell,
    )
    print(f"{len(outcome.rows)} runs completed, {len(outcome.failures)} failed; report in {args.out}")
    for f in outcome.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return outcome.exit_code


def cmd_explain(args) -> int:
    from .explain import grad_cam, overlay_filename, render_overlay, save_overlay

    images = load_dataset(args.images, Role.A)
    target_override = EmotionLabel.from_name(args.target) if args.target else None
    args.out.mkdir(parents=True, exist_ok=True)
    n = 0
    for ck_path in args.checkpoint:
        model, ck = load_model_from_checkpoint(ck_path)
        rep = ck.meta.get("repetition", 0)
        for im in images:
            target = target_override if target_override is not None else im.label
            cam = grad_cam(model, im.pixels, target)
            rgb = render_overlay(im.pixels, cam, scale=args.scale)
            save_overlay(rgb, args.out / overlay_filename(im.id, target, rep))
            n += 1
    print(f"wrote {n} overlays to {args.out}")
    return 0


def cmd_report(args) -> int:
    rows = read_rows(args.rows)
    if not rows:
        raise SpecError(f"{args.rows} holds no rows")
    emit_report(rows, args.out)
    print(f"report for {len(rows)} rows written to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "prepare":
            return cmd_prepare(args)
        if args.command == "run":
            return _run(args, single_cell=False)
        if args.command == "train":
            return _run(args, single_cell=True)
        if args.command == "explain":
            return cmd_explain(args)
        return cmd_report(args)
    except (SpecError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
