"""Command line entry point.

Subcommands: ``train`` fits a model and writes a bundle directory;
``eval`` scores a trained bundle against a disjoint manifest; ``cv``
runs leave-one-identity-out cross-validation over a config grid;
``bench`` times the training phases per config; ``synth`` renders the
built-in texture corpus.

Exit codes: 0 on success, 2 for configuration problems, 3 for data
problems, 4 for numerical failures. Stage errors inherit the code of
their underlying cause.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import Sequence

from .config import cv_grid, expand_grid, load_config, parse_kv_file
from .dataset import load_manifest, split_identity_disjoint, write_manifest
from .errors import (
    ConfigError,
    NumericalError,
    PipelineError,
    VisualWordsError,
)
from .kernels import gram_matrix, save_gram
from .pipeline import (
    PHASES,
    benchmark_timing,
    cross_validate,
    dump_keypoints,
    evaluate,
    load_bundle,
    train_and_save,
)
from .report import (
    bench_csv,
    cv_csv,
    eval_text,
    write_eval_artifacts,
)
from .synth import (
    DEFAULT_CLASSES,
    DEFAULT_IDENTITIES,
    DEFAULT_PER_CLASS,
    IMAGE_SIZE,
    generate_corpus,
)


def _exit_code(err: VisualWordsError) -> int:
    if isinstance(err, PipelineError):
        cause = err.__cause__
        if isinstance(cause, VisualWordsError) and cause is not err:
            return _exit_code(cause)
        return 3
    if isinstance(err, ConfigError):
        return 2
    if isinstance(err, NumericalError):
        return 4
    return 3


def _print_timings(timings: dict[str, float]) -> None:
    parts = [f"{p} {timings[p]:.3f}s" for p in PHASES if p in timings]
    parts.append(f"total {timings.get('total', 0.0):.3f}s")
    print("timings: " + "  ".join(parts))


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.rcm_flat:
        config = replace(config, rcm_flat=True)

    manifest = args.manifest or config.train_manifest
    if not manifest:
        raise ConfigError(
            "no manifest: pass --manifest or set train_manifest in the config"
        )
    entries = load_manifest(manifest)
    id_base = os.path.dirname(os.path.abspath(manifest))

    if args.split_fraction is not None:
        split = split_identity_disjoint(
            entries, args.split_fraction, seed=args.split_seed
        )
        os.makedirs(args.out, exist_ok=True)
        holdout = os.path.join(args.out, "holdout.csv")
        write_manifest(holdout, split.test)
        print(
            f"held out {len(split.test)} images "
            f"({len(split.test_identities())} identities) -> {holdout}"
        )
        entries = split.train

    bundle, timings = train_and_save(config, entries, args.out, id_base)
    if args.dump_keypoints:
        dump_keypoints(
            entries, config, os.path.join(args.out, "keypoints"), id_base
        )
    if args.save_gram:
        gram = gram_matrix(
            bundle.train_items,
            kernel=config.kernel,
            ids=bundle.train_ids,
            level=config.pyramid_level,
        )
        save_gram(gram, os.path.join(args.out, "gram.bin"))

    print(f"trained {config.describe()}")
    print(
        f"bundle: {args.out} ({len(bundle.train_ids)} images, "
        f"{len(bundle.model.classes)} classes)"
    )
    _print_timings(timings)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    entries = load_manifest(args.manifest)
    id_base = os.path.dirname(os.path.abspath(args.manifest))
    report = evaluate(bundle, entries, id_base)

    out_dir = args.out or os.path.join(args.bundle, "eval")
    heading = bundle.config.describe()
    write_eval_artifacts(report, out_dir, heading=heading, svg=args.svg)

    print(eval_text(report, heading), end="")
    print(f"reports: {out_dir}")
    enc = report.timings.get("encode", 0.0)
    ker = report.timings.get("kernel", 0.0)
    pred = report.timings.get("predict", 0.0)
    print(
        f"timings: encode {enc:.3f}s  kernel {ker:.3f}s  "
        f"predict {pred:.3f}s  total {report.timings.get('total', 0.0):.3f}s"
    )
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    mapping = parse_kv_file(args.config_grid)
    configs = cv_grid(mapping)
    entries = load_manifest(args.manifest)
    id_base = os.path.dirname(os.path.abspath(args.manifest))
    result = cross_validate(configs, entries, id_base)

    table = cv_csv(result)
    print(table, end="")
    best_row = result.rows[result.best_index]
    print(f"best: {best_row.config.describe()} mean={best_row.mean!r}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
        print(f"table: {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    mapping = parse_kv_file(args.configs)
    configs = expand_grid(mapping)
    entries = load_manifest(args.manifest)
    id_base = os.path.dirname(os.path.abspath(args.manifest))
    rows = benchmark_timing(configs, entries, id_base)

    table = bench_csv(rows)
    print(table, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
        print(f"table: {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    manifest = generate_corpus(
        args.out,
        classes=args.classes,
        per_class=args.per_class,
        identities=args.identities,
        seed=args.seed,
        size=args.size,
    )
    print(f"manifest: {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vv",
        description="visual-words image classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a bundle")
    p.add_argument("--config", required=True, help="run config file")
    p.add_argument("--manifest", help="training manifest CSV")
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument(
        "--split-fraction",
        type=float,
        default=None,
        help="hold out an identity-disjoint test split of this train "
        "fraction; the holdout manifest lands in the bundle directory",
    )
    p.add_argument(
        "--split-seed", type=int, default=0, help="seed for the holdout split"
    )
    p.add_argument(
        "--rcm-flat",
        action="store_true",
        help="flatten grouped words into a 1-D histogram instead of the "
        "TF-IDF signature",
    )
    p.add_argument(
        "--dump-keypoints",
        action="store_true",
        help="write per-image keypoint CSVs next to the bundle",
    )
    p.add_argument(
        "--save-gram",
        action="store_true",
        help="also write the training Gram matrix into the bundle",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a bundle on a test manifest")
    p.add_argument("--bundle", required=True, help="bundle directory")
    p.add_argument("--manifest", required=True, help="test manifest CSV")
    p.add_argument(
        "--out", help="report directory (default: <bundle>/eval)"
    )
    p.add_argument(
        "--svg", action="store_true", help="also write a recall bar chart"
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "cv", help="leave-one-identity-out CV over a config grid"
    )
    p.add_argument("--config-grid", required=True, help="grid config file")
    p.add_argument("--manifest", required=True, help="training manifest CSV")
    p.add_argument("--out", help="also write the score table CSV here")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="time the training phases per config")
    p.add_argument("--configs", required=True, help="config (grid) file")
    p.add_argument("--manifest", required=True, help="training manifest CSV")
    p.add_argument("--out", help="also write the timing table CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="render the synthetic texture corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--classes", type=int, default=DEFAULT_CLASSES)
    p.add_argument("--per-class", type=int, default=DEFAULT_PER_CLASS)
    p.add_argument("--identities", type=int, default=DEFAULT_IDENTITIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=IMAGE_SIZE)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VisualWordsError as err:
        print(f"error: {err}", file=sys.stderr)
        return _exit_code(err)


if __name__ == "__main__":
    sys.exit(main())
